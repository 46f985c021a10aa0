// Text ingestion: tokenization, vocabulary construction, dataset splitting,
// and encoding of reconstruction training examples.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "paragen/text.hpp"

namespace paragen::corpus {

struct Sentence {
    std::string raw;
    std::vector<std::string> tokens;  // always tokenize(raw)

    static Sentence from_raw(std::string raw_text) {
        Sentence s;
        s.tokens = text::tokenize(raw_text);
        s.raw = std::move(raw_text);
        return s;
    }
};

// Special token ids occupy the first five slots of every vocabulary.
enum Special : int {
    kPad = 0,
    kUnk = 1,
    kBos = 2,
    kSep = 3,
    kEos = 4,
};
inline constexpr int kNumSpecials = 5;

// Surface forms used in the persisted vocabulary file. The tokenizer splits
// '[' and ']' into their own tokens, so these can never collide with corpus
// tokens.
extern const char* const kSpecialNames[kNumSpecials];

class Vocabulary {
  public:
    Vocabulary();

    // Returns the id for a token, UNK if absent.
    int id(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;  // throws InputError when out of range
    int size() const { return static_cast<int>(id_to_token_.size()); }
    int min_freq() const { return min_freq_; }

    // Appends a non-special token; id is size() before the call.
    int add_token(const std::string& token);

    // Hash over the full id -> token list; stored in checkpoints so a model
    // is never run against the wrong vocabulary.
    std::uint64_t hash() const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    void set_min_freq(int f) { min_freq_ = f; }

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    int min_freq_ = 2;
};

struct TrainingExample {
    std::vector<int> input_ids;  // BOS ids(S) SEP ids(T) EOS
    int sep_index = 0;
    int source_len = 0;
    int target_len = 0;
    bool truncated = false;
};

struct DatasetSplit {
    std::vector<Sentence> train;
    std::vector<Sentence> valid;
    std::vector<std::pair<Sentence, Sentence>> test_pairs;
};

struct PairRecord {
    std::string question1;
    std::string question2;
    int is_duplicate = 0;
};

struct PairDataset {
    std::vector<PairRecord> records;
    int skipped_rows = 0;
};

// Vocabulary over all tokens with frequency >= min_freq, ids assigned by
// frequency descending then lexicographic. Specials always present.
Vocabulary build_vocabulary(const std::vector<Sentence>& corpus, int min_freq);

// TSV with header question1/question2/is_duplicate, quoted fields supported.
// Malformed rows are skipped and counted. Missing file or column is fatal.
PairDataset load_pair_dataset(const std::string& path);

// UTF-8 plain text, one sentence per line; blank lines skipped.
std::vector<Sentence> load_plain_corpus(const std::string& path);

// Deduplicates by whitespace-normalized raw text, shuffles deterministically
// under the seed, splits by train_frac. Fatal with fewer than 2 unique
// sentences.
DatasetSplit split_corpus(std::vector<Sentence> sentences, double train_frac,
                          std::uint64_t seed);

// Layout: BOS ids(S) SEP ids(T) EOS, unknown tokens mapped to UNK. When
// max_len > 0 and the sequence would exceed it, the target side is truncated
// and the example flagged.
TrainingExample encode(const std::vector<std::string>& source_tokens,
                       const std::vector<std::string>& target_tokens,
                       const Vocabulary& vocab, int max_len = 0);

// Drops specials; exact inverse of encode for in-vocabulary tokens.
// Out-of-range ids are fatal.
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace paragen::corpus
