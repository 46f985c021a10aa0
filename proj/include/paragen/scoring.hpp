#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paragen/corpus.hpp"
#include "paragen/corruption.hpp"
#include "paragen/lm.hpp"
#include "paragen/rng.hpp"

// Candidate generation and cosine filtering: sample paraphrases for a
// sentence, drop near-duplicates of the original, keep the ones whose
// embedding stays close to it. Sets for different sentences are independent
// given (seed, sentence index), so callers may build them in any order or in
// parallel.
namespace paragen::scoring {

// Smoothed inverse document frequency: idf = ln((1+N)/(1+df)) + 1, where df
// counts documents containing the token. Unseen tokens get the maximum
// weight ln(1+N) + 1.
class IdfTable {
  public:
    // One document = one token list; presence per document. Empty corpus is
    // an InputError.
    static IdfTable build(const std::vector<std::vector<std::string>>& docs);

    double idf(const std::string& token) const;
    int corpus_size() const { return n_docs_; }
    std::size_t size() const { return df_.size(); }

    // Text format: first line "#docs N", then "token<TAB>df" sorted by token.
    void save(const std::string& path) const;
    static IdfTable load(const std::string& path);

  private:
    int n_docs_ = 0;
    std::map<std::string, int> df_;
};

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual int dimension() const = 0;
    // Deterministic sentence embedding; throws InputError on empty input.
    virtual std::vector<double> embed(const std::vector<std::string>& tokens) = 0;
};

// IDF-weighted mean of the language model's input-embedding rows. Tokens
// outside the vocabulary contribute the UNK row. Weights are normalized
// before accumulation and tokens aggregated in sorted order, so the result
// is bitwise invariant under token permutation, and a single-token sentence
// returns its embedding row exactly.
class LmMeanIdfEmbedder : public Embedder {
  public:
    LmMeanIdfEmbedder(const Model& model, const corpus::Vocabulary& vocab,
                      IdfTable idf);

    int dimension() const override;
    std::vector<double> embed(const std::vector<std::string>& tokens) override;

  private:
    const Model& model_;
    const corpus::Vocabulary& vocab_;
    IdfTable idf_;
};

// u.v / (|u||v|), clamped to [-1, 1]. Equal dimensions required; an all-zero
// vector has no direction and raises NumericError("degenerate embedding").
double cosine(const std::vector<double>& u, const std::vector<double>& v);

// Character-level Levenshtein distance.
int edit_distance(const std::string& a, const std::string& b);

// Lowercased, whitespace-collapsed, terminal punctuation stripped.
std::string normalize_text(const std::string& text);

// True when the normalized strings are equal or within edit distance
// max(2, ceil(0.05 * len)) of each other, len taken from the normalized
// original.
bool is_near_duplicate(const std::string& candidate, const std::string& original);

enum class CandidateStatus { kRaw, kRejectedDuplicate, kRejectedSimilarity, kValid };

std::string status_name(CandidateStatus s);
CandidateStatus status_from_name(const std::string& name);  // InputError

struct Candidate {
    std::string text;
    std::vector<std::string> tokens;
    std::optional<double> cosine;  // unset for duplicates (never embedded)
    CandidateStatus status = CandidateStatus::kRaw;
    std::string rejection_reason;  // empty unless rejected
};

struct CandidateSet {
    corpus::Sentence original;
    std::vector<Candidate> candidates;  // generation order
    double threshold = 0.75;
    int n_requested = 10;
    std::uint64_t seed = 0;

    std::vector<const Candidate*> valid() const;
};

// Produces raw candidate texts conditioned on a keyword-skeleton prompt.
class CandidateGenerator {
  public:
    virtual ~CandidateGenerator() = default;
    virtual std::vector<std::string> generate(
        const std::vector<std::string>& source_tokens, int n, Rng& rng) = 0;
};

// Samples from a trained model: BOS source SEP -> top-k continuation.
class LmGenerator : public CandidateGenerator {
  public:
    LmGenerator(const Model& model, const corpus::Vocabulary& vocab,
                SampleConfig sample);

    std::vector<std::string> generate(const std::vector<std::string>& source_tokens,
                                      int n, Rng& rng) override;

  private:
    const Model& model_;
    const corpus::Vocabulary& vocab_;
    SampleConfig sample_;
};

struct PipelineConfig {
    int n_requested = 10;
    double threshold = 0.75;
    bool strict_threshold = false;  // reject cosine == threshold when set
    double source_shuffle = 0.0;    // prompt corruption overrides
    double source_synonym = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // InputError on nonsense
};

// The full per-sentence pipeline: prompt construction via inference_source,
// n_requested samples, near-duplicate rejection (against the original and
// against every earlier candidate that reached the cosine gate, so duplicate
// status never depends on the threshold; empty outputs are rejected the same
// way), then cosine filtering of the survivors against the original's
// embedding. Randomness is isolated per sentence via (seed, sentence_index).
CandidateSet build_candidate_set(const corpus::Sentence& original,
                                 CandidateGenerator& generator,
                                 Embedder& embedder,
                                 const corruption::CorruptionConfig& corruption_cfg,
                                 const corruption::SynonymLexicon& lexicon,
                                 const PipelineConfig& cfg,
                                 std::uint64_t sentence_index);

// Valid candidates sorted by cosine descending, generation order breaking
// ties; at most m entries. m < 1 is an InputError.
std::vector<Candidate> select_top_m(const CandidateSet& set, int m);

// Post-hoc invariant check over (de)serialized data: every valid candidate
// must clear the threshold, not be a near-duplicate of the original, and be
// pairwise distinct from other valid candidates by normalized text.
struct VerifyResult {
    int valid = 0;
    int violations = 0;
};
VerifyResult verify_candidate_set(const CandidateSet& set,
                                  bool strict_threshold = false);

// One JSON object per set: {original, candidates:[{text, cosine, status,
// rejection_reason?}], threshold, n_requested, seed}.
std::string to_json_line(const CandidateSet& set);
CandidateSet candidate_set_from_json(const std::string& line);
void save_candidate_sets(const std::string& path,
                         const std::vector<CandidateSet>& sets);
std::vector<CandidateSet> load_candidate_sets(const std::string& path);

}  // namespace paragen::scoring
