// Corruption pipeline: stop-word removal, probabilistic shuffle, probabilistic
// synonym substitution. The corrupted token list is the model's source prompt.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "paragen/corpus.hpp"
#include "paragen/rng.hpp"

namespace paragen::corruption {

struct CorruptionConfig {
    std::unordered_set<std::string> stopwords;
    double shuffle_prob = 0.2;   // one draw per sentence gates a full permutation
    double synonym_prob = 0.2;   // independent draw per surviving token
    std::uint64_t seed = 0;

    void validate() const;  // throws InputError on violated invariants
};

class SynonymLexicon {
  public:
    // Entries must be lowercase single tokens; a token whose only synonym is
    // itself is rejected.
    void add(const std::string& word, std::vector<std::string> synonyms);
    const std::vector<std::string>* find(const std::string& word) const;
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    // File format: word<TAB>syn1,syn2,...  '#' starts a comment line.
    static SynonymLexicon load(const std::string& path);

  private:
    std::unordered_map<std::string, std::vector<std::string>> entries_;
};

struct AppliedOps {
    int stopwords_removed = 0;
    bool shuffled = false;
    int synonyms_replaced = 0;
};

struct CorruptedSource {
    std::vector<std::string> tokens;
    AppliedOps applied_ops;
    bool degenerate = false;  // every token was a stop word; caller should skip
};

// Deletes stop-word tokens, preserving the relative order of survivors.
std::vector<std::string> remove_stopwords(const std::vector<std::string>& tokens,
                                          const std::unordered_set<std::string>& stopwords);

// With probability prob (one draw), a uniform random permutation; otherwise
// identity. Token multiset always preserved.
std::vector<std::string> shuffle_tokens(std::vector<std::string> tokens, double prob,
                                        Rng& rng, bool* fired = nullptr);

// Each token independently replaced with probability prob by a uniformly
// chosen synonym when the lexicon has an entry. Length preserved.
std::vector<std::string> replace_synonyms(std::vector<std::string> tokens,
                                          const SynonymLexicon& lexicon, double prob,
                                          Rng& rng, int* replaced = nullptr);

// Full pipeline: remove_stopwords -> shuffle_tokens -> replace_synonyms.
// A sentence made entirely of stop words yields degenerate == true.
CorruptedSource corrupt(const corpus::Sentence& sentence, const CorruptionConfig& config,
                        const SynonymLexicon& lexicon, Rng& rng);

// Inference-time prompt construction: corrupt with both probabilities forced
// to the given overrides (0 by default), so the prompt is the deterministic
// keyword skeleton.
CorruptedSource inference_source(const corpus::Sentence& sentence,
                                 const CorruptionConfig& config,
                                 const SynonymLexicon& lexicon,
                                 double shuffle_override = 0.0,
                                 double synonym_override = 0.0,
                                 std::uint64_t seed = 0);

// Stop-word file: one token per line, '#' comments allowed.
std::unordered_set<std::string> load_stopwords(const std::string& path);

}  // namespace paragen::corruption
