#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paragen/corruption.hpp"

// Reference-based text metrics. All functions are pure; token lists are
// compared case-sensitively (callers normalize via text::tokenize).
namespace paragen::metrics {

using Tokens = std::vector<std::string>;

// Counts of distinct n-grams. total == max(0, len - n + 1).
struct NGramCounts {
    int n = 1;
    std::map<Tokens, int> counts;
    int total = 0;
};

NGramCounts count_ngrams(const Tokens& tokens, int n);

// Clipped-precision BLEU with brevity penalty.
//   - clip against the max count of each n-gram across references
//   - orders with zero candidate n-grams drop out of the geometric mean
//   - orders with candidate n-grams but zero matches use add-one smoothing:
//     p_n = 1 / (total_n + 1)
//   - BP = min(1, exp(1 - r/c)), r = closest reference length (ties -> shorter)
// Empty candidate scores 0. Throws InputError when references is empty.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references,
            int max_n = 4);

// Mean over candidates of bleu(candidate, all others). nullopt when fewer
// than two candidates (diversity of a singleton is undefined).
std::optional<double> self_bleu(const std::vector<Tokens>& candidates,
                                int max_n = 4);

// Longest common subsequence length, O(|a|*|b|) dynamic program.
int lcs_length(const Tokens& a, const Tokens& b);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

// Clipped n-gram overlap. nullopt when the reference has no n-grams (shorter
// than n); a candidate shorter than n just scores zero.
std::optional<RougeScore> rouge_n(const Tokens& candidate,
                                  const Tokens& reference, int n);

// LCS-based ROUGE. P = LCS/|candidate|, R = LCS/|reference|,
// F = (1+beta^2)PR / (R + beta^2 P); beta=1 is the balanced default, larger
// beta recovers the historical recall-weighted variant. Empty input -> zeros.
RougeScore rouge_l(const Tokens& candidate, const Tokens& reference,
                   double beta = 1.0);

// Suffix-stripping stemmer over lowercase tokens; rule table in
// docs/stemmer.md. Idempotent: stem(stem(w)) == stem(w).
std::string stem(const std::string& word);

// True when b is listed under a or a under b.
bool are_synonyms(const corruption::SynonymLexicon& synonyms,
                  const std::string& a, const std::string& b);

// Unigram-alignment METEOR. Matching runs in three stages (exact, equal
// stems, synonym-lexicon lookup); each stage pairs still-unmatched tokens
// one-to-one, scanning the candidate left to right and taking the leftmost
// unmatched reference token. With m matches, P = m/|candidate|,
// R = m/|reference|, Fmean = (1+w)PR/(R+wP) with w = recall_weight,
// chunks = number of maximal runs contiguous in both sequences,
// Penalty = penalty_weight*(chunks/m)^penalty_power,
// score = Fmean*(1-Penalty). Zero matches (or an empty side) scores 0.
struct MeteorConfig {
    double recall_weight = 9.0;
    double penalty_weight = 0.5;
    double penalty_power = 3.0;
};

double meteor(const Tokens& candidate, const Tokens& reference,
              const corruption::SynonymLexicon& synonyms,
              const MeteorConfig& cfg = MeteorConfig{});

// ---- corpus-level evaluation ----

enum class Protocol { kBestCandidate, kTop3Mean };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);  // InputError on unknown

// One test pair: gold reference plus the valid candidates for its source,
// ordered best-first (the pipeline ranks by cosine to the original).
struct EvalExample {
    Tokens reference;
    std::vector<Tokens> candidates;
};

struct MetricAggregate {
    double mean = 0.0;
    int evaluated = 0;  // pairs contributing to the mean
    int skipped = 0;    // pairs with candidates where this metric is undefined
};

struct MetricReport {
    Protocol protocol = Protocol::kBestCandidate;
    int bleu_max_n = 4;
    MetricAggregate bleu;
    MetricAggregate self_bleu;  // per candidate set, protocol-independent
    MetricAggregate rouge1;
    MetricAggregate rouge2;
    MetricAggregate rouge_l;
    MetricAggregate meteor;
    int pairs_total = 0;
    int pairs_skipped = 0;  // no valid candidates at all
};

// best_candidate: per metric, max over all candidates vs the reference.
// top3_mean: mean over the first min(3, k) candidates (rank order as given).
// Pairs with no candidates are skipped; zero evaluable pairs is fatal.
MetricReport evaluate(const std::vector<EvalExample>& examples,
                      Protocol protocol,
                      const corruption::SynonymLexicon& synonyms,
                      int bleu_max_n = 4);

std::string report_to_json(const MetricReport& report);
std::string report_table(const MetricReport& report);

}  // namespace paragen::metrics
