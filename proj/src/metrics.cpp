#include "paragen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "paragen/errors.hpp"

namespace paragen::metrics {

namespace {

// Pairwise summation keeps corpus means order-stable and well conditioned.
double pairwise_sum(const double* xs, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += xs[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(xs, half) + pairwise_sum(xs + half, n - half);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return pairwise_sum(xs.data(), xs.size()) / static_cast<double>(xs.size());
}

}  // namespace

NGramCounts count_ngrams(const Tokens& tokens, int n) {
    if (n < 1) throw InputError("count_ngrams: order must be >= 1");
    NGramCounts out;
    out.n = n;
    const int len = static_cast<int>(tokens.size());
    out.total = std::max(0, len - n + 1);
    for (int i = 0; i + n <= len; ++i) {
        Tokens gram(tokens.begin() + i, tokens.begin() + i + n);
        ++out.counts[std::move(gram)];
    }
    return out;
}

double bleu(const Tokens& candidate, const std::vector<Tokens>& references,
            int max_n) {
    if (references.empty())
        throw InputError("bleu: at least one reference required");
    if (max_n < 1) throw InputError("bleu: max_n must be >= 1");
    if (candidate.empty()) return 0.0;

    const int c = static_cast<int>(candidate.size());

    // Closest reference length; ties go to the shorter reference.
    int r = static_cast<int>(references[0].size());
    for (const Tokens& ref : references) {
        const int len = static_cast<int>(ref.size());
        if (std::abs(len - c) < std::abs(r - c) ||
            (std::abs(len - c) == std::abs(r - c) && len < r)) {
            r = len;
        }
    }
    const double bp = (r <= c) ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);

    double log_sum = 0.0;
    int used_orders = 0;
    for (int n = 1; n <= max_n; ++n) {
        const NGramCounts cand = count_ngrams(candidate, n);
        if (cand.total == 0) continue;  // candidate too short for this order
        std::map<Tokens, int> ref_max;
        for (const Tokens& ref : references) {
            for (const auto& [gram, cnt] : count_ngrams(ref, n).counts) {
                int& slot = ref_max[gram];
                slot = std::max(slot, cnt);
            }
        }
        long matched = 0;
        for (const auto& [gram, cnt] : cand.counts) {
            auto it = ref_max.find(gram);
            if (it != ref_max.end()) matched += std::min(cnt, it->second);
        }
        const double p = (matched > 0)
                             ? static_cast<double>(matched) / cand.total
                             : 1.0 / (cand.total + 1);  // add-one smoothing
        log_sum += std::log(p);
        ++used_orders;
    }
    if (used_orders == 0) return 0.0;
    return bp * std::exp(log_sum / used_orders);
}

std::optional<double> self_bleu(const std::vector<Tokens>& candidates,
                                int max_n) {
    if (candidates.size() < 2) return std::nullopt;
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::vector<Tokens> refs;
        refs.reserve(candidates.size() - 1);
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (j != i) refs.push_back(candidates[j]);
        }
        scores.push_back(bleu(candidates[i], refs, max_n));
    }
    return mean_of(scores);
}

int lcs_length(const Tokens& a, const Tokens& b) {
    const int la = static_cast<int>(a.size());
    const int lb = static_cast<int>(b.size());
    if (la == 0 || lb == 0) return 0;
    std::vector<int> prev(lb + 1, 0), cur(lb + 1, 0);
    for (int i = 1; i <= la; ++i) {
        for (int j = 1; j <= lb; ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[lb];
}

std::optional<RougeScore> rouge_n(const Tokens& candidate,
                                  const Tokens& reference, int n) {
    const NGramCounts ref = count_ngrams(reference, n);
    if (ref.total == 0) return std::nullopt;
    const NGramCounts cand = count_ngrams(candidate, n);
    long overlap = 0;
    for (const auto& [gram, cnt] : cand.counts) {
        auto it = ref.counts.find(gram);
        if (it != ref.counts.end()) overlap += std::min(cnt, it->second);
    }
    RougeScore s;
    s.precision =
        cand.total > 0 ? static_cast<double>(overlap) / cand.total : 0.0;
    s.recall = static_cast<double>(overlap) / ref.total;
    s.f = (s.precision + s.recall > 0.0)
              ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
              : 0.0;
    return s;
}

RougeScore rouge_l(const Tokens& candidate, const Tokens& reference,
                   double beta) {
    RougeScore s;
    if (candidate.empty() || reference.empty()) return s;
    const int lcs = lcs_length(candidate, reference);
    s.precision = static_cast<double>(lcs) / candidate.size();
    s.recall = static_cast<double>(lcs) / reference.size();
    const double b2 = beta * beta;
    const double denom = s.recall + b2 * s.precision;
    s.f = denom > 0.0 ? (1.0 + b2) * s.precision * s.recall / denom : 0.0;
    return s;
}

namespace {

bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool has_vowel(const std::string& s, std::size_t end) {
    for (std::size_t i = 0; i < end && i < s.size(); ++i) {
        if (is_vowel(s[i])) return true;
    }
    return false;
}

bool ends_with(const std::string& s, const char* suffix) {
    const std::size_t n = std::char_traits<char>::length(suffix);
    return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

namespace {

std::string stem_pass(const std::string& word) {
    std::string w = word;
    if (w.size() < 3) return w;

    // plurals
    if (ends_with(w, "sses")) {
        w.erase(w.size() - 2);
    } else if (ends_with(w, "ies") && w.size() >= 5) {
        w.erase(w.size() - 3);
        w += 'y';
    } else if (ends_with(w, "ss")) {
        // glass, miss: keep
    } else if (w.back() == 's') {
        const char before = w[w.size() - 2];
        if (before != 's' && before != 'u' && before != 'i') w.pop_back();
    }

    // -ed / -ing, with stem repair
    bool stripped = false;
    if (ends_with(w, "ied") && w.size() >= 4) {
        w.erase(w.size() - 3);
        w += 'y';
    } else if (ends_with(w, "eed")) {
        // agreed -> agree, but "need"/"feed" keep their stem; either way the
        // word never falls through to the plain -ed rule
        if (w.size() >= 4 && has_vowel(w, w.size() - 3)) w.pop_back();
    } else if (ends_with(w, "ed") && w.size() >= 4 &&
               has_vowel(w, w.size() - 2)) {
        w.erase(w.size() - 2);
        stripped = true;
    } else if (ends_with(w, "ing") && w.size() >= 5 &&
               has_vowel(w, w.size() - 3)) {
        w.erase(w.size() - 3);
        stripped = true;
    }
    if (stripped) {
        const std::size_t n = w.size();
        if (n >= 3 && w[n - 1] == w[n - 2] && !is_vowel(w[n - 1]) &&
            w[n - 1] != 'l' && w[n - 1] != 's' && w[n - 1] != 'z') {
            w.pop_back();  // stopped -> stopp -> stop
        } else if (n == 3 && !is_vowel(w[0]) && is_vowel(w[1]) &&
                   !is_vowel(w[2]) && w[2] != 'w' && w[2] != 'x' &&
                   w[2] != 'y') {
            w += 'e';  // hoping -> hop -> hope
        }
    }

    // adverbs
    if (ends_with(w, "ily") && w.size() >= 5) {
        w.erase(w.size() - 3);
        w += 'y';
    } else if (ends_with(w, "ly") && w.size() >= 5) {
        w.erase(w.size() - 2);
    }
    return w;
}

}  // namespace

std::string stem(const std::string& word) {
    // Every mutating pass strictly shortens the word, so this terminates;
    // running to a fixed point is what makes stem idempotent.
    std::string w = word;
    for (;;) {
        std::string next = stem_pass(w);
        if (next == w) return w;
        w = std::move(next);
    }
}

bool are_synonyms(const corruption::SynonymLexicon& synonyms,
                  const std::string& a, const std::string& b) {
    if (const auto* list = synonyms.find(a)) {
        if (std::find(list->begin(), list->end(), b) != list->end())
            return true;
    }
    if (const auto* list = synonyms.find(b)) {
        if (std::find(list->begin(), list->end(), a) != list->end())
            return true;
    }
    return false;
}

double meteor(const Tokens& candidate, const Tokens& reference,
              const corruption::SynonymLexicon& synonyms,
              const MeteorConfig& cfg) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const int nc = static_cast<int>(candidate.size());
    const int nr = static_cast<int>(reference.size());

    std::vector<int> match(nc, -1);  // candidate index -> reference index
    std::vector<char> taken(nr, 0);
    auto run_stage = [&](auto&& matches) {
        for (int i = 0; i < nc; ++i) {
            if (match[i] >= 0) continue;
            for (int j = 0; j < nr; ++j) {
                if (taken[j]) continue;
                if (matches(i, j)) {
                    match[i] = j;
                    taken[j] = 1;
                    break;
                }
            }
        }
    };

    run_stage([&](int i, int j) { return candidate[i] == reference[j]; });

    std::vector<std::string> cand_stem(nc), ref_stem(nr);
    for (int i = 0; i < nc; ++i) cand_stem[i] = stem(candidate[i]);
    for (int j = 0; j < nr; ++j) ref_stem[j] = stem(reference[j]);
    run_stage([&](int i, int j) { return cand_stem[i] == ref_stem[j]; });

    run_stage([&](int i, int j) {
        return are_synonyms(synonyms, candidate[i], reference[j]);
    });

    int m = 0;
    int chunks = 0;
    int prev_i = -2, prev_j = -2;
    for (int i = 0; i < nc; ++i) {
        if (match[i] < 0) continue;
        ++m;
        if (!(i == prev_i + 1 && match[i] == prev_j + 1)) ++chunks;
        prev_i = i;
        prev_j = match[i];
    }
    if (m == 0) return 0.0;

    const double precision = static_cast<double>(m) / nc;
    const double recall = static_cast<double>(m) / nr;
    const double w = cfg.recall_weight;
    const double fmean =
        (1.0 + w) * precision * recall / (recall + w * precision);
    const double penalty =
        cfg.penalty_weight *
        std::pow(static_cast<double>(chunks) / m, cfg.penalty_power);
    return fmean * (1.0 - penalty);
}

std::string protocol_name(Protocol p) {
    return p == Protocol::kBestCandidate ? "best_candidate" : "top3_mean";
}

Protocol protocol_from_name(const std::string& name) {
    if (name == "best_candidate") return Protocol::kBestCandidate;
    if (name == "top3_mean") return Protocol::kTop3Mean;
    throw InputError("unknown evaluation protocol: " + name);
}

MetricReport evaluate(const std::vector<EvalExample>& examples,
                      Protocol protocol,
                      const corruption::SynonymLexicon& synonyms,
                      int bleu_max_n) {
    MetricReport rep;
    rep.protocol = protocol;
    rep.bleu_max_n = bleu_max_n;

    std::vector<double> bleu_s, r1_s, r2_s, rl_s, met_s, sb_s;
    int r1_skip = 0, r2_skip = 0, sb_skip = 0;

    for (const EvalExample& ex : examples) {
        ++rep.pairs_total;
        if (ex.candidates.empty()) {
            ++rep.pairs_skipped;
            continue;
        }
        const std::size_t considered =
            protocol == Protocol::kTop3Mean
                ? std::min<std::size_t>(3, ex.candidates.size())
                : ex.candidates.size();

        auto aggregate = [&](auto&& score_fn) {
            std::vector<double> scores;
            scores.reserve(considered);
            for (std::size_t i = 0; i < considered; ++i)
                scores.push_back(score_fn(ex.candidates[i]));
            return protocol == Protocol::kBestCandidate
                       ? *std::max_element(scores.begin(), scores.end())
                       : mean_of(scores);
        };

        bleu_s.push_back(aggregate([&](const Tokens& cand) {
            return bleu(cand, {ex.reference}, bleu_max_n);
        }));
        if (ex.reference.empty()) {
            ++r1_skip;
            ++r2_skip;
        } else {
            r1_s.push_back(aggregate([&](const Tokens& cand) {
                return rouge_n(cand, ex.reference, 1)->f;
            }));
            if (ex.reference.size() >= 2) {
                r2_s.push_back(aggregate([&](const Tokens& cand) {
                    return rouge_n(cand, ex.reference, 2)->f;
                }));
            } else {
                ++r2_skip;
            }
        }
        rl_s.push_back(aggregate(
            [&](const Tokens& cand) { return rouge_l(cand, ex.reference).f; }));
        met_s.push_back(aggregate([&](const Tokens& cand) {
            return meteor(cand, ex.reference, synonyms);
        }));

        // Diversity is a property of the whole candidate set.
        if (auto sb = self_bleu(ex.candidates, bleu_max_n)) {
            sb_s.push_back(*sb);
        } else {
            ++sb_skip;
        }
    }

    if (rep.pairs_total == rep.pairs_skipped)
        throw InputError("evaluate: no pairs with valid candidates");

    auto fill = [](MetricAggregate& agg, const std::vector<double>& scores,
                   int skipped) {
        agg.mean = mean_of(scores);
        agg.evaluated = static_cast<int>(scores.size());
        agg.skipped = skipped;
    };
    fill(rep.bleu, bleu_s, 0);
    fill(rep.rouge1, r1_s, r1_skip);
    fill(rep.rouge2, r2_s, r2_skip);
    fill(rep.rouge_l, rl_s, 0);
    fill(rep.meteor, met_s, 0);
    fill(rep.self_bleu, sb_s, sb_skip);
    return rep;
}

namespace {

nlohmann::json aggregate_json(const MetricAggregate& a) {
    return {{"mean", a.mean},
            {"evaluated", a.evaluated},
            {"skipped", a.skipped}};
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["protocol"] = protocol_name(report.protocol);
    j["bleu_max_n"] = report.bleu_max_n;
    j["pairs"] = {{"total", report.pairs_total},
                  {"skipped_no_candidates", report.pairs_skipped}};
    j["metrics"] = {{"bleu", aggregate_json(report.bleu)},
                    {"self_bleu", aggregate_json(report.self_bleu)},
                    {"rouge1", aggregate_json(report.rouge1)},
                    {"rouge2", aggregate_json(report.rouge2)},
                    {"rougeL", aggregate_json(report.rouge_l)},
                    {"meteor", aggregate_json(report.meteor)}};
    return j.dump(2);
}

std::string report_table(const MetricReport& report) {
    std::ostringstream os;
    os << "protocol: " << protocol_name(report.protocol) << "\n";
    os << "pairs: " << report.pairs_total << " total, " << report.pairs_skipped
       << " without candidates\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %8s\n", "metric",
                  "mean", "evaluated", "skipped");
    os << line;
    auto row = [&](const char* name, const MetricAggregate& a) {
        std::snprintf(line, sizeof(line), "%-10s %10.4f %10d %8d\n", name,
                      a.mean, a.evaluated, a.skipped);
        os << line;
    };
    row("bleu", report.bleu);
    row("self-bleu", report.self_bleu);
    row("rouge-1", report.rouge1);
    row("rouge-2", report.rouge2);
    row("rouge-l", report.rouge_l);
    row("meteor", report.meteor);
    return os.str();
}

}  // namespace paragen::metrics
