#include "paragen/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "paragen/errors.hpp"
#include "paragen/text.hpp"

namespace paragen::scoring {

IdfTable IdfTable::build(const std::vector<std::vector<std::string>>& docs) {
    if (docs.empty()) throw InputError("idf: empty document collection");
    IdfTable t;
    t.n_docs_ = static_cast<int>(docs.size());
    for (const auto& doc : docs) {
        std::set<std::string> seen(doc.begin(), doc.end());
        for (const std::string& tok : seen) ++t.df_[tok];
    }
    return t;
}

double IdfTable::idf(const std::string& token) const {
    auto it = df_.find(token);
    const int df = it == df_.end() ? 0 : it->second;
    return std::log((1.0 + n_docs_) / (1.0 + df)) + 1.0;
}

void IdfTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write idf table: " + path);
    out << "#docs " << n_docs_ << "\n";
    for (const auto& [tok, df] : df_) out << tok << '\t' << df << '\n';
}

IdfTable IdfTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read idf table: " + path);
    IdfTable t;
    std::string line;
    if (!std::getline(in, line) || line.rfind("#docs ", 0) != 0)
        throw InputError("idf table missing #docs header: " + path);
    try {
        t.n_docs_ = std::stoi(line.substr(6));
    } catch (const std::exception&) {
        throw InputError("idf table has a bad #docs header: " + path);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw InputError("idf table line without token<TAB>df: " + path);
        try {
            t.df_[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw InputError("idf table has a bad df count: " + path);
        }
    }
    return t;
}

LmMeanIdfEmbedder::LmMeanIdfEmbedder(const Model& model,
                                     const corpus::Vocabulary& vocab,
                                     IdfTable idf)
    : model_(model), vocab_(vocab), idf_(std::move(idf)) {
    if (vocab_.size() != model_.config().vocab_size)
        throw InputError("embedder: vocabulary size does not match the model");
}

int LmMeanIdfEmbedder::dimension() const { return model_.config().d_model; }

std::vector<double> LmMeanIdfEmbedder::embed(
    const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw InputError("embed: empty token list");
    // Aggregating by unique token in sorted order makes the result bitwise
    // independent of token order; normalizing weights before the accumulation
    // keeps a single-token sentence equal to its row exactly.
    std::map<std::string, int> counts;
    for (const std::string& t : tokens) ++counts[t];
    double total_weight = 0.0;
    for (const auto& [tok, cnt] : counts) total_weight += cnt * idf_.idf(tok);

    const int d = model_.config().d_model;
    std::vector<double> out(d, 0.0);
    for (const auto& [tok, cnt] : counts) {
        const double u = cnt * idf_.idf(tok) / total_weight;
        const real* row = model_.token_embedding(vocab_.id(tok));
        for (int i = 0; i < d; ++i) out[i] += u * static_cast<double>(row[i]);
    }
    return out;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw InputError("cosine: dimension mismatch");
    if (u.empty()) throw InputError("cosine: empty vectors");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw NumericError("degenerate embedding");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

int edit_distance(const std::string& a, const std::string& b) {
    const int la = static_cast<int>(a.size());
    const int lb = static_cast<int>(b.size());
    std::vector<int> prev(lb + 1), cur(lb + 1);
    for (int j = 0; j <= lb; ++j) prev[j] = j;
    for (int i = 1; i <= la; ++i) {
        cur[0] = i;
        for (int j = 1; j <= lb; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[lb];
}

std::string normalize_text(const std::string& text) {
    std::string s = text::normalize_whitespace(text::to_lower(text));
    auto is_terminal = [](char c) {
        return c == '.' || c == '!' || c == '?' || c == ',' || c == ';' ||
               c == ':' || c == ' ';
    };
    while (!s.empty() && is_terminal(s.back())) s.pop_back();
    return s;
}

bool is_near_duplicate(const std::string& candidate, const std::string& original) {
    const std::string c = normalize_text(candidate);
    const std::string o = normalize_text(original);
    if (c == o) return true;
    const int limit = std::max(
        2, static_cast<int>(std::ceil(0.05 * static_cast<double>(o.size()))));
    const int gap = std::abs(static_cast<int>(c.size()) - static_cast<int>(o.size()));
    if (gap > limit) return false;  // length difference lower-bounds the distance
    return edit_distance(c, o) <= limit;
}

std::string status_name(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::kRaw: return "raw";
        case CandidateStatus::kRejectedDuplicate: return "rejected_duplicate";
        case CandidateStatus::kRejectedSimilarity: return "rejected_similarity";
        case CandidateStatus::kValid: return "valid";
    }
    throw InputError("unreachable candidate status");
}

CandidateStatus status_from_name(const std::string& name) {
    if (name == "raw") return CandidateStatus::kRaw;
    if (name == "rejected_duplicate") return CandidateStatus::kRejectedDuplicate;
    if (name == "rejected_similarity") return CandidateStatus::kRejectedSimilarity;
    if (name == "valid") return CandidateStatus::kValid;
    throw InputError("unknown candidate status: " + name);
}

std::vector<const Candidate*> CandidateSet::valid() const {
    std::vector<const Candidate*> out;
    for (const Candidate& c : candidates)
        if (c.status == CandidateStatus::kValid) out.push_back(&c);
    return out;
}

LmGenerator::LmGenerator(const Model& model, const corpus::Vocabulary& vocab,
                         SampleConfig sample)
    : model_(model), vocab_(vocab), sample_(sample) {
    if (vocab_.size() != model_.config().vocab_size)
        throw InputError("generator: vocabulary size does not match the model");
    sample_.validate(model_.config().vocab_size);
}

std::vector<std::string> LmGenerator::generate(
    const std::vector<std::string>& source_tokens, int n, Rng& rng) {
    // Room for BOS + source + SEP plus at least one generated position.
    const int max_src = model_.config().max_len - 3;
    std::vector<int> prompt;
    prompt.push_back(corpus::Special::kBos);
    for (const std::string& tok : source_tokens) {
        if (static_cast<int>(prompt.size()) - 1 >= max_src) break;
        prompt.push_back(vocab_.id(tok));
    }
    prompt.push_back(corpus::Special::kSep);

    std::vector<std::string> out;
    out.reserve(std::max(0, n));
    for (int i = 0; i < n; ++i) {
        const std::vector<int> ids = sample_top_k(model_, prompt, sample_, rng);
        out.push_back(text::join(corpus::decode(ids, vocab_)));
    }
    return out;
}

void PipelineConfig::validate() const {
    if (n_requested < 1)
        throw InputError("pipeline: n_requested must be >= 1");
    if (!std::isfinite(threshold) || threshold < -1.0 || threshold > 1.0)
        throw InputError("pipeline: threshold must lie in [-1, 1]");
    if (source_shuffle < 0.0 || source_shuffle > 1.0 || source_synonym < 0.0 ||
        source_synonym > 1.0)
        throw InputError("pipeline: source corruption overrides must lie in [0, 1]");
}

CandidateSet build_candidate_set(const corpus::Sentence& original,
                                 CandidateGenerator& generator,
                                 Embedder& embedder,
                                 const corruption::CorruptionConfig& corruption_cfg,
                                 const corruption::SynonymLexicon& lexicon,
                                 const PipelineConfig& cfg,
                                 std::uint64_t sentence_index) {
    cfg.validate();
    CandidateSet set;
    set.original = original;
    set.threshold = cfg.threshold;
    set.n_requested = cfg.n_requested;
    set.seed = cfg.seed;

    // A degenerate skeleton (all stop words) still generates; the model just
    // free-runs from an empty prompt.
    const corruption::CorruptedSource src = corruption::inference_source(
        original, corruption_cfg, lexicon, cfg.source_shuffle,
        cfg.source_synonym, derive_seed(cfg.seed, "source", sentence_index));

    Rng gen_rng(derive_seed(cfg.seed, "candidates", sentence_index));
    const std::vector<std::string> texts =
        generator.generate(src.tokens, cfg.n_requested, gen_rng);

    // Dedup keys cover every candidate that reaches the cosine gate, not just
    // the ones that pass it. Duplicate status therefore never depends on the
    // threshold, which keeps valid(t2) a subset of valid(t1) for t2 >= t1.
    std::optional<std::vector<double>> original_embedding;  // embed lazily
    std::set<std::string> seen_norms;
    for (const std::string& t : texts) {
        Candidate c;
        c.text = t;
        c.tokens = text::tokenize(t);
        if (c.tokens.empty()) {
            c.status = CandidateStatus::kRejectedDuplicate;
            c.rejection_reason = "empty candidate";
        } else if (is_near_duplicate(c.text, original.raw)) {
            c.status = CandidateStatus::kRejectedDuplicate;
            c.rejection_reason = "near-duplicate of the original";
        } else if (!seen_norms.insert(normalize_text(c.text)).second) {
            c.status = CandidateStatus::kRejectedDuplicate;
            c.rejection_reason = "duplicate of an earlier candidate";
        } else {
            if (!original_embedding)
                original_embedding = embedder.embed(original.tokens);
            c.cosine = cosine(*original_embedding, embedder.embed(c.tokens));
            const bool pass = cfg.strict_threshold ? *c.cosine > cfg.threshold
                                                   : *c.cosine >= cfg.threshold;
            if (pass) {
                c.status = CandidateStatus::kValid;
            } else {
                c.status = CandidateStatus::kRejectedSimilarity;
                c.rejection_reason = "cosine below threshold";
            }
        }
        set.candidates.push_back(std::move(c));
    }
    return set;
}

std::vector<Candidate> select_top_m(const CandidateSet& set, int m) {
    if (m < 1) throw InputError("select_top_m: m must be >= 1");
    std::vector<const Candidate*> valid = set.valid();
    std::stable_sort(valid.begin(), valid.end(),
                     [](const Candidate* a, const Candidate* b) {
                         return a->cosine.value_or(-2.0) > b->cosine.value_or(-2.0);
                     });
    std::vector<Candidate> out;
    for (const Candidate* c : valid) {
        if (static_cast<int>(out.size()) >= m) break;
        out.push_back(*c);
    }
    return out;
}

VerifyResult verify_candidate_set(const CandidateSet& set, bool strict_threshold) {
    VerifyResult r;
    if (static_cast<int>(set.candidates.size()) > set.n_requested) ++r.violations;
    std::set<std::string> norms;
    for (const Candidate& c : set.candidates) {
        if (c.status != CandidateStatus::kValid) continue;
        ++r.valid;
        bool ok = c.cosine.has_value();
        if (ok) {
            ok = strict_threshold ? *c.cosine > set.threshold
                                  : *c.cosine >= set.threshold;
        }
        if (ok && is_near_duplicate(c.text, set.original.raw)) ok = false;
        if (ok && !norms.insert(normalize_text(c.text)).second) ok = false;
        if (!ok) ++r.violations;
    }
    return r;
}

std::string to_json_line(const CandidateSet& set) {
    nlohmann::json j;
    j["original"] = set.original.raw;
    j["threshold"] = set.threshold;
    j["n_requested"] = set.n_requested;
    j["seed"] = set.seed;
    nlohmann::json arr = nlohmann::json::array();
    for (const Candidate& c : set.candidates) {
        nlohmann::json cj;
        cj["text"] = c.text;
        if (c.cosine) {
            cj["cosine"] = *c.cosine;
        } else {
            cj["cosine"] = nullptr;
        }
        cj["status"] = status_name(c.status);
        if (!c.rejection_reason.empty()) cj["rejection_reason"] = c.rejection_reason;
        arr.push_back(std::move(cj));
    }
    j["candidates"] = std::move(arr);
    return j.dump();
}

CandidateSet candidate_set_from_json(const std::string& line) {
    try {
        const nlohmann::json j = nlohmann::json::parse(line);
        CandidateSet set;
        set.original = corpus::Sentence::from_raw(j.at("original").get<std::string>());
        set.threshold = j.at("threshold").get<double>();
        set.seed = j.at("seed").get<std::uint64_t>();
        const auto& arr = j.at("candidates");
        set.n_requested = j.value("n_requested", static_cast<int>(arr.size()));
        for (const auto& cj : arr) {
            Candidate c;
            c.text = cj.at("text").get<std::string>();
            c.tokens = text::tokenize(c.text);
            const auto& cos = cj.at("cosine");
            if (!cos.is_null()) c.cosine = cos.get<double>();
            c.status = status_from_name(cj.at("status").get<std::string>());
            c.rejection_reason = cj.value("rejection_reason", std::string());
            set.candidates.push_back(std::move(c));
        }
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed candidate set record: ") + e.what());
    }
}

void save_candidate_sets(const std::string& path,
                         const std::vector<CandidateSet>& sets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write candidate sets: " + path);
    for (const CandidateSet& s : sets) out << to_json_line(s) << '\n';
}

std::vector<CandidateSet> load_candidate_sets(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read candidate sets: " + path);
    std::vector<CandidateSet> sets;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        sets.push_back(candidate_set_from_json(line));
    }
    return sets;
}

}  // namespace paragen::scoring
