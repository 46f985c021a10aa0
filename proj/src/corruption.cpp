#include "paragen/corruption.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "paragen/errors.hpp"
#include "paragen/text.hpp"

namespace paragen::corruption {

namespace {

bool is_single_lower_token(const std::string& s) {
    if (s.empty()) return false;
    for (unsigned char c : s) {
        if (std::isspace(c)) return false;
        if (std::isupper(c)) return false;
    }
    return true;
}

}  // namespace

void CorruptionConfig::validate() const {
    if (shuffle_prob < 0.0 || shuffle_prob > 1.0)
        throw InputError("shuffle_prob must be in [0, 1]");
    if (synonym_prob < 0.0 || synonym_prob > 1.0)
        throw InputError("synonym_prob must be in [0, 1]");
    if (stopwords.empty()) throw InputError("stop-word set must be non-empty");
    for (const auto& w : stopwords)
        if (!is_single_lower_token(w))
            throw InputError("stop word is not a single lowercase token: '" + w + "'");
}

void SynonymLexicon::add(const std::string& word, std::vector<std::string> synonyms) {
    if (!is_single_lower_token(word))
        throw InputError("lexicon word is not a single lowercase token: '" + word + "'");
    if (synonyms.empty())
        throw InputError("lexicon entry '" + word + "' has no synonyms");
    for (const auto& s : synonyms)
        if (!is_single_lower_token(s))
            throw InputError("synonym for '" + word + "' is not a single lowercase token: '" +
                             s + "'");
    if (synonyms.size() == 1 && synonyms[0] == word)
        throw InputError("lexicon entry '" + word + "' lists itself as its only synonym");
    entries_[word] = std::move(synonyms);
}

const std::vector<std::string>* SynonymLexicon::find(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

SynonymLexicon SynonymLexicon::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open synonym lexicon: " + path);
    SynonymLexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw InputError(path + ":" + std::to_string(line_no) + ": expected word<TAB>synonyms");
        std::string word = line.substr(0, tab);
        std::vector<std::string> syns;
        std::stringstream rest(line.substr(tab + 1));
        std::string syn;
        while (std::getline(rest, syn, ','))
            if (!syn.empty()) syns.push_back(syn);
        lex.add(word, std::move(syns));
    }
    return lex;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open stop-word file: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!is_single_lower_token(line))
            throw InputError(path + ":" + std::to_string(line_no) +
                             ": stop word is not a single lowercase token: '" + line + "'");
        words.insert(line);
    }
    return words;
}

std::vector<std::string> remove_stopwords(const std::vector<std::string>& tokens,
                                          const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens)
        if (stopwords.count(t) == 0) out.push_back(t);
    return out;
}

std::vector<std::string> shuffle_tokens(std::vector<std::string> tokens, double prob, Rng& rng,
                                        bool* fired) {
    bool do_shuffle = rng.bernoulli(prob);
    if (fired) *fired = do_shuffle;
    if (do_shuffle) rng.shuffle(tokens);
    return tokens;
}

std::vector<std::string> replace_synonyms(std::vector<std::string> tokens,
                                          const SynonymLexicon& lexicon, double prob, Rng& rng,
                                          int* replaced) {
    int count = 0;
    for (auto& tok : tokens) {
        if (!rng.bernoulli(prob)) continue;
        const auto* syns = lexicon.find(tok);
        if (!syns) continue;
        tok = (*syns)[static_cast<std::size_t>(rng.uniform_int(syns->size()))];
        ++count;
    }
    if (replaced) *replaced = count;
    return tokens;
}

CorruptedSource corrupt(const corpus::Sentence& sentence, const CorruptionConfig& config,
                        const SynonymLexicon& lexicon, Rng& rng) {
    if (sentence.tokens.empty()) throw InputError("corrupt: sentence is empty");
    config.validate();

    CorruptedSource out;
    auto kept = remove_stopwords(sentence.tokens, config.stopwords);
    out.applied_ops.stopwords_removed =
        static_cast<int>(sentence.tokens.size() - kept.size());
    if (kept.empty()) {
        out.degenerate = true;
        return out;
    }
    kept = shuffle_tokens(std::move(kept), config.shuffle_prob, rng, &out.applied_ops.shuffled);
    kept = replace_synonyms(std::move(kept), lexicon, config.synonym_prob, rng,
                            &out.applied_ops.synonyms_replaced);
    out.tokens = std::move(kept);
    return out;
}

CorruptedSource inference_source(const corpus::Sentence& sentence,
                                 const CorruptionConfig& config, const SynonymLexicon& lexicon,
                                 double shuffle_override, double synonym_override,
                                 std::uint64_t seed) {
    CorruptionConfig cfg = config;
    cfg.shuffle_prob = shuffle_override;
    cfg.synonym_prob = synonym_override;
    Rng rng(derive_seed(seed, "inference_source"));
    return corrupt(sentence, cfg, lexicon, rng);
}

}  // namespace paragen::corruption
