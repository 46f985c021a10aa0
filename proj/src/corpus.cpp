#include "paragen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "paragen/errors.hpp"
#include "paragen/rng.hpp"

namespace paragen::corpus {

const char* const kSpecialNames[kNumSpecials] = {"[PAD]", "[UNK]", "[BOS]", "[SEP]", "[EOS]"};

Vocabulary::Vocabulary() {
    for (int i = 0; i < kNumSpecials; ++i) {
        id_to_token_.emplace_back(kSpecialNames[i]);
        token_to_id_.emplace(kSpecialNames[i], i);
    }
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw InputError("vocabulary id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocabulary::add_token(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    int new_id = size();
    token_to_id_.emplace(token, new_id);
    id_to_token_.push_back(token);
    return new_id;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& tok : id_to_token_) {
        for (unsigned char c : tok) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 0x100000001b3ull;
    }
    return h;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write vocabulary file: " + path);
    for (const auto& tok : id_to_token_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        if (line_no < kNumSpecials) {
            if (line != kSpecialNames[line_no])
                throw InputError("vocabulary file " + path + ": line " +
                                 std::to_string(line_no + 1) + " must be " +
                                 kSpecialNames[line_no]);
        } else {
            if (line.empty())
                throw InputError("vocabulary file " + path + ": empty token at line " +
                                 std::to_string(line_no + 1));
            v.add_token(line);
        }
        ++line_no;
    }
    if (line_no < kNumSpecials)
        throw InputError("vocabulary file " + path + ": missing special tokens");
    return v;
}

Vocabulary build_vocabulary(const std::vector<Sentence>& corpus, int min_freq) {
    if (min_freq < 1) throw InputError("min_freq must be >= 1");
    std::unordered_map<std::string, std::int64_t> freq;
    for (const auto& s : corpus)
        for (const auto& t : s.tokens) ++freq[t];

    std::vector<std::pair<std::string, std::int64_t>> kept;
    kept.reserve(freq.size());
    for (auto& [tok, n] : freq)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.set_min_freq(min_freq);
    for (auto& [tok, n] : kept) v.add_token(tok);
    return v;
}

namespace {

// TSV row splitter with RFC4180-style quoting, so fields may contain
// embedded tabs. A doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_tsv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == '\t') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

PairDataset load_pair_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open pair dataset: " + path);

    std::string header;
    if (!std::getline(in, header)) throw InputError("pair dataset is empty: " + path);
    auto columns = split_tsv_row(strip_cr(header));

    auto column_index = [&](const std::string& name) {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw InputError("pair dataset " + path + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    };
    const std::size_t q1 = column_index("question1");
    const std::size_t q2 = column_index("question2");
    const std::size_t dup = column_index("is_duplicate");

    PairDataset ds;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        auto fields = split_tsv_row(line);
        if (fields.size() != columns.size()) {
            std::cerr << "warning: " << path << ":" << line_no << ": expected "
                      << columns.size() << " fields, got " << fields.size() << "; skipped\n";
            ++ds.skipped_rows;
            continue;
        }
        const std::string& label = fields[dup];
        if (label != "0" && label != "1") {
            std::cerr << "warning: " << path << ":" << line_no
                      << ": is_duplicate must be 0 or 1, got '" << label << "'; skipped\n";
            ++ds.skipped_rows;
            continue;
        }
        ds.records.push_back({fields[q1], fields[q2], label == "1" ? 1 : 0});
    }
    return ds;
}

std::vector<Sentence> load_plain_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open corpus file: " + path);
    std::vector<Sentence> out;
    std::string line;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (text::normalize_whitespace(line).empty()) continue;
        out.push_back(Sentence::from_raw(line));
    }
    return out;
}

DatasetSplit split_corpus(std::vector<Sentence> sentences, double train_frac,
                          std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw InputError("train_frac must be in (0, 1)");

    // Uniqueness is exact raw-text match after whitespace normalization.
    std::unordered_set<std::string> seen;
    std::vector<Sentence> unique;
    unique.reserve(sentences.size());
    for (auto& s : sentences) {
        std::string key = text::normalize_whitespace(s.raw);
        if (seen.insert(std::move(key)).second) unique.push_back(std::move(s));
    }
    if (unique.size() < 2)
        throw InputError("split_corpus needs at least 2 unique sentences, got " +
                         std::to_string(unique.size()));

    Rng rng(derive_seed(seed, "split_corpus"));
    rng.shuffle(unique);

    std::size_t n_train = static_cast<std::size_t>(
        static_cast<double>(unique.size()) * train_frac);
    n_train = std::clamp<std::size_t>(n_train, 1, unique.size() - 1);

    DatasetSplit split;
    split.train.assign(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.valid.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train), unique.end());
    return split;
}

TrainingExample encode(const std::vector<std::string>& source_tokens,
                       const std::vector<std::string>& target_tokens,
                       const Vocabulary& vocab, int max_len) {
    if (source_tokens.empty() || target_tokens.empty())
        throw InputError("encode requires non-empty source and target token lists");

    TrainingExample ex;
    ex.source_len = static_cast<int>(source_tokens.size());
    ex.target_len = static_cast<int>(target_tokens.size());

    ex.input_ids.reserve(source_tokens.size() + target_tokens.size() + 3);
    ex.input_ids.push_back(kBos);
    for (const auto& t : source_tokens) ex.input_ids.push_back(vocab.id(t));
    ex.sep_index = static_cast<int>(ex.input_ids.size());
    ex.input_ids.push_back(kSep);
    for (const auto& t : target_tokens) ex.input_ids.push_back(vocab.id(t));
    ex.input_ids.push_back(kEos);

    if (max_len > 0 && static_cast<int>(ex.input_ids.size()) > max_len) {
        // Drop target tokens from the tail, keep the closing EOS.
        int keep = max_len - 1;
        if (keep <= ex.sep_index)
            throw InputError("encode: source does not fit in max_len " +
                             std::to_string(max_len));
        ex.input_ids.resize(static_cast<std::size_t>(keep));
        ex.input_ids.push_back(kEos);
        ex.target_len = keep - ex.sep_index - 1;
        ex.truncated = true;
    }
    return ex;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= vocab.size())
            throw InputError("decode: id out of range: " + std::to_string(id));
        if (id < kNumSpecials) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

}  // namespace paragen::corpus
