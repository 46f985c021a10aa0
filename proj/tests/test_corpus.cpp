#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "paragen/corpus.hpp"
#include "paragen/errors.hpp"
#include "paragen/text.hpp"

using namespace paragen;
using corpus::Sentence;
using corpus::Vocabulary;

namespace {

std::string write_temp(const char* name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("tokenizer splits punctuation and lowercases") {
    using text::tokenize;
    CHECK(tokenize("How do you do?") == std::vector<std::string>{"how", "do", "you", "do", "?"});
    CHECK(tokenize("you're") == std::vector<std::string>{"you", "'", "re"});
    CHECK(tokenize("few days, what") == std::vector<std::string>{"few", "days", ",", "what"});
    CHECK(tokenize("state-of-the-art") ==
          std::vector<std::string>{"state", "-", "of", "-", "the", "-", "art"});
    CHECK(tokenize("3.5 million") == std::vector<std::string>{"3", ".", "5", "million"});
    CHECK(tokenize("  spaced   out  ") == std::vector<std::string>{"spaced", "out"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("\t\n ").empty());
}

TEST_CASE("tokenizer keeps multi-byte sequences glued to their word") {
    auto tokens = text::tokenize("caf\xc3\xa9 time");
    CHECK(tokens == std::vector<std::string>{"caf\xc3\xa9", "time"});
}

TEST_CASE("join is the space-separated rendering") {
    CHECK(text::join({"a", "b", "?"}) == "a b ?");
    CHECK(text::join({}) == "");
}

TEST_CASE("normalize_whitespace trims and collapses") {
    CHECK(text::normalize_whitespace("  a\t b \n") == "a b");
    CHECK(text::normalize_whitespace("") == "");
}

TEST_CASE("vocabulary assigns specials the first five ids") {
    Vocabulary v;
    CHECK(v.size() == corpus::kNumSpecials);
    CHECK(v.token(corpus::kPad) == "[PAD]");
    CHECK(v.token(corpus::kUnk) == "[UNK]");
    CHECK(v.token(corpus::kBos) == "[BOS]");
    CHECK(v.token(corpus::kSep) == "[SEP]");
    CHECK(v.token(corpus::kEos) == "[EOS]");
}

TEST_CASE("vocabulary construction orders by frequency then lexicographically") {
    std::vector<Sentence> corpus_sents{
        Sentence::from_raw("b b b a a c c z"),
        Sentence::from_raw("a c"),
    };
    // freq: a=3, b=3, c=3, z=1
    Vocabulary v = corpus::build_vocabulary(corpus_sents, 2);
    CHECK(v.size() == corpus::kNumSpecials + 3);  // z filtered out
    CHECK(v.id("a") == corpus::kNumSpecials + 0);
    CHECK(v.id("b") == corpus::kNumSpecials + 1);
    CHECK(v.id("c") == corpus::kNumSpecials + 2);
    CHECK(v.id("z") == corpus::kUnk);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("z"));
}

TEST_CASE("vocabulary rejects a non-positive frequency floor") {
    CHECK_THROWS_AS(corpus::build_vocabulary({Sentence::from_raw("a")}, 0), InputError);
}

TEST_CASE("vocabulary save/load round trip preserves ids and hash") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("alpha beta beta")}, 1);
    const std::string path = write_temp("paragen_vocab.txt", "");
    v.save(path);
    Vocabulary back = Vocabulary::load(path);
    CHECK(back.size() == v.size());
    CHECK(back.hash() == v.hash());
    CHECK(back.id("beta") == v.id("beta"));
    std::remove(path.c_str());
}

TEST_CASE("vocabulary hash is sensitive to content") {
    Vocabulary a = corpus::build_vocabulary({Sentence::from_raw("x y")}, 1);
    Vocabulary b = corpus::build_vocabulary({Sentence::from_raw("x z")}, 1);
    CHECK(a.hash() != b.hash());
}

TEST_CASE("token lookup rejects out-of-range ids") {
    Vocabulary v;
    CHECK_THROWS_AS(v.token(-1), InputError);
    CHECK_THROWS_AS(v.token(v.size()), InputError);
}

TEST_CASE("encode lays out BOS source SEP target EOS") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("cats chase mice daily")}, 1);
    corpus::TrainingExample ex = corpus::encode({"cats", "mice"}, {"cats", "chase", "mice"}, v);
    REQUIRE(ex.input_ids.size() == 8);  // BOS + 2 + SEP + 3 + EOS
    CHECK(ex.input_ids.front() == corpus::kBos);
    CHECK(ex.input_ids[3] == corpus::kSep);
    CHECK(ex.sep_index == 3);
    CHECK(ex.input_ids.back() == corpus::kEos);
    CHECK(ex.source_len == 2);
    CHECK(ex.target_len == 3);
    CHECK_FALSE(ex.truncated);
}

TEST_CASE("encode maps unknown tokens to UNK") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("known words only")}, 1);
    corpus::TrainingExample ex = corpus::encode({"known"}, {"mystery"}, v);
    CHECK(ex.input_ids[ex.sep_index + 1] == corpus::kUnk);
}

TEST_CASE("encode truncates the target side to honor max_len") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("a1 b2 c3 d4 e5 f6")}, 1);
    corpus::TrainingExample ex =
        corpus::encode({"a1"}, {"b2", "c3", "d4", "e5", "f6"}, v, 6);
    CHECK(ex.truncated);
    CHECK(static_cast<int>(ex.input_ids.size()) == 6);
    CHECK(ex.input_ids.back() == corpus::kEos);  // EOS survives truncation
    CHECK(ex.input_ids[1] == v.id("a1"));        // source untouched
}

TEST_CASE("encode fails when the source alone cannot fit") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("a1 b2 c3 d4")}, 1);
    CHECK_THROWS_AS(corpus::encode({"a1", "b2", "c3", "d4"}, {"a1"}, v, 5), InputError);
}

TEST_CASE("decode drops specials and inverts encode") {
    Vocabulary v = corpus::build_vocabulary({Sentence::from_raw("red green blue")}, 1);
    corpus::TrainingExample ex = corpus::encode({"red"}, {"green", "blue"}, v);
    CHECK(corpus::decode(ex.input_ids, v) ==
          std::vector<std::string>{"red", "green", "blue"});
    CHECK_THROWS_AS(corpus::decode({v.size()}, v), InputError);
}

TEST_CASE("split_corpus deduplicates and is deterministic") {
    std::vector<Sentence> sents;
    for (int i = 0; i < 20; ++i) sents.push_back(Sentence::from_raw("line " + std::to_string(i)));
    sents.push_back(Sentence::from_raw("line 3"));
    sents.push_back(Sentence::from_raw("  line   3 "));  // same after normalization

    corpus::DatasetSplit a = corpus::split_corpus(sents, 0.8, 99);
    corpus::DatasetSplit b = corpus::split_corpus(sents, 0.8, 99);
    CHECK(a.train.size() + a.valid.size() == 20);  // duplicates gone
    CHECK(a.train.size() == 16);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].raw == b.train[i].raw);

    corpus::DatasetSplit c = corpus::split_corpus(sents, 0.8, 100);
    bool same = a.train.size() == c.train.size();
    if (same) {
        bool identical = true;
        for (std::size_t i = 0; i < a.train.size(); ++i)
            if (a.train[i].raw != c.train[i].raw) identical = false;
        CHECK_FALSE(identical);  // different seed shuffles differently
    }
}

TEST_CASE("split_corpus keeps both sides non-empty at extreme fractions") {
    std::vector<Sentence> sents{Sentence::from_raw("one"), Sentence::from_raw("two"),
                                Sentence::from_raw("three")};
    corpus::DatasetSplit s = corpus::split_corpus(sents, 0.999, 1);
    CHECK(s.train.size() == 2);
    CHECK(s.valid.size() == 1);
    corpus::DatasetSplit s2 = corpus::split_corpus(sents, 0.001, 1);
    CHECK(s2.train.size() == 1);
    CHECK(s2.valid.size() == 2);
    CHECK_THROWS_AS(corpus::split_corpus({Sentence::from_raw("only")}, 0.5, 1), InputError);
}

TEST_CASE("plain corpus loader skips blank lines and strips carriage returns") {
    const std::string path =
        write_temp("paragen_corpus.txt", "first line\r\n\n  \nsecond line\n");
    std::vector<Sentence> sents = corpus::load_plain_corpus(path);
    REQUIRE(sents.size() == 2);
    CHECK(sents[0].raw == "first line");
    CHECK(sents[1].raw == "second line");
    std::remove(path.c_str());
    CHECK_THROWS_AS(corpus::load_plain_corpus("/nonexistent/x.txt"), InputError);
}

TEST_CASE("pair dataset loader reads the header and skips malformed rows") {
    const std::string content =
        "id\tquestion1\tquestion2\tis_duplicate\n"
        "1\thow are you?\thow do you do?\t1\n"
        "2\t\"tabs\there\"\tplain\t0\n"
        "3\tmissing fields\n"
        "4\tok\tok2\tnot_a_label\n"
        "5\tlast\tpair\t1\n";
    const std::string path = write_temp("paragen_pairs.tsv", content);
    corpus::PairDataset ds = corpus::load_pair_dataset(path);
    REQUIRE(ds.records.size() == 3);
    CHECK(ds.skipped_rows == 2);
    CHECK(ds.records[0].question1 == "how are you?");
    CHECK(ds.records[0].is_duplicate == 1);
    CHECK(ds.records[1].question1 == "tabs\there");  // quoted field keeps its tab
    CHECK(ds.records[2].question2 == "pair");
    std::remove(path.c_str());
}

TEST_CASE("pair dataset loader requires the expected columns") {
    const std::string path = write_temp("paragen_pairs_bad.tsv", "a\tb\n1\t2\n");
    CHECK_THROWS_AS(corpus::load_pair_dataset(path), InputError);
    std::remove(path.c_str());
}

}  // TEST_SUITE
