#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "paragen/errors.hpp"
#include "paragen/metrics.hpp"
#include "paragen/rng.hpp"

using namespace paragen;
using metrics::EvalExample;
using metrics::Protocol;
using metrics::Tokens;

namespace {

Tokens toks(std::initializer_list<const char*> words) {
    Tokens out;
    for (const char* w : words) out.emplace_back(w);
    return out;
}

// Exhaustive LCS oracle: enumerate every subsequence of a, keep the longest
// one that is also a subsequence of b.
bool is_subsequence(const Tokens& sub, const Tokens& seq) {
    std::size_t i = 0;
    for (const std::string& t : seq) {
        if (i < sub.size() && sub[i] == t) ++i;
    }
    return i == sub.size();
}

int lcs_oracle(const Tokens& a, const Tokens& b) {
    int best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        Tokens sub;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (mask & (1u << i)) sub.push_back(a[i]);
        }
        if (static_cast<int>(sub.size()) > best && is_subsequence(sub, b))
            best = static_cast<int>(sub.size());
    }
    return best;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("n-gram counts honor the total invariant") {
    const Tokens t = toks({"a", "b", "a", "b"});
    auto uni = metrics::count_ngrams(t, 1);
    CHECK(uni.total == 4);
    CHECK(uni.counts.at(toks({"a"})) == 2);
    CHECK(uni.counts.at(toks({"b"})) == 2);
    auto bi = metrics::count_ngrams(t, 2);
    CHECK(bi.total == 3);
    CHECK(bi.counts.at(toks({"a", "b"})) == 2);
    CHECK(bi.counts.at(toks({"b", "a"})) == 1);
    CHECK(metrics::count_ngrams(t, 5).total == 0);
    CHECK(metrics::count_ngrams({}, 1).total == 0);
    CHECK_THROWS_AS(metrics::count_ngrams(t, 0), InputError);
}

TEST_CASE("bleu on identical sentences is exactly 1") {
    const Tokens s = toks({"the", "cat", "sat"});
    CHECK(metrics::bleu(s, {s}, 4) == 1.0);
    // orders beyond the candidate length drop out instead of zeroing it
    CHECK(metrics::bleu(toks({"a"}), {toks({"a"})}, 4) == 1.0);
}

TEST_CASE("bleu worked example: brevity penalty only") {
    // candidate "the cat sat" vs reference "the cat sat down" with max_n=3:
    // p1=p2=p3=1, BP=exp(1-4/3)=0.716531...
    const double score = metrics::bleu(toks({"the", "cat", "sat"}),
                                       {toks({"the", "cat", "sat", "down"})}, 3);
    CHECK(std::abs(score - 0.7165) < 1e-4);
    CHECK(std::abs(score - std::exp(1.0 - 4.0 / 3.0)) < 1e-12);
}

TEST_CASE("bleu zero-overlap smoothing: hand-computed value") {
    // 4 disjoint tokens vs 4-token reference: every order smoothed,
    // p = (1/5, 1/4, 1/3, 1/2), BP = 1.
    const double score = metrics::bleu(toks({"p", "q", "r", "s"}),
                                       {toks({"the", "cat", "sat", "down"})}, 4);
    const double expected = std::exp((std::log(1.0 / 5.0) + std::log(1.0 / 4.0) +
                                      std::log(1.0 / 3.0) + std::log(1.0 / 2.0)) /
                                     4.0);
    CHECK(std::abs(score - expected) < 1e-12);
    CHECK(std::abs(score - 0.302137) < 1e-5);
}

TEST_CASE("bleu closest-reference-length ties pick the shorter reference") {
    // candidate length 3; references at lengths 2 and 4 are equidistant.
    // shorter -> r=2 -> BP=1 -> score 1.0; the longer pick would give 0.7165.
    const double score =
        metrics::bleu(toks({"the", "cat", "sat"}),
                      {toks({"the", "cat"}), toks({"the", "cat", "sat", "down"})}, 3);
    CHECK(score == 1.0);
}

TEST_CASE("bleu clips against the max count across references") {
    const Tokens cand = toks({"the", "the"});
    const double multi =
        metrics::bleu(cand, {toks({"the"}), toks({"the", "the", "x"})}, 1);
    CHECK(multi == 1.0);  // clip = max(1, 2) = 2
    const double single = metrics::bleu(cand, {toks({"the"})}, 1);
    CHECK(single == 0.5);  // clip = 1 of 2 candidate unigrams
}

TEST_CASE("bleu clipping bounds repeated tokens") {
    // 4x "the" vs a reference holding one: clipped p1 = 1/4.
    CHECK(metrics::bleu(toks({"the", "the", "the", "the"}),
                        {toks({"the", "cat"})}, 1) == 0.25);
}

TEST_CASE("bleu degenerate inputs") {
    CHECK(metrics::bleu({}, {toks({"a"})}, 4) == 0.0);
    CHECK_THROWS_AS(metrics::bleu(toks({"a"}), {}, 4), InputError);
    CHECK_THROWS_AS(metrics::bleu(toks({"a"}), {toks({"a"})}, 0), InputError);
    // empty reference: nothing matches, smoothed score stays in (0, 1)
    const double s = metrics::bleu(toks({"a", "b"}), {Tokens{}}, 2);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
}

TEST_CASE("self-bleu of identical candidates is 1") {
    const Tokens s = toks({"how", "do", "you", "do"});
    auto sb = metrics::self_bleu({s, s, s}, 4);
    REQUIRE(sb.has_value());
    CHECK(*sb == 1.0);
}

TEST_CASE("self-bleu needs at least two candidates") {
    CHECK_FALSE(metrics::self_bleu({}, 4).has_value());
    CHECK_FALSE(metrics::self_bleu({toks({"a"})}, 4).has_value());
}

TEST_CASE("self-bleu matches the hand-computed leave-one-out mean") {
    // c1=[a,b,c], c2=[a,b,d], c3=[a,x,y], max_n=4 (order 4 empty, dropped):
    //   bleu(c1|{c2,c3}): p=(2/3, 1/2, smoothed 1/2) -> (1/6)^(1/3)
    //   bleu(c2|{c1,c3}): same counts               -> (1/6)^(1/3)
    //   bleu(c3|{c1,c2}): p=(1/3, smoothed 1/3, smoothed 1/2) -> (1/18)^(1/3)
    auto sb = metrics::self_bleu(
        {toks({"a", "b", "c"}), toks({"a", "b", "d"}), toks({"a", "x", "y"})}, 4);
    REQUIRE(sb.has_value());
    const double expected =
        (2.0 * std::cbrt(1.0 / 6.0) + std::cbrt(1.0 / 18.0)) / 3.0;
    CHECK(std::abs(*sb - expected) < 1e-12);
}

TEST_CASE("self-bleu strictly drops when a candidate is replaced by a disjoint one") {
    const Tokens s = toks({"how", "do", "you"});
    const Tokens d = toks({"zz", "yy", "xx"});
    auto all_same = metrics::self_bleu({s, s, s}, 4);
    auto with_disjoint = metrics::self_bleu({s, s, d}, 4);
    REQUIRE(all_same.has_value());
    REQUIRE(with_disjoint.has_value());
    CHECK(*with_disjoint < *all_same);
}

TEST_CASE("lcs worked examples") {
    const Tokens x = toks({"a", "b", "c", "d"});
    CHECK(metrics::lcs_length(x, x) == 4);
    CHECK(metrics::lcs_length(x, toks({"e", "f"})) == 0);
    CHECK(metrics::lcs_length(x, toks({"b", "a", "d", "c"})) == 2);
    CHECK(metrics::lcs_length({}, x) == 0);
    CHECK(metrics::lcs_length(x, {}) == 0);
}

TEST_CASE("lcs matches exhaustive enumeration for short sequences") {
    // all sequences of length <= 4 over {a,b,c}; full acceptance sweep runs
    // length <= 8, this keeps the unit suite fast
    const char* alphabet[] = {"a", "b", "c"};
    std::vector<Tokens> seqs;
    seqs.push_back({});
    std::size_t start = 0;
    for (int len = 1; len <= 4; ++len) {
        const std::size_t end = seqs.size();
        for (std::size_t i = start; i < end; ++i) {
            for (const char* s : alphabet) {
                Tokens t = seqs[i];
                t.emplace_back(s);
                seqs.push_back(std::move(t));
            }
        }
        start = end;
    }
    REQUIRE(seqs.size() == 121);
    for (const Tokens& a : seqs) {
        for (const Tokens& b : seqs) {
            CHECK(metrics::lcs_length(a, b) == lcs_oracle(a, b));
        }
    }
}

TEST_CASE("rouge-n worked examples") {
    const Tokens cand = toks({"the", "cat", "sat"});
    const Tokens ref = toks({"the", "cat", "ran"});
    auto r1 = metrics::rouge_n(cand, ref, 1);
    REQUIRE(r1.has_value());
    CHECK(std::abs(r1->precision - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(r1->recall - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(r1->f - 2.0 / 3.0) < 1e-12);
    auto r2 = metrics::rouge_n(cand, ref, 2);
    REQUIRE(r2.has_value());
    CHECK(r2->precision == 0.5);
    CHECK(r2->recall == 0.5);
    CHECK(r2->f == 0.5);

    auto ident = metrics::rouge_n(cand, cand, 2);
    REQUIRE(ident.has_value());
    CHECK(ident->f == 1.0);

    auto disjoint = metrics::rouge_n(cand, toks({"x", "y"}), 1);
    REQUIRE(disjoint.has_value());
    CHECK(disjoint->f == 0.0);
}

TEST_CASE("rouge-n signals skip when the reference has no n-grams") {
    CHECK_FALSE(metrics::rouge_n(toks({"a", "b"}), toks({"a"}), 2).has_value());
    CHECK_FALSE(metrics::rouge_n(toks({"a"}), {}, 1).has_value());
    // short candidate against a long enough reference is defined (zeros)
    auto s = metrics::rouge_n(toks({"a"}), toks({"a", "b"}), 2);
    REQUIRE(s.has_value());
    CHECK(s->precision == 0.0);
    CHECK(s->recall == 0.0);
    CHECK(s->f == 0.0);
}

TEST_CASE("rouge-n clips repeated candidate tokens") {
    auto s = metrics::rouge_n(toks({"the", "the"}), toks({"the", "cat"}), 1);
    REQUIRE(s.has_value());
    CHECK(s->precision == 0.5);
    CHECK(s->recall == 0.5);
    CHECK(s->f == 0.5);
}

TEST_CASE("rouge-l worked example and edge cases") {
    auto s = metrics::rouge_l(toks({"the", "cat"}), toks({"the", "cat", "ran"}));
    CHECK(s.precision == 1.0);
    CHECK(std::abs(s.recall - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(s.f - 0.8) < 1e-12);

    auto ident = metrics::rouge_l(toks({"a", "b"}), toks({"a", "b"}));
    CHECK(ident.f == 1.0);
    auto disjoint = metrics::rouge_l(toks({"a"}), toks({"b"}));
    CHECK(disjoint.f == 0.0);
    CHECK(metrics::rouge_l({}, toks({"a"})).f == 0.0);
    CHECK(metrics::rouge_l(toks({"a"}), {}).f == 0.0);
}

TEST_CASE("rouge-l recall-weighted beta flag") {
    const double b2 = 1.2 * 1.2;
    const double p = 1.0, r = 2.0 / 3.0;
    const double expected = (1.0 + b2) * p * r / (r + b2 * p);
    auto s = metrics::rouge_l(toks({"the", "cat"}), toks({"the", "cat", "ran"}),
                              1.2);
    CHECK(std::abs(s.f - expected) < 1e-12);
}

TEST_CASE("stemmer rule table") {
    auto eq = [](const char* w, const char* want) {
        CHECK(metrics::stem(w) == want);
    };
    eq("running", "run");
    eq("cat", "cat");
    eq("cats", "cat");
    eq("ponies", "pony");
    eq("flies", "fly");
    eq("dies", "die");
    eq("glasses", "glass");
    eq("passes", "pass");
    eq("quickly", "quick");
    eq("really", "real");
    eq("happily", "happy");
    eq("easily", "easy");
    eq("stopped", "stop");
    eq("hopping", "hop");
    eq("hoping", "hope");
    eq("having", "have");
    eq("making", "make");
    eq("falling", "fall");
    eq("missed", "miss");
    eq("dressed", "dress");
    eq("tried", "try");
    eq("agreed", "agree");
    eq("eating", "eat");
    eq("going", "go");
    eq("being", "be");
    eq("wanted", "want");
    eq("getting", "get");
    eq("boxed", "box");
    eq("needed", "need");
    eq("need", "need");
    eq("feed", "feed");
    eq("bus", "bus");
    eq("this", "this");
    eq("sing", "sing");
    eq("bring", "bring");
    eq("only", "only");
    eq("'", "'");
    eq("a", "a");
}

TEST_CASE("stemmer is idempotent") {
    const char* words[] = {
        "running",  "cats",    "ponies", "glasses", "quickly", "happily",
        "stopped",  "hoping",  "having", "falling", "missed",  "tried",
        "agreed",   "eating",  "going",  "being",   "wanted",  "getting",
        "boxed",    "bus",     "this",   "sing",    "families", "supplies",
        "apply",    "studies", "used",   "use",     "makes",   "dresses",
        "needed",   "feed",    "teased", "caused",  "raised",  "roses",
        "'",        "?",       "a",      "paraphrase"};
    for (const char* w : words) {
        const std::string once = metrics::stem(w);
        CHECK(metrics::stem(once) == once);
    }
}

TEST_CASE("meteor identity is 1 minus the chunk penalty") {
    const Tokens s = toks({"how", "do", "you", "do", "it"});
    corruption::SynonymLexicon lex;
    const double score = metrics::meteor(s, s, lex);
    CHECK(score == 1.0 - 0.5 * std::pow(1.0 / 5.0, 3.0));
    CHECK(std::abs(score - 0.996) < 1e-12);
}

TEST_CASE("meteor synonym stage worked example") {
    corruption::SynonymLexicon lex;
    lex.add("cat", {"feline"});
    const double score =
        metrics::meteor(toks({"the", "cat"}), toks({"the", "feline"}), lex);
    CHECK(score == 0.9375);  // m=2, 1 chunk: 1 - 0.5*(1/2)^3
    // lexicon direction must not matter
    const double flipped =
        metrics::meteor(toks({"the", "feline"}), toks({"the", "cat"}), lex);
    CHECK(flipped == 0.9375);
}

TEST_CASE("meteor stem stage matches inflected forms") {
    corruption::SynonymLexicon lex;
    const double score =
        metrics::meteor(toks({"the", "cats"}), toks({"the", "cat"}), lex);
    CHECK(score == 0.9375);
}

TEST_CASE("meteor chunk counting") {
    corruption::SynonymLexicon lex;
    // all four tokens match but the tail order flips: chunks=3
    const double score = metrics::meteor(toks({"the", "cat", "sat", "down"}),
                                         toks({"the", "cat", "down", "sat"}), lex);
    CHECK(score == 1.0 - 0.5 * std::pow(3.0 / 4.0, 3.0));
    CHECK(score == 0.7890625);
}

TEST_CASE("meteor pairs candidate tokens with the leftmost free reference token") {
    corruption::SynonymLexicon lex;
    // cand [a,b] vs ref [a,a,b]: a takes ref position 0, so the b match at
    // position 2 starts a second chunk. P=1, R=2/3, Fmean=20/29, penalty 0.5.
    const double score = metrics::meteor(toks({"a", "b"}), toks({"a", "a", "b"}), lex);
    CHECK(std::abs(score - 10.0 / 29.0) < 1e-12);
}

TEST_CASE("meteor zero matches and empty inputs") {
    corruption::SynonymLexicon lex;
    CHECK(metrics::meteor(toks({"a"}), toks({"b"}), lex) == 0.0);
    CHECK(metrics::meteor({}, toks({"a"}), lex) == 0.0);
    CHECK(metrics::meteor(toks({"a"}), {}, lex) == 0.0);
}

TEST_CASE("synonym lookup is symmetric in its arguments") {
    corruption::SynonymLexicon lex;
    lex.add("cat", {"feline"});
    CHECK(metrics::are_synonyms(lex, "cat", "feline"));
    CHECK(metrics::are_synonyms(lex, "feline", "cat"));
    CHECK_FALSE(metrics::are_synonyms(lex, "cat", "dog"));
}

TEST_CASE("protocol names round-trip") {
    CHECK(metrics::protocol_name(Protocol::kBestCandidate) == "best_candidate");
    CHECK(metrics::protocol_name(Protocol::kTop3Mean) == "top3_mean");
    CHECK(metrics::protocol_from_name("best_candidate") == Protocol::kBestCandidate);
    CHECK(metrics::protocol_from_name("top3_mean") == Protocol::kTop3Mean);
    CHECK_THROWS_AS(metrics::protocol_from_name("best"), InputError);
}

TEST_CASE("evaluate under the best-candidate protocol") {
    const Tokens ref = toks({"the", "cat", "sat", "down"});
    EvalExample ex1{ref, {ref, toks({"p", "q", "r", "s"}), ref}};
    EvalExample ex2{toks({"hello", "world"}), {}};
    corruption::SynonymLexicon lex;

    auto rep = metrics::evaluate({ex1, ex2}, Protocol::kBestCandidate, lex, 4);
    CHECK(rep.pairs_total == 2);
    CHECK(rep.pairs_skipped == 1);
    CHECK(rep.bleu.evaluated == 1);
    CHECK(rep.bleu.mean == 1.0);
    CHECK(rep.rouge1.mean == 1.0);
    CHECK(rep.rouge2.mean == 1.0);
    CHECK(rep.rouge_l.mean == 1.0);
    // identity over 4 tokens: 1 - 0.5*(1/4)^3
    CHECK(rep.meteor.mean == doctest::Approx(0.9921875).epsilon(1e-12));
    CHECK(rep.self_bleu.evaluated == 1);
    CHECK(rep.self_bleu.skipped == 0);
}

TEST_CASE("evaluate top3 takes the mean over the first three candidates") {
    const Tokens ref = toks({"the", "cat", "sat", "down"});
    EvalExample ex{ref, {ref, toks({"p", "q", "r", "s"}), ref}};
    corruption::SynonymLexicon lex;

    auto best = metrics::evaluate({ex}, Protocol::kBestCandidate, lex, 4);
    auto top3 = metrics::evaluate({ex}, Protocol::kTop3Mean, lex, 4);
    const double disjoint =
        std::exp((std::log(1.0 / 5.0) + std::log(1.0 / 4.0) +
                  std::log(1.0 / 3.0) + std::log(1.0 / 2.0)) /
                 4.0);
    CHECK(std::abs(top3.bleu.mean - (2.0 + disjoint) / 3.0) < 1e-12);
    CHECK(top3.bleu.mean < best.bleu.mean);
    // diversity aggregates identically under both protocols
    CHECK(top3.self_bleu.mean == best.self_bleu.mean);
}

TEST_CASE("evaluate skips rouge-2 when the reference is a single token") {
    EvalExample ex{toks({"hi"}), {toks({"hi"})}};
    corruption::SynonymLexicon lex;
    auto rep = metrics::evaluate({ex}, Protocol::kBestCandidate, lex, 4);
    CHECK(rep.rouge2.evaluated == 0);
    CHECK(rep.rouge2.skipped == 1);
    CHECK(rep.rouge1.evaluated == 1);
    CHECK(rep.rouge1.mean == 1.0);
    CHECK(rep.bleu.mean == 1.0);
    // single-token identity: m=1, chunks=1, penalty 0.5
    CHECK(rep.meteor.mean == 0.5);
    // a lone candidate has no diversity score
    CHECK(rep.self_bleu.evaluated == 0);
    CHECK(rep.self_bleu.skipped == 1);
}

TEST_CASE("evaluate with zero evaluable pairs is fatal") {
    EvalExample ex{toks({"hi"}), {}};
    corruption::SynonymLexicon lex;
    CHECK_THROWS_AS(
        metrics::evaluate({ex}, Protocol::kBestCandidate, lex, 4), InputError);
    CHECK_THROWS_AS(
        metrics::evaluate({}, Protocol::kBestCandidate, lex, 4), InputError);
}

TEST_CASE("best-candidate dominates top3-mean on random candidate sets") {
    Rng rng(123);
    const char* vocab[] = {"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"};
    auto random_tokens = [&](int min_len, int max_len) {
        const int len = min_len + static_cast<int>(rng.uniform_int(
                                      max_len - min_len + 1));
        Tokens t;
        for (int i = 0; i < len; ++i)
            t.emplace_back(vocab[rng.uniform_int(8)]);
        return t;
    };
    std::vector<EvalExample> examples;
    for (int s = 0; s < 30; ++s) {
        EvalExample ex;
        ex.reference = random_tokens(2, 6);
        const int k = 1 + static_cast<int>(rng.uniform_int(5));
        for (int i = 0; i < k; ++i) ex.candidates.push_back(random_tokens(1, 6));
        examples.push_back(std::move(ex));
    }
    corruption::SynonymLexicon lex;
    auto best = metrics::evaluate(examples, Protocol::kBestCandidate, lex, 4);
    auto top3 = metrics::evaluate(examples, Protocol::kTop3Mean, lex, 4);
    CHECK(best.bleu.mean >= top3.bleu.mean - 1e-12);
    CHECK(best.rouge1.mean >= top3.rouge1.mean - 1e-12);
    CHECK(best.rouge2.mean >= top3.rouge2.mean - 1e-12);
    CHECK(best.rouge_l.mean >= top3.rouge_l.mean - 1e-12);
    CHECK(best.meteor.mean >= top3.meteor.mean - 1e-12);
    CHECK(best.rouge2.evaluated == top3.rouge2.evaluated);
}

TEST_CASE("metric report serializes to json and a table") {
    EvalExample ex{toks({"a", "b"}), {toks({"a", "b"})}};
    corruption::SynonymLexicon lex;
    auto rep = metrics::evaluate({ex}, Protocol::kBestCandidate, lex, 4);

    auto j = nlohmann::json::parse(metrics::report_to_json(rep));
    CHECK(j["protocol"] == "best_candidate");
    CHECK(j["bleu_max_n"] == 4);
    CHECK(j["pairs"]["total"] == 1);
    CHECK(j["metrics"]["bleu"]["mean"].get<double>() == 1.0);
    CHECK(j["metrics"]["rouge2"]["evaluated"] == 1);

    const std::string table = metrics::report_table(rep);
    CHECK(table.find("protocol: best_candidate") != std::string::npos);
    CHECK(table.find("rouge-l") != std::string::npos);
    CHECK(table.find("self-bleu") != std::string::npos);
}

}  // TEST_SUITE
