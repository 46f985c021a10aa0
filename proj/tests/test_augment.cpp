#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "paragen/augment.hpp"
#include "paragen/errors.hpp"
#include "paragen/rng.hpp"

using namespace paragen;
using augment::augment_training_set;
using augment::ClassifierKind;
using augment::DocOrigin;
using augment::FeatureMode;
using augment::FeatureSpace;
using augment::LabeledDoc;
using augment::SparseRow;

namespace {

std::string write_temp(const char* name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

LabeledDoc doc(int label, const std::string& text) {
    return LabeledDoc::from_text(label, text);
}

std::vector<int> labels(const std::vector<LabeledDoc>& docs) {
    std::vector<int> y;
    for (const auto& d : docs) y.push_back(d.label);
    return y;
}

// Paraphraser that returns canned texts regardless of the document.
augment::ParaphraseFn fixed_paraphrases(std::vector<std::string> texts) {
    return [texts](const LabeledDoc&, std::uint64_t) { return texts; };
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("labeled docs tokenize and validate labels") {
    const LabeledDoc d = doc(1, "A good movie!");
    CHECK(d.label == 1);
    CHECK(d.origin == DocOrigin::kOriginal);
    CHECK(d.tokens == std::vector<std::string>{"a", "good", "movie", "!"});
    CHECK_THROWS_AS(doc(2, "bad label"), InputError);
    CHECK_THROWS_AS(doc(-1, "bad label"), InputError);
}

TEST_CASE("labeled tsv loads rows and rejects corruption") {
    const std::string path = write_temp(
        "aug_ok.tsv", "1\tgreat film\n\n0\tawful mess\r\n1\tfine\n");
    const auto docs = augment::load_labeled_tsv(path);
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].label == 1);
    CHECK(docs[0].text == "great film");
    CHECK(docs[1].label == 0);
    CHECK(docs[1].tokens == std::vector<std::string>{"awful", "mess"});
    CHECK(docs[2].text == "fine");

    CHECK_THROWS_AS(augment::load_labeled_tsv("/nonexistent/x.tsv"), InputError);
    CHECK_THROWS_WITH_AS(
        augment::load_labeled_tsv(write_temp("aug_notab.tsv", "1 no tab\n")),
        doctest::Contains(":1: expected label<TAB>text"), InputError);
    CHECK_THROWS_WITH_AS(
        augment::load_labeled_tsv(write_temp("aug_badlabel.tsv", "1\tok\n2\tnope\n")),
        doctest::Contains(":2: label must be 0 or 1"), InputError);
    CHECK_THROWS_WITH_AS(
        augment::load_labeled_tsv(write_temp("aug_empty.tsv", "0\t   \n")),
        doctest::Contains("empty document text"), InputError);
}

TEST_CASE("feature space columns are lexicographic cumulative n-grams") {
    const std::vector<LabeledDoc> docs = {doc(1, "a b c")};
    const FeatureSpace space = FeatureSpace::build(docs, FeatureMode::kBinarized, 3);
    REQUIRE(space.columns() == 6);
    // Expected n-grams sorted: "a" < "a b" < "a b c" < "b" < "b c" < "c".
    const auto& vocab = space.vocabulary();
    std::vector<std::string> keys;
    for (const auto& [g, col] : vocab) {
        CHECK(col == static_cast<int>(keys.size()));
        keys.push_back(g);
    }
    CHECK(keys == std::vector<std::string>{"a", "a b", "a b c", "b", "b c", "c"});
    CHECK(space.max_n() == 3);

    CHECK_THROWS_AS(FeatureSpace::build({}, FeatureMode::kBinarized, 3), InputError);
    CHECK_THROWS_AS(FeatureSpace::build(docs, FeatureMode::kBinarized, 0), InputError);
}

TEST_CASE("binarized rows mark presence and ignore unknown n-grams") {
    const std::vector<LabeledDoc> train = {doc(1, "cat sat"), doc(0, "dog ran")};
    const FeatureSpace space = FeatureSpace::build(train, FeatureMode::kBinarized, 1);
    REQUIRE(space.columns() == 4);  // cat, dog, ran, sat

    const SparseRow row = space.featurize(doc(1, "cat cat sat zebra"));
    REQUIRE(row.size() == 2);
    CHECK(row[0].first == space.vocabulary().at("cat"));
    CHECK(row[0].second == 1.0);  // repeated token still binarized
    CHECK(row[1].first == space.vocabulary().at("sat"));
    CHECK(row[1].second == 1.0);

    CHECK(space.featurize(doc(0, "zebra qux")).empty());
    const SparseRow a = space.featurize(doc(1, "cat sat"));
    const SparseRow b = space.featurize(doc(0, "cat sat"));
    CHECK(a == b);  // features are label-blind
}

TEST_CASE("tfidf rows use smoothed idf and unit L2 norm") {
    // df(cat)=2, df(ran)=2, df(sat)=1, df(dog)=1 over 3 docs.
    const std::vector<LabeledDoc> train = {doc(1, "cat sat"), doc(1, "cat ran"),
                                           doc(0, "dog ran")};
    const FeatureSpace space = FeatureSpace::build(train, FeatureMode::kTfidf, 1);
    const double idf_cat = std::log(4.0 / 3.0) + 1.0;
    const double idf_sat = std::log(4.0 / 2.0) + 1.0;
    CHECK(space.idf("cat") == idf_cat);
    CHECK(space.idf("sat") == idf_sat);
    CHECK_THROWS_AS(space.idf("zebra"), InputError);

    const SparseRow row = space.featurize(doc(1, "cat cat sat"));
    REQUIRE(row.size() == 2);
    const double v_cat = 2.0 * idf_cat;
    const double v_sat = 1.0 * idf_sat;
    const double norm = std::sqrt(v_cat * v_cat + v_sat * v_sat);
    CHECK(std::abs(row[0].second - v_cat / norm) < 1e-15);
    CHECK(std::abs(row[1].second - v_sat / norm) < 1e-15);
    double norm_sq = 0.0;
    for (const auto& [col, v] : row) norm_sq += v * v;
    CHECK(std::abs(norm_sq - 1.0) < 1e-12);

    const FeatureSpace bin = FeatureSpace::build(train, FeatureMode::kBinarized, 1);
    CHECK_THROWS_AS(bin.idf("cat"), InputError);  // idf is a tfidf-mode concept
}

TEST_CASE("log-count ratio matches the hand-computed value") {
    // Columns 0..2; col 0 in both positives, cols 1 and 2 split across classes.
    const std::vector<SparseRow> x = {
        {{0, 1.0}, {1, 1.0}},  // pos
        {{0, 1.0}, {2, 1.0}},  // pos
        {{1, 1.0}},            // neg
        {{2, 1.0}},            // neg
    };
    const std::vector<int> y = {1, 1, 0, 0};
    const auto r = augment::log_count_ratio(x, y, 3, 1.0);
    // p = [3,2,2] (|.|=7), q = [1,2,2] (|.|=5).
    CHECK(std::abs(r[0] - std::log((3.0 / 7.0) / (1.0 / 5.0))) < 1e-15);
    CHECK(std::abs(r[1] - std::log((2.0 / 7.0) / (2.0 / 5.0))) < 1e-15);
    CHECK(std::abs(r[2] - r[1]) < 1e-15);
}

TEST_CASE("log-count ratio flips sign under label swap") {
    Rng rng(1234);
    std::vector<SparseRow> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        SparseRow row;
        for (int col = 0; col < 10; ++col)
            if (rng.bernoulli(0.3)) row.emplace_back(col, 1.0);
        x.push_back(row);
        y.push_back(i < 10 ? 1 : 0);
    }
    std::vector<int> flipped;
    for (int v : y) flipped.push_back(1 - v);
    const auto r = augment::log_count_ratio(x, y, 10, 1.0);
    const auto neg = augment::log_count_ratio(x, flipped, 10, 1.0);
    for (int j = 0; j < 10; ++j) CHECK(r[j] == -neg[j]);
}

TEST_CASE("log-count ratio rejects bad input") {
    const std::vector<SparseRow> x = {{{0, 1.0}}, {{1, 1.0}}};
    CHECK_THROWS_AS(augment::log_count_ratio(x, {1, 1}, 2, 1.0), InputError);
    CHECK_THROWS_AS(augment::log_count_ratio(x, {0, 0}, 2, 1.0), InputError);
    CHECK_THROWS_AS(augment::log_count_ratio(x, {1}, 2, 1.0), InputError);
    CHECK_THROWS_AS(augment::log_count_ratio(x, {1, 0}, 2, 0.0), InputError);
    CHECK_THROWS_AS(augment::log_count_ratio({}, {}, 2, 1.0), InputError);
}

TEST_CASE("nbsvm separates a clean two-word problem") {
    std::vector<LabeledDoc> train;
    for (int i = 0; i < 4; ++i) {
        train.push_back(doc(1, "good movie overall"));
        train.push_back(doc(0, "bad movie overall"));
    }
    const FeatureSpace space =
        FeatureSpace::build(train, FeatureMode::kBinarized, 1);
    const auto x = space.featurize_all(train);
    augment::NbSvmConfig cfg;
    const augment::NbSvmModel model =
        augment::nbsvm_train(x, labels(train), space.columns(), cfg);

    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(model.predict(x[i]) == train[i].label);
    CHECK(model.score(space.featurize(doc(1, "good movie overall"))) > 0.0);
    CHECK(model.score(space.featurize(doc(0, "bad movie overall"))) < 0.0);
    REQUIRE(model.ratio.size() == static_cast<std::size_t>(space.columns()));
    CHECK(model.ratio[space.vocabulary().at("good")] > 0.0);
    CHECK(model.ratio[space.vocabulary().at("bad")] < 0.0);
    // "movie" appears equally in both classes with equal class sizes.
    CHECK(std::abs(model.ratio[space.vocabulary().at("movie")]) < 1e-15);
}

TEST_CASE("nbsvm bias stays zero on a mirror-symmetric problem") {
    // Swapping the two features and the labels maps the dataset onto itself,
    // so every violator pair's bias contributions cancel exactly.
    const std::vector<SparseRow> x = {{{0, 1.0}}, {{0, 1.0}}, {{1, 1.0}}, {{1, 1.0}}};
    const std::vector<int> y = {1, 1, 0, 0};
    augment::NbSvmConfig cfg;
    cfg.epochs = 157;
    const augment::NbSvmModel model = augment::nbsvm_train(x, y, 2, cfg);
    CHECK(std::abs(model.bias) < 1e-6);
    CHECK(model.predict(x[0]) == 1);
    CHECK(model.predict(x[2]) == 0);
}

TEST_CASE("nbsvm beta=0 collapses weights to their mean magnitude") {
    const std::vector<SparseRow> x = {{{0, 1.0}, {2, 1.0}}, {{1, 1.0}}, {{0, 1.0}},
                                      {{1, 1.0}, {2, 1.0}}};
    const std::vector<int> y = {1, 0, 1, 0};
    augment::NbSvmConfig cfg;
    cfg.beta = 0.0;
    const augment::NbSvmModel model = augment::nbsvm_train(x, y, 3, cfg);
    REQUIRE(model.weights.size() == 3);
    CHECK(model.weights[0] == model.weights[1]);
    CHECK(model.weights[1] == model.weights[2]);
    CHECK(model.weights[0] >= 0.0);
}

TEST_CASE("nbsvm training is deterministic and validates configs") {
    const std::vector<SparseRow> x = {{{0, 1.0}}, {{1, 1.0}}};
    const std::vector<int> y = {1, 0};
    augment::NbSvmConfig cfg;
    const auto a = augment::nbsvm_train(x, y, 2, cfg);
    const auto b = augment::nbsvm_train(x, y, 2, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
    CHECK(a.ratio == b.ratio);

    auto bad = cfg;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(augment::nbsvm_train(x, y, 2, bad), InputError);
    bad = cfg;
    bad.beta = 1.5;
    CHECK_THROWS_AS(augment::nbsvm_train(x, y, 2, bad), InputError);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(augment::nbsvm_train(x, y, 2, bad), InputError);
    CHECK_THROWS_AS(augment::nbsvm_train(x, {1, 1}, 2, cfg), InputError);
}

TEST_CASE("single tree splits a one-feature problem") {
    std::vector<SparseRow> x;
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) {
        x.push_back({{0, 1.0}});
        y.push_back(1);
        x.push_back({});  // feature absent, densifies to 0
        y.push_back(0);
    }
    augment::RfConfig cfg;
    cfg.n_trees = 1;
    cfg.seed = 7;
    const augment::RandomForest forest = augment::rf_train(x, y, 1, cfg);
    CHECK(forest.tree_count() == 1);
    CHECK(forest.predict({{0, 1.0}}) == 1);
    CHECK(forest.predict({}) == 0);
}

TEST_CASE("forest with constant features votes the majority class") {
    std::vector<SparseRow> x;
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) {
        x.push_back({{0, 1.0}});
        y.push_back(1);
    }
    x.push_back({{0, 1.0}});
    y.push_back(0);
    x.push_back({{0, 1.0}});
    y.push_back(0);
    augment::RfConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = 3;
    const augment::RandomForest forest = augment::rf_train(x, y, 1, cfg);
    CHECK(forest.predict({{0, 1.0}}) == 1);
    CHECK(forest.predict({}) == 1);  // no split exists, so the vote is constant
}

TEST_CASE("forest training is seed-deterministic") {
    Rng rng(55);
    std::vector<SparseRow> x;
    std::vector<int> y;
    for (int i = 0; i < 24; ++i) {
        SparseRow row;
        for (int col = 0; col < 8; ++col)
            if (rng.bernoulli(0.4)) row.emplace_back(col, 1.0);
        x.push_back(row);
        y.push_back(static_cast<int>(rng.bernoulli(0.5)));
    }
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0;

    augment::RfConfig cfg;
    cfg.n_trees = 15;
    cfg.seed = 99;
    const auto a = augment::rf_train(x, y, 8, cfg);
    const auto b = augment::rf_train(x, y, 8, cfg);
    for (const auto& row : x) CHECK(a.predict(row) == b.predict(row));

    cfg.seed = 100;
    const auto c = augment::rf_train(x, y, 8, cfg);
    int diff = 0;
    for (const auto& row : x) diff += a.predict(row) != c.predict(row);
    // Different seeds may disagree somewhere; both must stay valid classifiers.
    for (const auto& row : x) {
        const int p = c.predict(row);
        CHECK((p == 0 || p == 1));
    }
    (void)diff;
}

TEST_CASE("forest memorizes random labels better than it generalizes") {
    Rng rng(7);
    std::vector<LabeledDoc> all;
    const std::vector<std::string> words = {"alpha", "bravo", "charlie", "delta",
                                            "echo",  "fox",   "golf",    "hotel"};
    for (int i = 0; i < 40; ++i) {
        std::string text;
        for (int t = 0; t < 6; ++t) {
            if (t) text += ' ';
            text += words[rng.uniform_int(words.size())];
        }
        all.push_back(doc(static_cast<int>(rng.bernoulli(0.5)), text));
    }
    const std::vector<LabeledDoc> train(all.begin(), all.begin() + 30);
    const std::vector<LabeledDoc> test(all.begin() + 30, all.end());

    const FeatureSpace space = FeatureSpace::build(train, FeatureMode::kTfidf, 2);
    const auto x_train = space.featurize_all(train);
    const auto x_test = space.featurize_all(test);
    augment::RfConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = 11;
    const auto forest = augment::rf_train(x_train, labels(train), space.columns(), cfg);
    const auto train_scores =
        augment::evaluate_classifier(forest, x_train, labels(train));
    const auto test_scores = augment::evaluate_classifier(forest, x_test, labels(test));
    CHECK(train_scores.accuracy >= test_scores.accuracy);
    CHECK(train_scores.accuracy > 0.8);  // labels are memorizable
}

TEST_CASE("forest config validation and class checks") {
    const std::vector<SparseRow> x = {{{0, 1.0}}, {}};
    augment::RfConfig cfg;
    cfg.n_trees = 0;
    CHECK_THROWS_AS(augment::rf_train(x, {1, 0}, 1, cfg), InputError);
    cfg = augment::RfConfig{};
    cfg.min_leaf = 0;
    CHECK_THROWS_AS(augment::rf_train(x, {1, 0}, 1, cfg), InputError);
    cfg = augment::RfConfig{};
    CHECK_THROWS_AS(augment::rf_train(x, {1, 1}, 1, cfg), InputError);
    CHECK_THROWS_AS(augment::rf_train({}, {}, 1, cfg), InputError);

    cfg.max_depth = 1;  // stumps still classify
    const auto forest = augment::rf_train(x, {1, 0}, 1, cfg);
    const int p = forest.predict({{0, 1.0}});
    CHECK((p == 0 || p == 1));
}

TEST_CASE("scores from counts match hand-computed confusion matrices") {
    const auto s = augment::scores_from_counts(3, 1, 2, 4);
    CHECK(s.accuracy == 0.7);
    CHECK(std::abs(s.f1 - 2.0 / 3.0) < 1e-15);

    const auto perfect = augment::scores_from_counts(5, 0, 0, 5);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1 == 1.0);

    const auto no_pos = augment::scores_from_counts(0, 0, 5, 5);
    CHECK(no_pos.accuracy == 0.5);
    CHECK(no_pos.f1 == 0.0);

    CHECK_THROWS_AS(augment::scores_from_counts(0, 0, 0, 0), InputError);
}

TEST_CASE("increment arithmetic reproduces the reference deltas") {
    // 77.14 -> 79.39 is +2.92% and 0.62 -> 0.68 is +9.68% at two decimals.
    const double acc_inc = augment::increment_pct(77.14, 79.39);
    CHECK(std::round(acc_inc * 100.0) / 100.0 == 2.92);
    const double f1_inc = augment::increment_pct(0.62, 0.68);
    CHECK(std::round(f1_inc * 100.0) / 100.0 == 9.68);
    CHECK(std::round(augment::increment_pct(77.56, 79.71) * 100.0) / 100.0 == 2.77);
    CHECK(std::round(augment::increment_pct(0.62, 0.67) * 100.0) / 100.0 == 8.06);
    CHECK(augment::increment_pct(2.0, 2.0) == 0.0);
    CHECK(augment::increment_pct(2.0, 1.0) == -50.0);
}

TEST_CASE("augmentation appends labeled paraphrases after the originals") {
    const std::vector<LabeledDoc> train = {doc(1, "great fun"), doc(0, "dull slog")};

    const auto unchanged =
        augment_training_set(train, fixed_paraphrases({"ignored"}), 0);
    REQUIRE(unchanged.size() == 2);
    CHECK(unchanged[0].text == train[0].text);
    CHECK(unchanged[1].text == train[1].text);

    augment::ParaphraseFn per_doc_texts = [](const LabeledDoc& d, std::uint64_t idx) {
        return std::vector<std::string>{d.text + " v" + std::to_string(idx),
                                        d.text + " w" + std::to_string(idx),
                                        d.text + " x" + std::to_string(idx)};
    };
    const auto out = augment_training_set(train, per_doc_texts, 2);
    REQUIRE(out.size() == 6);
    CHECK(out[0].origin == DocOrigin::kOriginal);
    CHECK(out[1].origin == DocOrigin::kOriginal);
    for (std::size_t i = 2; i < out.size(); ++i)
        CHECK(out[i].origin == DocOrigin::kAugmented);
    CHECK(out[2].text == "great fun v0");
    CHECK(out[2].label == 1);
    CHECK(out[3].text == "great fun w0");
    CHECK(out[4].text == "dull slog v1");
    CHECK(out[4].label == 0);
    CHECK(out[5].text == "dull slog w1");

    // Blank texts are not usable paraphrases and are skipped, not counted.
    const auto sparse =
        augment_training_set(train, fixed_paraphrases({"", "  ", "kept one"}), 1);
    REQUIRE(sparse.size() == 4);
    CHECK(sparse[2].text == "kept one");
    CHECK(sparse[3].text == "kept one");

    CHECK_THROWS_AS(augment_training_set(train, fixed_paraphrases({}), -1),
                    InputError);
}

TEST_CASE("augmented docs always carry the source label") {
    std::vector<LabeledDoc> train;
    for (int i = 0; i < 10; ++i)
        train.push_back(doc(i % 2, "doc number " + std::to_string(i)));
    augment::ParaphraseFn echo = [](const LabeledDoc& d, std::uint64_t) {
        return std::vector<std::string>{d.text + " again"};
    };
    const auto out = augment_training_set(train, echo, 1);
    REQUIRE(out.size() == 20);
    for (std::size_t i = 10; i < 20; ++i) {
        CHECK(out[i].label == train[i - 10].label);
        CHECK(out[i].text == train[i - 10].text + " again");
    }
}

TEST_CASE("classifier kinds round-trip by name") {
    CHECK(augment::classifier_name(ClassifierKind::kNbSvm) == "nbsvm");
    CHECK(augment::classifier_name(ClassifierKind::kRandomForest) == "tfidf_rf");
    CHECK(augment::classifier_from_name("nbsvm") == ClassifierKind::kNbSvm);
    CHECK(augment::classifier_from_name("tfidf_rf") ==
          ClassifierKind::kRandomForest);
    CHECK_THROWS_AS(augment::classifier_from_name("svm"), InputError);
}

TEST_CASE("experiment with no paraphrases reports zero increments") {
    std::vector<LabeledDoc> train, test;
    for (int i = 0; i < 4; ++i) {
        train.push_back(doc(1, "excellent movie"));
        train.push_back(doc(0, "terrible movie"));
    }
    test.push_back(doc(1, "excellent movie"));
    test.push_back(doc(0, "terrible movie"));

    augment::ExperimentConfig cfg;
    cfg.classifier = ClassifierKind::kNbSvm;
    const auto report =
        augment::run_experiment(train, test, cfg, fixed_paraphrases({}));
    CHECK(report.augmented_docs == 0);
    CHECK(report.baseline.accuracy == report.enhanced.accuracy);
    CHECK(report.baseline.f1 == report.enhanced.f1);
    CHECK(report.increment_acc_pct == 0.0);
    CHECK(report.increment_f1_pct == 0.0);
    CHECK(report.train_docs == 8);
    CHECK(report.test_docs == 2);
    CHECK(report.baseline.accuracy == 1.0);  // the split is trivial
}

TEST_CASE("paraphrases that add unseen vocabulary lift the scores") {
    std::vector<LabeledDoc> train, test;
    for (int i = 0; i < 3; ++i) {
        train.push_back(doc(1, "excellent movie"));
        train.push_back(doc(0, "terrible movie"));
    }
    test.push_back(doc(1, "excellent movie"));
    test.push_back(doc(1, "superb movie"));  // "superb" unseen at baseline
    test.push_back(doc(0, "terrible movie"));

    augment::ParaphraseFn synonym_swap = [](const LabeledDoc& d, std::uint64_t) {
        if (d.label == 1) return std::vector<std::string>{"superb movie"};
        return std::vector<std::string>{"awful movie"};
    };
    augment::ExperimentConfig cfg;
    cfg.classifier = ClassifierKind::kNbSvm;
    const auto report = augment::run_experiment(train, test, cfg, synonym_swap);
    CHECK(report.augmented_docs == 6);
    CHECK(report.baseline.accuracy < 1.0);
    CHECK(report.enhanced.accuracy == 1.0);
    CHECK(report.increment_acc_pct > 0.0);
    CHECK(report.increment_f1_pct > 0.0);
}

TEST_CASE("test-only vocabulary never reaches the feature space") {
    std::vector<LabeledDoc> train, test;
    for (int i = 0; i < 3; ++i) {
        train.push_back(doc(1, "excellent movie"));
        train.push_back(doc(0, "terrible movie"));
    }
    test.push_back(doc(1, "excellent movie zzzunique"));
    test.push_back(doc(0, "terrible movie"));

    const FeatureSpace space = FeatureSpace::build(train, FeatureMode::kBinarized, 3);
    CHECK(space.vocabulary().count("zzzunique") == 0);
    CHECK(space.vocabulary().count("movie zzzunique") == 0);

    // Appending train-unseen tokens to a test doc cannot move the scores.
    augment::ExperimentConfig cfg;
    cfg.classifier = ClassifierKind::kNbSvm;
    const auto with_noise =
        augment::run_experiment(train, test, cfg, fixed_paraphrases({}));
    std::vector<LabeledDoc> clean_test = {doc(1, "excellent movie"),
                                          doc(0, "terrible movie")};
    const auto without_noise =
        augment::run_experiment(train, clean_test, cfg, fixed_paraphrases({}));
    CHECK(with_noise.baseline.accuracy == without_noise.baseline.accuracy);
    CHECK(with_noise.baseline.f1 == without_noise.baseline.f1);
}

TEST_CASE("experiment reports serialize with the expected shape") {
    std::vector<LabeledDoc> train, test;
    for (int i = 0; i < 3; ++i) {
        train.push_back(doc(1, "excellent movie"));
        train.push_back(doc(0, "terrible movie"));
    }
    test.push_back(doc(1, "excellent movie"));
    test.push_back(doc(0, "terrible movie"));

    augment::ExperimentConfig cfg;
    cfg.classifier = ClassifierKind::kRandomForest;
    cfg.rf.n_trees = 9;
    cfg.rf.seed = 21;
    cfg.pipeline_seed = 77;
    const auto report = augment::run_experiment(
        train, test, cfg,
        fixed_paraphrases({"superb movie", "awful movie"}));
    CHECK(report.classifier == "tfidf_rf");

    const auto j = nlohmann::json::parse(augment::report_to_json(report));
    CHECK(j.at("classifier") == "tfidf_rf");
    CHECK(j.at("baseline").at("acc").get<double>() == report.baseline.accuracy);
    CHECK(j.at("baseline").at("f1").get<double>() == report.baseline.f1);
    CHECK(j.at("enhanced").at("acc").get<double>() == report.enhanced.accuracy);
    CHECK(j.at("increment_pct").at("acc").get<double>() == report.increment_acc_pct);
    CHECK(j.at("increment_pct").at("f1").get<double>() == report.increment_f1_pct);
    CHECK(j.at("seeds").at("classifier").get<std::uint64_t>() == 21);
    CHECK(j.at("seeds").at("pipeline").get<std::uint64_t>() == 77);
    CHECK(j.at("config").at("n_trees").get<int>() == 9);
    CHECK(j.at("config").at("per_doc").get<int>() == 1);
    CHECK(j.at("counts").at("train_docs").get<int>() == 6);

    // NB-SVM configs surface their own hyperparameters instead.
    augment::ExperimentConfig ncfg;
    ncfg.classifier = ClassifierKind::kNbSvm;
    const auto nreport =
        augment::run_experiment(train, test, ncfg, fixed_paraphrases({}));
    const auto nj = nlohmann::json::parse(augment::report_to_json(nreport));
    CHECK(nj.at("config").contains("epochs"));
    CHECK(!nj.at("config").contains("n_trees"));
}

TEST_CASE("experiments are reproducible end to end") {
    std::vector<LabeledDoc> train, test;
    Rng rng(31);
    const std::vector<std::string> good = {"great", "superb", "excellent"};
    const std::vector<std::string> bad = {"awful", "dire", "terrible"};
    for (int i = 0; i < 8; ++i) {
        const bool pos = i % 2 == 0;
        const auto& pool = pos ? good : bad;
        std::string text = pool[rng.uniform_int(pool.size())] + " movie number " +
                           std::to_string(i);
        (i < 6 ? train : test).push_back(doc(pos ? 1 : 0, text));
    }
    augment::ParaphraseFn shuffle_tail = [](const LabeledDoc& d, std::uint64_t idx) {
        return std::vector<std::string>{d.text + " take " + std::to_string(idx)};
    };

    for (const ClassifierKind kind :
         {ClassifierKind::kNbSvm, ClassifierKind::kRandomForest}) {
        augment::ExperimentConfig cfg;
        cfg.classifier = kind;
        cfg.rf.n_trees = 7;
        const auto a = augment::run_experiment(train, test, cfg, shuffle_tail);
        const auto b = augment::run_experiment(train, test, cfg, shuffle_tail);
        CHECK(augment::report_to_json(a) == augment::report_to_json(b));
    }
}

TEST_CASE("experiment validation rejects unusable inputs") {
    const std::vector<LabeledDoc> train = {doc(1, "yes"), doc(0, "no")};
    const std::vector<LabeledDoc> test = {doc(1, "yes")};
    augment::ExperimentConfig cfg;
    CHECK_THROWS_AS(augment::run_experiment({}, test, cfg, fixed_paraphrases({})),
                    InputError);
    CHECK_THROWS_AS(augment::run_experiment(train, {}, cfg, fixed_paraphrases({})),
                    InputError);
    cfg.per_doc = -1;
    CHECK_THROWS_AS(augment::run_experiment(train, test, cfg, fixed_paraphrases({})),
                    InputError);
    cfg = augment::ExperimentConfig{};
    const std::vector<LabeledDoc> one_class = {doc(1, "yes"), doc(1, "also yes")};
    CHECK_THROWS_AS(
        augment::run_experiment(one_class, test, cfg, fixed_paraphrases({})),
        InputError);
}

}  // TEST_SUITE("augment")
