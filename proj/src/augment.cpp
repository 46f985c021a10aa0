#include "paragen/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "paragen/errors.hpp"
#include "paragen/rng.hpp"
#include "paragen/text.hpp"

namespace paragen::augment {

namespace {

template <typename Fn>
void for_each_ngram(const std::vector<std::string>& tokens, int max_n, Fn&& fn) {
    for (int n = 1; n <= max_n; ++n) {
        for (int i = 0; i + n <= static_cast<int>(tokens.size()); ++i) {
            std::string key = tokens[i];
            for (int j = 1; j < n; ++j) {
                key += ' ';
                key += tokens[i + j];
            }
            fn(key);
        }
    }
}

std::vector<int> labels_of(const std::vector<LabeledDoc>& docs) {
    std::vector<int> y;
    y.reserve(docs.size());
    for (const LabeledDoc& d : docs) y.push_back(d.label);
    return y;
}

void require_both_classes(const std::vector<int>& y) {
    bool has0 = false, has1 = false;
    for (int v : y) (v == 1 ? has1 : has0) = true;
    if (!has0 || !has1)
        throw InputError("training data must contain both classes");
}

double gini(int c0, int c1) {
    const double n = c0 + c1;
    if (n == 0) return 0.0;
    const double p0 = c0 / n;
    const double p1 = c1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

}  // namespace

LabeledDoc LabeledDoc::from_text(int label, const std::string& text) {
    if (label != 0 && label != 1)
        throw InputError("label must be 0 or 1, got " + std::to_string(label));
    LabeledDoc d;
    d.label = label;
    d.text = text;
    d.tokens = text::tokenize(text);
    return d;
}

std::vector<LabeledDoc> load_labeled_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read labeled data: " + path);
    std::vector<LabeledDoc> docs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        const std::string where = path + ":" + std::to_string(line_no);
        if (tab == std::string::npos)
            throw InputError(where + ": expected label<TAB>text");
        const std::string label = line.substr(0, tab);
        const std::string body = line.substr(tab + 1);
        if (label != "0" && label != "1")
            throw InputError(where + ": label must be 0 or 1, got '" + label + "'");
        if (text::tokenize(body).empty())
            throw InputError(where + ": empty document text");
        docs.push_back(LabeledDoc::from_text(label == "1" ? 1 : 0, body));
    }
    return docs;
}

FeatureSpace FeatureSpace::build(const std::vector<LabeledDoc>& train_docs,
                                 FeatureMode mode, int max_n) {
    if (train_docs.empty())
        throw InputError("feature space needs at least one training document");
    if (max_n < 1) throw InputError("feature space: max_n must be >= 1");

    FeatureSpace s;
    s.mode_ = mode;
    s.max_n_ = max_n;
    s.n_docs_ = static_cast<int>(train_docs.size());

    std::map<std::string, int> df;
    for (const LabeledDoc& d : train_docs) {
        std::map<std::string, int> seen;
        for_each_ngram(d.tokens, max_n, [&](const std::string& g) { seen[g] = 1; });
        for (const auto& [g, one] : seen) df[g] += one;
    }
    int next = 0;
    for (const auto& [g, count] : df) s.columns_[g] = next++;
    if (mode == FeatureMode::kTfidf) {
        s.idf_.resize(df.size());
        for (const auto& [g, count] : df)
            s.idf_[s.columns_.at(g)] =
                std::log((1.0 + s.n_docs_) / (1.0 + count)) + 1.0;
    }
    return s;
}

double FeatureSpace::idf(const std::string& ngram) const {
    if (mode_ != FeatureMode::kTfidf)
        throw InputError("idf is only defined for a tfidf feature space");
    auto it = columns_.find(ngram);
    if (it == columns_.end()) throw InputError("n-gram not in feature space: " + ngram);
    return idf_[it->second];
}

SparseRow FeatureSpace::featurize(const LabeledDoc& doc) const {
    std::map<int, double> tf;
    for_each_ngram(doc.tokens, max_n_, [&](const std::string& g) {
        auto it = columns_.find(g);
        if (it != columns_.end()) tf[it->second] += 1.0;
    });

    SparseRow row;
    row.reserve(tf.size());
    if (mode_ == FeatureMode::kBinarized) {
        for (const auto& [col, count] : tf) row.emplace_back(col, 1.0);
        return row;
    }
    double norm_sq = 0.0;
    for (const auto& [col, count] : tf) {
        const double v = count * idf_[col];
        row.emplace_back(col, v);
        norm_sq += v * v;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [col, v] : row) v *= inv;
    }
    return row;
}

std::vector<SparseRow> FeatureSpace::featurize_all(
    const std::vector<LabeledDoc>& docs) const {
    std::vector<SparseRow> rows;
    rows.reserve(docs.size());
    for (const LabeledDoc& d : docs) rows.push_back(featurize(d));
    return rows;
}

std::vector<double> log_count_ratio(const std::vector<SparseRow>& X,
                                    const std::vector<int>& y, int n_columns,
                                    double alpha) {
    if (X.size() != y.size()) throw InputError("feature/label count mismatch");
    if (X.empty()) throw InputError("log-count ratio needs data");
    if (n_columns < 1) throw InputError("log-count ratio needs columns");
    if (alpha <= 0) throw InputError("smoothing alpha must be positive");
    require_both_classes(y);

    std::vector<double> p(n_columns, alpha), q(n_columns, alpha);
    for (std::size_t i = 0; i < X.size(); ++i) {
        std::vector<double>& target = y[i] == 1 ? p : q;
        for (const auto& [col, v] : X[i]) target[col] += v;
    }
    const double zp = std::accumulate(p.begin(), p.end(), 0.0);
    const double zq = std::accumulate(q.begin(), q.end(), 0.0);
    std::vector<double> r(n_columns);
    for (int j = 0; j < n_columns; ++j)
        r[j] = std::log(p[j] / zp) - std::log(q[j] / zq);
    return r;
}

void NbSvmConfig::validate() const {
    if (alpha <= 0) throw InputError("nbsvm: alpha must be positive");
    if (beta < 0 || beta > 1) throw InputError("nbsvm: beta must lie in [0, 1]");
    if (c <= 0) throw InputError("nbsvm: c must be positive");
    if (learning_rate <= 0) throw InputError("nbsvm: learning rate must be positive");
    if (epochs < 1) throw InputError("nbsvm: epochs must be >= 1");
}

double NbSvmModel::score(const SparseRow& row) const {
    double s = bias;
    for (const auto& [col, v] : row) s += weights[col] * ratio[col] * v;
    return s;
}

int NbSvmModel::predict(const SparseRow& row) const { return score(row) > 0 ? 1 : 0; }

NbSvmModel nbsvm_train(const std::vector<SparseRow>& X, const std::vector<int>& y,
                       int n_columns, const NbSvmConfig& cfg) {
    cfg.validate();
    const std::vector<double> r = log_count_ratio(X, y, n_columns, cfg.alpha);

    const int n = static_cast<int>(X.size());
    const double lambda = 1.0 / (cfg.c * n);
    std::vector<double> w(n_columns, 0.0);
    double b = 0.0;

    // z_i = r o x_i, materialized once.
    std::vector<SparseRow> z(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        z[i] = X[i];
        for (auto& [col, v] : z[i]) v *= r[col];
    }

    std::vector<double> grad(n_columns);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int j = 0; j < n_columns; ++j) grad[j] = lambda * w[j];
        double grad_b = 0.0;
        for (int i = 0; i < n; ++i) {
            const double ysign = y[i] == 1 ? 1.0 : -1.0;
            double s = b;
            for (const auto& [col, v] : z[i]) s += w[col] * v;
            if (ysign * s < 1.0) {
                for (const auto& [col, v] : z[i]) grad[col] -= ysign * v / n;
                grad_b -= ysign / n;
            }
        }
        for (int j = 0; j < n_columns; ++j) w[j] -= cfg.learning_rate * grad[j];
        b -= cfg.learning_rate * grad_b;
    }

    double mean_mag = 0.0;
    for (double v : w) mean_mag += std::abs(v);
    mean_mag /= n_columns;

    NbSvmModel model;
    model.ratio = r;
    model.weights.resize(n_columns);
    for (int j = 0; j < n_columns; ++j)
        model.weights[j] = (1.0 - cfg.beta) * mean_mag + cfg.beta * w[j];
    model.bias = b;
    return model;
}

void RfConfig::validate() const {
    if (n_trees < 1) throw InputError("forest: n_trees must be >= 1");
    if (max_depth < 0) throw InputError("forest: max_depth must be >= 0");
    if (mtry < 0) throw InputError("forest: mtry must be >= 0");
    if (min_leaf < 1) throw InputError("forest: min_leaf must be >= 1");
}

namespace {

struct TreeBuilder {
    const std::vector<std::vector<double>>& X;  // dense
    const std::vector<int>& y;
    const RfConfig& cfg;
    int n_columns;
    int mtry;
    Rng& rng;
    std::vector<TreeNode> nodes;

    int leaf(int c0, int c1) {
        TreeNode node;
        node.label = c1 > c0 ? 1 : 0;  // tie to 0
        nodes.push_back(node);
        return static_cast<int>(nodes.size()) - 1;
    }

    std::vector<int> sample_features() {
        std::vector<int> all(n_columns);
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < mtry; ++i) {
            const int j =
                i + static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(n_columns - i)));
            std::swap(all[i], all[j]);
        }
        all.resize(mtry);
        std::sort(all.begin(), all.end());  // search order independent of draws
        return all;
    }

    int build(std::vector<int>& samples, int depth) {
        int c0 = 0, c1 = 0;
        for (int i : samples) (y[i] == 1 ? c1 : c0)++;
        const int n = static_cast<int>(samples.size());
        if (c0 == 0 || c1 == 0 || n < 2 * cfg.min_leaf ||
            (cfg.max_depth > 0 && depth >= cfg.max_depth))
            return leaf(c0, c1);

        const double parent = gini(c0, c1);
        int best_feature = -1;
        double best_threshold = 0.0;
        double best_score = parent;

        std::vector<std::pair<double, int>> vals;
        for (int f : sample_features()) {
            vals.clear();
            for (int i : samples) vals.emplace_back(X[i][f], y[i]);
            std::sort(vals.begin(), vals.end());
            int lc0 = 0, lc1 = 0;
            for (int k = 0; k + 1 < n; ++k) {
                (vals[k].second == 1 ? lc1 : lc0)++;
                if (vals[k].first == vals[k + 1].first) continue;
                const int left_n = k + 1;
                if (left_n < cfg.min_leaf || n - left_n < cfg.min_leaf) continue;
                const double score =
                    (left_n * gini(lc0, lc1) +
                     (n - left_n) * gini(c0 - lc0, c1 - lc1)) /
                    n;
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feature = f;
                    best_threshold = (vals[k].first + vals[k + 1].first) / 2.0;
                }
            }
        }
        if (best_feature < 0) return leaf(c0, c1);

        std::vector<int> left, right;
        for (int i : samples)
            (X[i][best_feature] <= best_threshold ? left : right).push_back(i);
        if (left.empty() || right.empty()) return leaf(c0, c1);

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        nodes.push_back(node);
        const int id = static_cast<int>(nodes.size()) - 1;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }
};

int tree_predict(const std::vector<TreeNode>& nodes, const std::vector<double>& x) {
    int at = 0;
    while (nodes[at].feature >= 0)
        at = x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left
                                                         : nodes[at].right;
    return nodes[at].label;
}

}  // namespace

int RandomForest::predict(const SparseRow& row) const {
    std::vector<double> x(n_columns_, 0.0);
    for (const auto& [col, v] : row) x[col] = v;
    int votes1 = 0;
    for (const auto& tree : trees_) votes1 += tree_predict(tree, x);
    return votes1 > static_cast<int>(trees_.size()) - votes1 ? 1 : 0;
}

RandomForest rf_train(const std::vector<SparseRow>& X, const std::vector<int>& y,
                      int n_columns, const RfConfig& cfg) {
    cfg.validate();
    if (X.size() != y.size()) throw InputError("feature/label count mismatch");
    if (X.empty()) throw InputError("forest training needs data");
    if (n_columns < 1) throw InputError("forest training needs columns");
    require_both_classes(y);

    std::vector<std::vector<double>> dense(X.size(),
                                           std::vector<double>(n_columns, 0.0));
    for (std::size_t i = 0; i < X.size(); ++i)
        for (const auto& [col, v] : X[i]) dense[i][col] = v;

    const int n = static_cast<int>(X.size());
    const int mtry = cfg.mtry > 0
                         ? std::min(cfg.mtry, n_columns)
                         : std::max(1, static_cast<int>(std::floor(
                                           std::sqrt(static_cast<double>(n_columns)))));

    RandomForest forest;
    forest.n_columns_ = n_columns;
    forest.trees_.reserve(cfg.n_trees);
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(cfg.seed + static_cast<std::uint64_t>(t));
        std::vector<int> bootstrap(n);
        for (int i = 0; i < n; ++i)
            bootstrap[i] = static_cast<int>(rng.uniform_int(n));
        TreeBuilder builder{dense, y, cfg, n_columns, mtry, rng, {}};
        builder.build(bootstrap, 0);
        forest.trees_.push_back(std::move(builder.nodes));
    }
    return forest;
}

Scores scores_from_counts(int tp, int fp, int fn, int tn) {
    const int total = tp + fp + fn + tn;
    if (total <= 0) throw InputError("empty evaluation set");
    Scores s;
    s.accuracy = static_cast<double>(tp + tn) / total;
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f1 = precision + recall > 0
               ? 2.0 * precision * recall / (precision + recall)
               : 0.0;
    return s;
}

Scores evaluate_classifier(const Classifier& model, const std::vector<SparseRow>& X,
                           const std::vector<int>& y) {
    if (X.size() != y.size()) throw InputError("feature/label count mismatch");
    if (X.empty()) throw InputError("empty evaluation set");
    int tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const int pred = model.predict(X[i]);
        if (pred == 1)
            (y[i] == 1 ? tp : fp)++;
        else
            (y[i] == 1 ? fn : tn)++;
    }
    return scores_from_counts(tp, fp, fn, tn);
}

double increment_pct(double baseline, double enhanced) {
    return 100.0 * (enhanced - baseline) / baseline;
}

std::vector<LabeledDoc> augment_training_set(const std::vector<LabeledDoc>& train,
                                             const ParaphraseFn& paraphrase,
                                             int per_doc) {
    if (per_doc < 0) throw InputError("per_doc must be >= 0");
    std::vector<LabeledDoc> out = train;
    if (per_doc == 0) return out;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::vector<std::string> texts =
            paraphrase(train[i], static_cast<std::uint64_t>(i));
        int added = 0;
        for (const std::string& t : texts) {
            if (added >= per_doc) break;
            if (text::tokenize(t).empty()) continue;
            LabeledDoc d = LabeledDoc::from_text(train[i].label, t);
            d.origin = DocOrigin::kAugmented;
            out.push_back(std::move(d));
            ++added;
        }
    }
    return out;
}

std::string classifier_name(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::kNbSvm: return "nbsvm";
        case ClassifierKind::kRandomForest: return "tfidf_rf";
    }
    throw InputError("unreachable classifier kind");
}

ClassifierKind classifier_from_name(const std::string& name) {
    if (name == "nbsvm") return ClassifierKind::kNbSvm;
    if (name == "tfidf_rf") return ClassifierKind::kRandomForest;
    throw InputError("unknown classifier: " + name);
}

void ExperimentConfig::validate() const {
    nbsvm.validate();
    rf.validate();
    if (per_doc < 0) throw InputError("per_doc must be >= 0");
    if (max_n < 1) throw InputError("max_n must be >= 1");
}

std::string report_to_json(const ClassifierReport& report) {
    nlohmann::json j;
    j["classifier"] = report.classifier;
    j["baseline"] = {{"acc", report.baseline.accuracy}, {"f1", report.baseline.f1}};
    j["enhanced"] = {{"acc", report.enhanced.accuracy}, {"f1", report.enhanced.f1}};
    j["increment_pct"] = {{"acc", report.increment_acc_pct},
                          {"f1", report.increment_f1_pct}};
    j["counts"] = {{"train_docs", report.train_docs},
                   {"augmented_docs", report.augmented_docs},
                   {"test_docs", report.test_docs}};
    j["seeds"] = {{"classifier", report.config.classifier == ClassifierKind::kNbSvm
                                     ? report.config.nbsvm.seed
                                     : report.config.rf.seed},
                  {"pipeline", report.config.pipeline_seed}};
    nlohmann::json cfg;
    cfg["per_doc"] = report.config.per_doc;
    cfg["max_n"] = report.config.max_n;
    if (report.config.classifier == ClassifierKind::kNbSvm) {
        cfg["alpha"] = report.config.nbsvm.alpha;
        cfg["beta"] = report.config.nbsvm.beta;
        cfg["c"] = report.config.nbsvm.c;
        cfg["learning_rate"] = report.config.nbsvm.learning_rate;
        cfg["epochs"] = report.config.nbsvm.epochs;
    } else {
        cfg["n_trees"] = report.config.rf.n_trees;
        cfg["max_depth"] = report.config.rf.max_depth;
        cfg["mtry"] = report.config.rf.mtry;
        cfg["min_leaf"] = report.config.rf.min_leaf;
    }
    j["config"] = std::move(cfg);
    return j.dump();
}

ClassifierReport run_experiment(const std::vector<LabeledDoc>& train,
                                const std::vector<LabeledDoc>& test,
                                const ExperimentConfig& cfg,
                                const ParaphraseFn& paraphrase) {
    cfg.validate();
    if (train.empty() || test.empty())
        throw InputError("experiment needs non-empty train and test splits");

    const FeatureMode mode = cfg.classifier == ClassifierKind::kNbSvm
                                 ? FeatureMode::kBinarized
                                 : FeatureMode::kTfidf;
    const std::vector<int> y_test = labels_of(test);

    // The only thing that differs between conditions is the training data;
    // the feature space is rebuilt per condition from that data alone.
    auto run_condition = [&](const std::vector<LabeledDoc>& tr) {
        const FeatureSpace space = FeatureSpace::build(tr, mode, cfg.max_n);
        const std::vector<SparseRow> x_train = space.featurize_all(tr);
        const std::vector<SparseRow> x_test = space.featurize_all(test);
        const std::vector<int> y_train = labels_of(tr);
        if (cfg.classifier == ClassifierKind::kNbSvm) {
            const NbSvmModel model =
                nbsvm_train(x_train, y_train, space.columns(), cfg.nbsvm);
            return evaluate_classifier(model, x_test, y_test);
        }
        const RandomForest model = rf_train(x_train, y_train, space.columns(), cfg.rf);
        return evaluate_classifier(model, x_test, y_test);
    };

    ClassifierReport report;
    report.classifier = classifier_name(cfg.classifier);
    report.config = cfg;
    report.train_docs = static_cast<int>(train.size());
    report.test_docs = static_cast<int>(test.size());

    report.baseline = run_condition(train);
    const std::vector<LabeledDoc> augmented =
        augment_training_set(train, paraphrase, cfg.per_doc);
    report.augmented_docs = static_cast<int>(augmented.size() - train.size());
    report.enhanced = run_condition(augmented);

    report.increment_acc_pct =
        increment_pct(report.baseline.accuracy, report.enhanced.accuracy);
    report.increment_f1_pct = increment_pct(report.baseline.f1, report.enhanced.f1);
    return report;
}

}  // namespace paragen::augment
