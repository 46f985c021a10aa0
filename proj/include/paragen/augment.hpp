#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

// Downstream classification harness: train a classifier on a labeled set,
// retrain it on the same set plus generated paraphrases, and report the
// percent change in accuracy and F1. Everything except the training data is
// held fixed between the two conditions by construction.
namespace paragen::augment {

enum class DocOrigin { kOriginal, kAugmented };

struct LabeledDoc {
    std::string text;
    std::vector<std::string> tokens;
    int label = 0;  // 0 or 1
    DocOrigin origin = DocOrigin::kOriginal;

    static LabeledDoc from_text(int label, const std::string& text);
};

// TSV rows "label<TAB>text", labels 0/1. Bad labels, missing tabs, or empty
// text are data corruption, reported with the line number.
std::vector<LabeledDoc> load_labeled_tsv(const std::string& path);

enum class FeatureMode { kBinarized, kTfidf };

// Sparse feature row: (column, value) pairs sorted by column.
using SparseRow = std::vector<std::pair<int, double>>;

// Cumulative word n-grams (n = 1..max_n) mapped to dense columns; built from
// training documents only so the test split can never leak into the features.
// Column ids follow lexicographic n-gram order, making rebuilds stable.
class FeatureSpace {
  public:
    static FeatureSpace build(const std::vector<LabeledDoc>& train_docs,
                              FeatureMode mode, int max_n = 3);

    int columns() const { return static_cast<int>(columns_.size()); }
    FeatureMode mode() const { return mode_; }
    int max_n() const { return max_n_; }
    const std::map<std::string, int>& vocabulary() const { return columns_; }

    // Smoothed idf ln((1+N)/(1+df)) + 1 of an n-gram in the space (tfidf
    // mode); unknown n-grams are an InputError.
    double idf(const std::string& ngram) const;

    // binarized: 0/1 presence. tfidf: tf*idf, then the row L2-normalized.
    // N-grams outside the space are ignored.
    SparseRow featurize(const LabeledDoc& doc) const;
    std::vector<SparseRow> featurize_all(const std::vector<LabeledDoc>& docs) const;

  private:
    FeatureMode mode_ = FeatureMode::kBinarized;
    int max_n_ = 3;
    int n_docs_ = 0;
    std::map<std::string, int> columns_;
    std::vector<double> idf_;  // per column, tfidf mode only
};

class Classifier {
  public:
    virtual ~Classifier() = default;
    virtual int predict(const SparseRow& row) const = 0;
};

// Per-class smoothed count vectors over binarized rows:
// r = log((alpha+p)/|alpha+p|_1) - log((alpha+q)/|alpha+q|_1), p from label-1
// docs, q from label-0 docs. Requires both classes.
std::vector<double> log_count_ratio(const std::vector<SparseRow>& X,
                                    const std::vector<int>& y, int n_columns,
                                    double alpha);

struct NbSvmConfig {
    double alpha = 1.0;  // count smoothing
    double beta = 0.25;  // interpolation toward the raw SVM weights
    double c = 1.0;      // inverse regularization strength; lambda = 1/(c*N)
    double learning_rate = 0.1;
    int epochs = 200;
    std::uint64_t seed = 0;  // recorded; full-batch training draws nothing

    void validate() const;
};

// Linear classifier over r-scaled binarized features: hinge loss plus L2,
// full-batch subgradient descent, then each weight interpolated with the
// mean weight magnitude: w' = (1-beta)*mean|w| + beta*w. The bias is not
// interpolated. Scores > 0 predict label 1.
class NbSvmModel : public Classifier {
  public:
    int predict(const SparseRow& row) const override;
    double score(const SparseRow& row) const;

    std::vector<double> ratio;    // r, fixed by the training counts
    std::vector<double> weights;  // interpolated w'
    double bias = 0.0;
};

NbSvmModel nbsvm_train(const std::vector<SparseRow>& X, const std::vector<int>& y,
                       int n_columns, const NbSvmConfig& cfg);

struct RfConfig {
    int n_trees = 100;
    int max_depth = 0;  // 0 = grow until pure
    int mtry = 0;       // features tried per node; 0 = floor(sqrt(columns))
    int min_leaf = 1;
    std::uint64_t seed = 0;  // tree t draws from Rng(seed + t)

    void validate() const;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
};

// Bagged CART trees: bootstrap per tree, Gini splits, mtry features sampled
// per node, majority-vote prediction with ties going to label 0.
class RandomForest : public Classifier {
  public:
    int predict(const SparseRow& row) const override;
    int tree_count() const { return static_cast<int>(trees_.size()); }

  private:
    friend RandomForest rf_train(const std::vector<SparseRow>&,
                                 const std::vector<int>&, int, const RfConfig&);
    std::vector<std::vector<TreeNode>> trees_;
    int n_columns_ = 0;
};

RandomForest rf_train(const std::vector<SparseRow>& X, const std::vector<int>& y,
                      int n_columns, const RfConfig& cfg);

struct Scores {
    double accuracy = 0.0;
    double f1 = 0.0;  // positive class
};

// Accuracy and positive-class F1 from a confusion matrix; empty denominators
// give zero precision/recall/F1 rather than NaN.
Scores scores_from_counts(int tp, int fp, int fn, int tn);

Scores evaluate_classifier(const Classifier& model, const std::vector<SparseRow>& X,
                           const std::vector<int>& y);

// 100 * (enhanced - baseline) / baseline.
double increment_pct(double baseline, double enhanced);

// Valid paraphrase texts for one training doc, best first. The doc index
// lets implementations isolate per-document randomness.
using ParaphraseFn =
    std::function<std::vector<std::string>(const LabeledDoc&, std::uint64_t)>;

// Originals in order, then up to per_doc paraphrases per doc appended as new
// docs carrying the source doc's label and origin=augmented. per_doc=0
// returns the input unchanged.
std::vector<LabeledDoc> augment_training_set(const std::vector<LabeledDoc>& train,
                                             const ParaphraseFn& paraphrase,
                                             int per_doc = 1);

enum class ClassifierKind { kNbSvm, kRandomForest };

std::string classifier_name(ClassifierKind kind);
ClassifierKind classifier_from_name(const std::string& name);  // InputError

struct ExperimentConfig {
    ClassifierKind classifier = ClassifierKind::kNbSvm;
    NbSvmConfig nbsvm;
    RfConfig rf;
    int per_doc = 1;
    int max_n = 3;
    std::uint64_t pipeline_seed = 0;  // recorded in the report

    void validate() const;
};

struct ClassifierReport {
    std::string classifier;
    Scores baseline;
    Scores enhanced;
    double increment_acc_pct = 0.0;
    double increment_f1_pct = 0.0;
    int train_docs = 0;
    int augmented_docs = 0;  // docs added on top of the originals
    int test_docs = 0;
    ExperimentConfig config;
};

std::string report_to_json(const ClassifierReport& report);

// Baseline condition trains on train as-is; the enhanced condition rebuilds
// the feature space over train plus paraphrases and retrains with identical
// hyperparameters. The test split and its labels are shared by both.
ClassifierReport run_experiment(const std::vector<LabeledDoc>& train,
                                const std::vector<LabeledDoc>& test,
                                const ExperimentConfig& cfg,
                                const ParaphraseFn& paraphrase);

}  // namespace paragen::augment
