// Desk-scale decoder-only autoregressive transformer.
//
// Pre-norm residual blocks, learned positional embeddings, input/output
// embeddings tied. Everything runs on the CPU kernels in kernels.hpp; all
// math is `real` (double unless PARAGEN_SINGLE_PRECISION).
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "paragen/corpus.hpp"
#include "paragen/real.hpp"
#include "paragen/rng.hpp"

namespace paragen {

using corpus::TrainingExample;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 128;
    int n_heads = 4;
    int n_layers = 4;
    int d_ffn = 512;
    int max_len = 128;
    real dropout = 0;  // applied to embedding sum and residual branches while training

    void validate() const;  // throws InputError
    int head_dim() const { return d_model / n_heads; }
};

// Parameter storage is one flat vector; tensors live at fixed offsets in the
// order visited by for_each_tensor. Checkpoints serialize the same order.
struct TensorRef {
    std::string name;  // "tok_emb", "block3.wq", ...
    std::int64_t offset = 0;
    int rows = 0;
    int cols = 0;  // 1 for vectors
    std::int64_t size() const { return static_cast<std::int64_t>(rows) * cols; }
};

void for_each_tensor(const ModelConfig& cfg, const std::function<void(const TensorRef&)>& fn);
std::int64_t param_count(const ModelConfig& cfg);

class Model {
public:
    explicit Model(const ModelConfig& cfg);  // zero-initialized parameters

    // Embeddings and weight matrices ~ N(0, 0.02^2), biases and layernorm
    // betas 0, layernorm gammas 1. Draw order is the tensor order.
    void init(std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::vector<real>& params() { return params_; }
    const std::vector<real>& params() const { return params_; }

    // Full-sequence forward; logits resized to [len(ids) x vocab_size].
    // Causal: row i depends only on ids[0..i].
    void forward(const std::vector<int>& ids, std::vector<real>& logits) const;

    // Mean next-token NLL over counted positions of the batch (token-weighted).
    // Every position counts unless target_only, which restricts to positions
    // predicting tokens strictly after SEP. PAD targets never count.
    real nll_loss(const std::vector<TrainingExample>& batch, bool target_only = false) const;

    // Same loss, plus its exact gradient written over `grad` (resized, not
    // accumulated). dropout_rng enables dropout at config().dropout; null
    // keeps the pass identical to nll_loss.
    real loss_and_grad(const std::vector<TrainingExample>& batch, std::vector<real>& grad,
                       bool target_only = false, Rng* dropout_rng = nullptr) const;

    // exp(mean per-token NLL) over the dataset.
    real perplexity(const std::vector<TrainingExample>& dataset,
                    bool target_only = false) const;

    // Row of the input embedding table, d_model entries. The output
    // projection reuses these rows (tied weights).
    const real* token_embedding(int id) const;

private:
    friend class DecodeState;
    ModelConfig cfg_;
    std::vector<real> params_;
    std::vector<TensorRef> tensors_;

    const real* tensor(const char* name) const;
    real* tensor(const char* name);
};

// Incremental decoding with per-layer key/value caches. Feeding tokens one at
// a time reproduces the full forward pass bit for bit (same kernels, same
// per-element order).
class DecodeState {
public:
    explicit DecodeState(const Model& model);

    // Appends one token and returns the logits row for the next position.
    // Throws InputError once max_len positions are consumed.
    const std::vector<real>& step(int id);

    int length() const { return t_; }

private:
    const Model& model_;
    int t_ = 0;
    // per layer, per head: cached K and V rows, [n_heads][max_len x head_dim]
    std::vector<std::vector<real>> kcache_, vcache_;
    std::vector<real> logits_row_;
    std::vector<real> x_, scratch_;
};

struct SampleConfig {
    int k = 10;
    real temperature = 1;
    int max_new = 64;

    void validate(int vocab_size) const;  // throws InputError
};

// Top-k sampling of a continuation. The prompt must end with SEP. At each
// step the k highest logits (ties broken toward the lower id) are kept,
// divided by temperature and softmaxed; PAD/BOS/SEP are masked out before
// selection. Stops at EOS, max_new tokens, or the positional limit. The
// returned sequence excludes the prompt and the terminating EOS. k=1 is
// greedy decoding and ignores the generator.
std::vector<int> sample_top_k(const Model& model, const std::vector<int>& prompt,
                              const SampleConfig& scfg, Rng& rng);

struct TrainConfig {
    real learning_rate = static_cast<real>(3e-4);
    int batch_size = 16;
    int max_epochs = 5;
    int patience = 2;  // non-improving validations tolerated before stopping
    std::uint64_t seed = 0;
    bool target_only_loss = false;
    real warmup_frac = static_cast<real>(0.05);  // linear LR warmup, fraction of total steps

    void validate() const;  // throws InputError
};

// Stops once `patience` consecutive observations fail to improve on the best.
// Only strictly lower values count as improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience);
    bool observe(real value);  // true = stop now
    real best() const { return best_; }
    int bad_streak() const { return bad_; }

private:
    real best_;
    int bad_ = 0;
    int patience_;
};

struct Checkpoint {
    ModelConfig config;
    std::vector<real> params;
    std::uint64_t vocab_hash = 0;
    int best_epoch = 0;  // 1-based epoch whose parameters were kept
    double valid_perplexity = 0;

    Model to_model() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    real train_loss = 0;
    real valid_perplexity = 0;
    bool improved = false;
};
using EpochCallback = std::function<void(const EpochStats&)>;

// Epoch loop: deterministic batch order per (seed, epoch), adaptive-moment
// updates with linear warmup, validation perplexity after every epoch, best
// parameters kept, early stop on `patience` stale validations. A NaN batch
// loss aborts with NumericError. warm_start, when given, must match cfg and
// replaces the random init.
Checkpoint train(const std::vector<TrainingExample>& train_set,
                 const std::vector<TrainingExample>& valid_set, const ModelConfig& cfg,
                 const TrainConfig& tcfg, std::uint64_t vocab_hash,
                 const EpochCallback& on_epoch = {}, const Model* warm_start = nullptr);

// Versioned binary container; see docs/formats.md. Loading re-validates the
// header and fails on magic/version/shape mismatch. expected_vocab_hash != 0
// additionally pins the vocabulary.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash = 0);

}  // namespace paragen
