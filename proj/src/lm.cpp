#include "paragen/lm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "paragen/errors.hpp"
#include "paragen/kernels.hpp"

namespace paragen {

namespace ker = kernels;

void ModelConfig::validate() const {
    if (vocab_size < corpus::kNumSpecials)
        throw InputError("model config: vocab_size must cover the special tokens");
    if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ffn < 1 || max_len < 1)
        throw InputError("model config: all dimensions must be >= 1");
    if (d_model % n_heads != 0)
        throw InputError("model config: d_model must be divisible by n_heads");
    if (!(dropout >= 0 && dropout < 1))
        throw InputError("model config: dropout must lie in [0, 1)");
}

void for_each_tensor(const ModelConfig& cfg,
                     const std::function<void(const TensorRef&)>& fn) {
    const int d = cfg.d_model;
    const int f = cfg.d_ffn;
    std::int64_t off = 0;
    auto emit = [&](std::string name, int rows, int cols) {
        TensorRef r{std::move(name), off, rows, cols};
        off += r.size();
        fn(r);
    };
    emit("tok_emb", cfg.vocab_size, d);
    emit("pos_emb", cfg.max_len, d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        emit(p + "ln1.gamma", d, 1);
        emit(p + "ln1.beta", d, 1);
        emit(p + "wq", d, d);
        emit(p + "bq", d, 1);
        emit(p + "wk", d, d);
        emit(p + "bk", d, 1);
        emit(p + "wv", d, d);
        emit(p + "bv", d, 1);
        emit(p + "wo", d, d);
        emit(p + "bo", d, 1);
        emit(p + "ln2.gamma", d, 1);
        emit(p + "ln2.beta", d, 1);
        emit(p + "w1", d, f);
        emit(p + "b1", f, 1);
        emit(p + "w2", f, d);
        emit(p + "b2", d, 1);
    }
    emit("lnf.gamma", d, 1);
    emit("lnf.beta", d, 1);
}

std::int64_t param_count(const ModelConfig& cfg) {
    std::int64_t total = 0;
    for_each_tensor(cfg, [&](const TensorRef& r) { total = r.offset + r.size(); });
    return total;
}

namespace {

// Tensor index within a block, matching the for_each_tensor emission order.
enum BlockTensor : int {
    kLn1G = 0,
    kLn1B,
    kWq,
    kBq,
    kWk,
    kBk,
    kWv,
    kBv,
    kWo,
    kBo,
    kLn2G,
    kLn2B,
    kW1,
    kB1,
    kW2,
    kB2,
    kPerBlock,
};

constexpr int kTokEmbIdx = 0;
constexpr int kPosEmbIdx = 1;
constexpr int kFirstBlockIdx = 2;

inline int lnf_gamma_idx(const ModelConfig& cfg) {
    return kFirstBlockIdx + cfg.n_layers * kPerBlock;
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for_each_tensor(cfg_, [&](const TensorRef& r) { tensors_.push_back(r); });
    params_.assign(static_cast<std::size_t>(param_count(cfg_)), real{0});
}

void Model::init(std::uint64_t seed) {
    Rng rng(seed);
    for (const TensorRef& r : tensors_) {
        real* p = params_.data() + r.offset;
        const bool gaussian = r.name == "tok_emb" || r.name == "pos_emb" ||
                              r.name.find(".w") != std::string::npos;
        const bool ones = r.name.size() > 5 && r.name.ends_with("gamma");
        if (gaussian) {
            for (std::int64_t i = 0; i < r.size(); ++i)
                p[i] = static_cast<real>(0.02 * rng.normal());
        } else if (ones) {
            std::fill(p, p + r.size(), real{1});
        } else {
            std::fill(p, p + r.size(), real{0});
        }
    }
}

const real* Model::tensor(const char* name) const {
    for (const TensorRef& r : tensors_)
        if (r.name == name) return params_.data() + r.offset;
    throw InputError(std::string("unknown tensor: ") + name);
}

real* Model::tensor(const char* name) {
    return const_cast<real*>(static_cast<const Model*>(this)->tensor(name));
}

const real* Model::token_embedding(int id) const {
    if (id < 0 || id >= cfg_.vocab_size)
        throw InputError("token_embedding: id out of range");
    return tensor("tok_emb") + static_cast<std::ptrdiff_t>(id) * cfg_.d_model;
}

namespace {

// Everything cached by the forward pass of one sequence, enough to run the
// exact backward pass.
struct LayerCache {
    std::vector<real> h1, q, k, v;        // [t x d]
    std::vector<real> qh, kh, vh;         // head-major, [H][t x dh]
    std::vector<real> probs;              // [H][t x t]
    std::vector<real> attn_pre, ao;       // [t x d]
    std::vector<real> xmid, h2;           // [t x d]
    std::vector<real> f1, g;              // [t x f]
    std::vector<real> mlp_out;            // [t x d]
    std::vector<real> mean1, rstd1, mean2, rstd2;  // [t]
    std::vector<real> mask_attn, mask_mlp;         // [t x d], dropout only
};

struct SeqWorkspace {
    std::vector<std::vector<real>> xs;  // n_layers + 1 buffers of [t x d]
    std::vector<real> mask_emb;
    std::vector<LayerCache> layers;
    std::vector<real> meanf, rstdf, xf;  // final layernorm
    std::vector<real> logits, losses, lse;
    std::vector<int> targets;
};

struct ParamView {
    const ModelConfig& cfg;
    const std::vector<TensorRef>& tensors;
    const real* p;

    const real* at(int idx) const { return p + tensors[static_cast<std::size_t>(idx)].offset; }
    const real* block(int l, BlockTensor t) const {
        return at(kFirstBlockIdx + l * kPerBlock + t);
    }
    const real* tok_emb() const { return at(kTokEmbIdx); }
    const real* pos_emb() const { return at(kPosEmbIdx); }
    const real* lnf_gamma() const { return at(lnf_gamma_idx(cfg)); }
    const real* lnf_beta() const { return at(lnf_gamma_idx(cfg) + 1); }
};

struct GradView {
    const ModelConfig& cfg;
    const std::vector<TensorRef>& tensors;
    real* g;

    real* at(int idx) const { return g + tensors[static_cast<std::size_t>(idx)].offset; }
    real* block(int l, BlockTensor t) const { return at(kFirstBlockIdx + l * kPerBlock + t); }
};

void fill_dropout_mask(std::vector<real>& mask, std::size_t n, real p, Rng& rng) {
    mask.resize(n);
    const real keep_scale = real{1} / (real{1} - p);
    for (std::size_t i = 0; i < n; ++i)
        mask[i] = rng.bernoulli(static_cast<double>(p)) ? real{0} : keep_scale;
}

void apply_mask(real* x, const std::vector<real>& mask) {
    for (std::size_t i = 0; i < mask.size(); ++i) x[i] *= mask[i];
}

void slice_heads(const real* x, int t, int d, int n_heads, int dh, real* out) {
    // [t x d] -> [H][t x dh]
    for (int h = 0; h < n_heads; ++h)
        for (int i = 0; i < t; ++i)
            std::memcpy(out + (static_cast<std::ptrdiff_t>(h) * t + i) * dh,
                        x + static_cast<std::ptrdiff_t>(i) * d + h * dh,
                        sizeof(real) * static_cast<std::size_t>(dh));
}

void merge_heads(const real* x, int t, int d, int n_heads, int dh, real* out) {
    // [H][t x dh] -> [t x d]
    for (int h = 0; h < n_heads; ++h)
        for (int i = 0; i < t; ++i)
            std::memcpy(out + static_cast<std::ptrdiff_t>(i) * d + h * dh,
                        x + (static_cast<std::ptrdiff_t>(h) * t + i) * dh,
                        sizeof(real) * static_cast<std::size_t>(dh));
}

void add_into(real* dst, const real* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

// Forward pass over one sequence, filling the workspace. Dropout fires only
// when rng is non-null and cfg.dropout > 0.
void seq_forward(const ParamView& pv, const std::vector<int>& ids, SeqWorkspace& w,
                 Rng* dropout_rng) {
    const ModelConfig& cfg = pv.cfg;
    const int t = static_cast<int>(ids.size());
    const int d = cfg.d_model;
    const int f = cfg.d_ffn;
    const int nh = cfg.n_heads;
    const int dh = cfg.head_dim();
    const std::size_t td = static_cast<std::size_t>(t) * d;
    const real scale = real{1} / std::sqrt(static_cast<real>(dh));
    const bool drop = dropout_rng != nullptr && cfg.dropout > 0;

    if (t < 1) throw InputError("forward: empty sequence");
    if (t > cfg.max_len) throw InputError("forward: sequence longer than max_len");
    for (int id : ids)
        if (id < 0 || id >= cfg.vocab_size) throw InputError("forward: token id out of range");

    w.xs.resize(static_cast<std::size_t>(cfg.n_layers) + 1);
    w.layers.resize(static_cast<std::size_t>(cfg.n_layers));

    std::vector<real>& x0 = w.xs[0];
    x0.resize(td);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j)
            x0[static_cast<std::size_t>(i) * d + j] =
                pv.tok_emb()[static_cast<std::ptrdiff_t>(ids[static_cast<std::size_t>(i)]) * d + j] +
                pv.pos_emb()[static_cast<std::ptrdiff_t>(i) * d + j];
    if (drop) {
        fill_dropout_mask(w.mask_emb, td, cfg.dropout, *dropout_rng);
        apply_mask(x0.data(), w.mask_emb);
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = w.layers[static_cast<std::size_t>(l)];
        const real* xin = w.xs[static_cast<std::size_t>(l)].data();

        lc.mean1.resize(static_cast<std::size_t>(t));
        lc.rstd1.resize(static_cast<std::size_t>(t));
        lc.h1.resize(td);
        ker::layernorm_fwd(xin, t, d, pv.block(l, kLn1G), pv.block(l, kLn1B), lc.h1.data(),
                           lc.mean1.data(), lc.rstd1.data());

        lc.q.resize(td);
        lc.k.resize(td);
        lc.v.resize(td);
        ker::matmul_nn(lc.h1.data(), t, d, pv.block(l, kWq), d, lc.q.data());
        ker::add_bias(lc.q.data(), t, d, pv.block(l, kBq));
        ker::matmul_nn(lc.h1.data(), t, d, pv.block(l, kWk), d, lc.k.data());
        ker::add_bias(lc.k.data(), t, d, pv.block(l, kBk));
        ker::matmul_nn(lc.h1.data(), t, d, pv.block(l, kWv), d, lc.v.data());
        ker::add_bias(lc.v.data(), t, d, pv.block(l, kBv));

        lc.qh.resize(td);
        lc.kh.resize(td);
        lc.vh.resize(td);
        slice_heads(lc.q.data(), t, d, nh, dh, lc.qh.data());
        slice_heads(lc.k.data(), t, d, nh, dh, lc.kh.data());
        slice_heads(lc.v.data(), t, d, nh, dh, lc.vh.data());

        lc.probs.assign(static_cast<std::size_t>(nh) * t * t, real{0});
        std::vector<real> hout(td);
        for (int h = 0; h < nh; ++h) {
            const real* qh = lc.qh.data() + static_cast<std::ptrdiff_t>(h) * t * dh;
            const real* kh = lc.kh.data() + static_cast<std::ptrdiff_t>(h) * t * dh;
            const real* vh = lc.vh.data() + static_cast<std::ptrdiff_t>(h) * t * dh;
            real* ph = lc.probs.data() + static_cast<std::ptrdiff_t>(h) * t * t;
            ker::attn_probs(qh, kh, t, dh, scale, ph);
            ker::matmul_nn(ph, t, t, vh, dh,
                           hout.data() + static_cast<std::ptrdiff_t>(h) * t * dh);
        }
        lc.attn_pre.resize(td);
        merge_heads(hout.data(), t, d, nh, dh, lc.attn_pre.data());

        lc.ao.resize(td);
        ker::matmul_nn(lc.attn_pre.data(), t, d, pv.block(l, kWo), d, lc.ao.data());
        ker::add_bias(lc.ao.data(), t, d, pv.block(l, kBo));
        if (drop) {
            fill_dropout_mask(lc.mask_attn, td, cfg.dropout, *dropout_rng);
            apply_mask(lc.ao.data(), lc.mask_attn);
        }

        lc.xmid.resize(td);
        for (std::size_t i = 0; i < td; ++i) lc.xmid[i] = xin[i] + lc.ao[i];

        lc.mean2.resize(static_cast<std::size_t>(t));
        lc.rstd2.resize(static_cast<std::size_t>(t));
        lc.h2.resize(td);
        ker::layernorm_fwd(lc.xmid.data(), t, d, pv.block(l, kLn2G), pv.block(l, kLn2B),
                           lc.h2.data(), lc.mean2.data(), lc.rstd2.data());

        lc.f1.resize(static_cast<std::size_t>(t) * f);
        ker::matmul_nn(lc.h2.data(), t, d, pv.block(l, kW1), f, lc.f1.data());
        ker::add_bias(lc.f1.data(), t, f, pv.block(l, kB1));
        lc.g.resize(static_cast<std::size_t>(t) * f);
        ker::gelu_fwd(lc.f1.data(), static_cast<std::int64_t>(t) * f, lc.g.data());
        lc.mlp_out.resize(td);
        ker::matmul_nn(lc.g.data(), t, f, pv.block(l, kW2), d, lc.mlp_out.data());
        ker::add_bias(lc.mlp_out.data(), t, d, pv.block(l, kB2));
        if (drop) {
            fill_dropout_mask(lc.mask_mlp, td, cfg.dropout, *dropout_rng);
            apply_mask(lc.mlp_out.data(), lc.mask_mlp);
        }

        std::vector<real>& xout = w.xs[static_cast<std::size_t>(l) + 1];
        xout.resize(td);
        for (std::size_t i = 0; i < td; ++i) xout[i] = lc.xmid[i] + lc.mlp_out[i];
    }

    w.meanf.resize(static_cast<std::size_t>(t));
    w.rstdf.resize(static_cast<std::size_t>(t));
    w.xf.resize(td);
    ker::layernorm_fwd(w.xs[static_cast<std::size_t>(cfg.n_layers)].data(), t, d,
                       pv.lnf_gamma(), pv.lnf_beta(), w.xf.data(), w.meanf.data(),
                       w.rstdf.data());

    w.logits.resize(static_cast<std::size_t>(t) * cfg.vocab_size);
    ker::matmul_nt(w.xf.data(), t, d, pv.tok_emb(), cfg.vocab_size, w.logits.data());
}

// Next-token targets; -1 marks positions excluded from the loss.
void fill_targets(const TrainingExample& ex, bool target_only, std::vector<int>& targets) {
    const int t = static_cast<int>(ex.input_ids.size());
    targets.assign(static_cast<std::size_t>(t), -1);
    for (int i = 0; i + 1 < t; ++i) {
        const int next = ex.input_ids[static_cast<std::size_t>(i) + 1];
        if (next == corpus::kPad) continue;
        if (target_only && i < ex.sep_index) continue;
        targets[static_cast<std::size_t>(i)] = next;
    }
}

// Backward pass for one sequence. dlogits was already produced by ce_bwd with
// the batch scale folded in; parameter gradients accumulate into gv.
void seq_backward(const ParamView& pv, const GradView& gv, const std::vector<int>& ids,
                  SeqWorkspace& w, const std::vector<real>& dlogits) {
    const ModelConfig& cfg = pv.cfg;
    const int t = static_cast<int>(ids.size());
    const int d = cfg.d_model;
    const int f = cfg.d_ffn;
    const int nh = cfg.n_heads;
    const int dh = cfg.head_dim();
    const int v = cfg.vocab_size;
    const std::size_t td = static_cast<std::size_t>(t) * d;
    const real scale = real{1} / std::sqrt(static_cast<real>(dh));
    const bool drop = !w.mask_emb.empty();

    // logits = xf tok_emb^T
    std::vector<real> dxf(td);
    ker::matmul_nn(dlogits.data(), t, v, pv.tok_emb(), d, dxf.data());
    ker::matmul_tn_acc(dlogits.data(), t, v, w.xf.data(), d, gv.at(kTokEmbIdx));

    std::vector<real> dx(td);
    ker::layernorm_bwd(w.xs[static_cast<std::size_t>(cfg.n_layers)].data(), t, d,
                       pv.lnf_gamma(), w.meanf.data(), w.rstdf.data(), dxf.data(), dx.data(),
                       gv.at(lnf_gamma_idx(cfg)), gv.at(lnf_gamma_idx(cfg) + 1));

    std::vector<real> dmlp(td), dg(static_cast<std::size_t>(t) * f),
        df1(static_cast<std::size_t>(t) * f), dh2(td), dxmid_part(td), dao(td),
        dattn_pre(td), dqh(td), dkh(td), dvh(td), dq(td), dk(td), dv(td), dh1(td), tmp(td),
        dxin_part(td);
    std::vector<real> dp(static_cast<std::size_t>(t) * t), ds(static_cast<std::size_t>(t) * t);
    std::vector<real> dhout(td);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        LayerCache& lc = w.layers[static_cast<std::size_t>(l)];
        const real* xin = w.xs[static_cast<std::size_t>(l)].data();

        // mlp branch: xout = xmid + drop(g w2 + b2)
        std::copy(dx.begin(), dx.end(), dmlp.begin());
        if (drop) apply_mask(dmlp.data(), lc.mask_mlp);
        ker::bias_grad_acc(dmlp.data(), t, d, gv.block(l, kB2));
        ker::matmul_tn_acc(lc.g.data(), t, f, dmlp.data(), d, gv.block(l, kW2));
        ker::matmul_nt(dmlp.data(), t, d, pv.block(l, kW2), f, dg.data());
        ker::gelu_bwd(lc.f1.data(), static_cast<std::int64_t>(t) * f, dg.data(), df1.data());
        ker::bias_grad_acc(df1.data(), t, f, gv.block(l, kB1));
        ker::matmul_tn_acc(lc.h2.data(), t, d, df1.data(), f, gv.block(l, kW1));
        ker::matmul_nt(df1.data(), t, f, pv.block(l, kW1), d, dh2.data());
        ker::layernorm_bwd(lc.xmid.data(), t, d, pv.block(l, kLn2G), lc.mean2.data(),
                           lc.rstd2.data(), dh2.data(), dxmid_part.data(),
                           gv.block(l, kLn2G), gv.block(l, kLn2B));
        // d xmid = residual flow + layernorm input grad
        for (std::size_t i = 0; i < td; ++i) dx[i] += dxmid_part[i];

        // attention branch: xmid = xin + drop(attn_pre wo + bo)
        std::copy(dx.begin(), dx.end(), dao.begin());
        if (drop) apply_mask(dao.data(), lc.mask_attn);
        ker::bias_grad_acc(dao.data(), t, d, gv.block(l, kBo));
        ker::matmul_tn_acc(lc.attn_pre.data(), t, d, dao.data(), d, gv.block(l, kWo));
        ker::matmul_nt(dao.data(), t, d, pv.block(l, kWo), d, dattn_pre.data());

        slice_heads(dattn_pre.data(), t, d, nh, dh, dhout.data());
        std::fill(dqh.begin(), dqh.end(), real{0});
        std::fill(dkh.begin(), dkh.end(), real{0});
        std::fill(dvh.begin(), dvh.end(), real{0});
        for (int h = 0; h < nh; ++h) {
            const std::ptrdiff_t ho = static_cast<std::ptrdiff_t>(h) * t * dh;
            const real* ph = lc.probs.data() + static_cast<std::ptrdiff_t>(h) * t * t;
            const real* doh = dhout.data() + ho;
            ker::matmul_nt(doh, t, dh, lc.vh.data() + ho, t, dp.data());
            ker::matmul_tn_acc(ph, t, t, doh, dh, dvh.data() + ho);
            ker::softmax_bwd_rows(ph, dp.data(), t, t, ds.data());
            for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= scale;
            ker::matmul_nn(ds.data(), t, t, lc.kh.data() + ho, dh, dqh.data() + ho);
            ker::matmul_tn_acc(ds.data(), t, t, lc.qh.data() + ho, dh, dkh.data() + ho);
        }
        merge_heads(dqh.data(), t, d, nh, dh, dq.data());
        merge_heads(dkh.data(), t, d, nh, dh, dk.data());
        merge_heads(dvh.data(), t, d, nh, dh, dv.data());

        ker::bias_grad_acc(dq.data(), t, d, gv.block(l, kBq));
        ker::bias_grad_acc(dk.data(), t, d, gv.block(l, kBk));
        ker::bias_grad_acc(dv.data(), t, d, gv.block(l, kBv));
        ker::matmul_tn_acc(lc.h1.data(), t, d, dq.data(), d, gv.block(l, kWq));
        ker::matmul_tn_acc(lc.h1.data(), t, d, dk.data(), d, gv.block(l, kWk));
        ker::matmul_tn_acc(lc.h1.data(), t, d, dv.data(), d, gv.block(l, kWv));

        ker::matmul_nt(dq.data(), t, d, pv.block(l, kWq), d, dh1.data());
        ker::matmul_nt(dk.data(), t, d, pv.block(l, kWk), d, tmp.data());
        add_into(dh1.data(), tmp.data(), td);
        ker::matmul_nt(dv.data(), t, d, pv.block(l, kWv), d, tmp.data());
        add_into(dh1.data(), tmp.data(), td);

        ker::layernorm_bwd(xin, t, d, pv.block(l, kLn1G), lc.mean1.data(), lc.rstd1.data(),
                           dh1.data(), dxin_part.data(), gv.block(l, kLn1G),
                           gv.block(l, kLn1B));
        for (std::size_t i = 0; i < td; ++i) dx[i] += dxin_part[i];
    }

    if (drop) apply_mask(dx.data(), w.mask_emb);
    ker::emb_scatter_add(dx.data(), t, d, ids.data(), gv.at(kTokEmbIdx));
    std::vector<int> pos_ids(static_cast<std::size_t>(t));
    std::iota(pos_ids.begin(), pos_ids.end(), 0);
    ker::emb_scatter_add(dx.data(), t, d, pos_ids.data(), gv.at(kPosEmbIdx));
}

std::int64_t count_loss_positions(const std::vector<TrainingExample>& batch,
                                  bool target_only) {
    std::int64_t n = 0;
    std::vector<int> targets;
    for (const TrainingExample& ex : batch) {
        fill_targets(ex, target_only, targets);
        for (int tgt : targets) n += tgt >= 0 ? 1 : 0;
    }
    return n;
}

}  // namespace

void Model::forward(const std::vector<int>& ids, std::vector<real>& logits) const {
    SeqWorkspace w;
    ParamView pv{cfg_, tensors_, params_.data()};
    seq_forward(pv, ids, w, nullptr);
    logits = std::move(w.logits);
}

real Model::nll_loss(const std::vector<TrainingExample>& batch, bool target_only) const {
    if (batch.empty()) throw InputError("nll_loss: empty batch");
    const std::int64_t total = count_loss_positions(batch, target_only);
    if (total == 0) throw InputError("nll_loss: no positions contribute to the loss");
    ParamView pv{cfg_, tensors_, params_.data()};
    real sum = 0;
    SeqWorkspace w;
    for (const TrainingExample& ex : batch) {
        seq_forward(pv, ex.input_ids, w, nullptr);
        const int t = static_cast<int>(ex.input_ids.size());
        fill_targets(ex, target_only, w.targets);
        w.losses.resize(static_cast<std::size_t>(t));
        w.lse.resize(static_cast<std::size_t>(t));
        ker::ce_fwd(w.logits.data(), t, cfg_.vocab_size, w.targets.data(), w.losses.data(),
                    w.lse.data());
        for (int i = 0; i < t; ++i) sum += w.losses[static_cast<std::size_t>(i)];
    }
    return sum / static_cast<real>(total);
}

real Model::loss_and_grad(const std::vector<TrainingExample>& batch, std::vector<real>& grad,
                          bool target_only, Rng* dropout_rng) const {
    if (batch.empty()) throw InputError("loss_and_grad: empty batch");
    const std::int64_t total = count_loss_positions(batch, target_only);
    if (total == 0) throw InputError("loss_and_grad: no positions contribute to the loss");
    grad.assign(params_.size(), real{0});
    ParamView pv{cfg_, tensors_, params_.data()};
    GradView gv{cfg_, tensors_, grad.data()};
    const real scale = real{1} / static_cast<real>(total);

    real sum = 0;
    SeqWorkspace w;
    std::vector<real> dlogits;
    for (const TrainingExample& ex : batch) {
        w.mask_emb.clear();
        seq_forward(pv, ex.input_ids, w, dropout_rng);
        const int t = static_cast<int>(ex.input_ids.size());
        fill_targets(ex, target_only, w.targets);
        w.losses.resize(static_cast<std::size_t>(t));
        w.lse.resize(static_cast<std::size_t>(t));
        ker::ce_fwd(w.logits.data(), t, cfg_.vocab_size, w.targets.data(), w.losses.data(),
                    w.lse.data());
        for (int i = 0; i < t; ++i) sum += w.losses[static_cast<std::size_t>(i)];
        dlogits.resize(static_cast<std::size_t>(t) * cfg_.vocab_size);
        ker::ce_bwd(w.logits.data(), t, cfg_.vocab_size, w.targets.data(), w.lse.data(),
                    scale, dlogits.data());
        seq_backward(pv, gv, ex.input_ids, w, dlogits);
    }
    return sum / static_cast<real>(total);
}

real Model::perplexity(const std::vector<TrainingExample>& dataset, bool target_only) const {
    if (dataset.empty()) throw InputError("perplexity: empty dataset");
    return std::exp(nll_loss(dataset, target_only));
}

// ---- incremental decoding ----

DecodeState::DecodeState(const Model& model) : model_(model) {
    const ModelConfig& cfg = model.cfg_;
    const std::size_t per_layer =
        static_cast<std::size_t>(cfg.n_heads) * cfg.max_len * cfg.head_dim();
    kcache_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<real>(per_layer));
    vcache_.assign(static_cast<std::size_t>(cfg.n_layers), std::vector<real>(per_layer));
    logits_row_.resize(static_cast<std::size_t>(cfg.vocab_size));
}

const std::vector<real>& DecodeState::step(int id) {
    const ModelConfig& cfg = model_.cfg_;
    const int d = cfg.d_model;
    const int f = cfg.d_ffn;
    const int nh = cfg.n_heads;
    const int dh = cfg.head_dim();
    const int pos = t_;
    const real scale = real{1} / std::sqrt(static_cast<real>(dh));
    if (pos >= cfg.max_len) throw InputError("decode: positional capacity exhausted");
    if (id < 0 || id >= cfg.vocab_size) throw InputError("decode: token id out of range");

    ParamView pv{cfg, model_.tensors_, model_.params_.data()};
    x_.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        x_[static_cast<std::size_t>(j)] = pv.tok_emb()[static_cast<std::ptrdiff_t>(id) * d + j] +
                                          pv.pos_emb()[static_cast<std::ptrdiff_t>(pos) * d + j];

    std::vector<real> h1(static_cast<std::size_t>(d)), qkv(static_cast<std::size_t>(d) * 3),
        attn_pre(static_cast<std::size_t>(d)), ao(static_cast<std::size_t>(d)),
        h2(static_cast<std::size_t>(d)), f1(static_cast<std::size_t>(f)),
        g(static_cast<std::size_t>(f)), mlp(static_cast<std::size_t>(d)), mean(1), rstd(1),
        prow(static_cast<std::size_t>(pos) + 1);
    real* q = qkv.data();
    real* k = qkv.data() + d;
    real* v = qkv.data() + 2 * d;

    for (int l = 0; l < cfg.n_layers; ++l) {
        ker::layernorm_fwd(x_.data(), 1, d, pv.block(l, kLn1G), pv.block(l, kLn1B), h1.data(),
                           mean.data(), rstd.data());
        ker::matmul_nn(h1.data(), 1, d, pv.block(l, kWq), d, q);
        ker::add_bias(q, 1, d, pv.block(l, kBq));
        ker::matmul_nn(h1.data(), 1, d, pv.block(l, kWk), d, k);
        ker::add_bias(k, 1, d, pv.block(l, kBk));
        ker::matmul_nn(h1.data(), 1, d, pv.block(l, kWv), d, v);
        ker::add_bias(v, 1, d, pv.block(l, kBv));

        real* kc = kcache_[static_cast<std::size_t>(l)].data();
        real* vc = vcache_[static_cast<std::size_t>(l)].data();
        for (int h = 0; h < nh; ++h) {
            real* kh = kc + (static_cast<std::ptrdiff_t>(h) * cfg.max_len + pos) * dh;
            real* vh = vc + (static_cast<std::ptrdiff_t>(h) * cfg.max_len + pos) * dh;
            std::memcpy(kh, k + h * dh, sizeof(real) * static_cast<std::size_t>(dh));
            std::memcpy(vh, v + h * dh, sizeof(real) * static_cast<std::size_t>(dh));
        }
        for (int h = 0; h < nh; ++h) {
            const real* khead = kc + static_cast<std::ptrdiff_t>(h) * cfg.max_len * dh;
            const real* vhead = vc + static_cast<std::ptrdiff_t>(h) * cfg.max_len * dh;
            ker::attn_probs_row(q + h * dh, khead, pos + 1, dh, scale, prow.data());
            ker::matmul_nn(prow.data(), 1, pos + 1, vhead, dh, attn_pre.data() + h * dh);
        }
        ker::matmul_nn(attn_pre.data(), 1, d, pv.block(l, kWo), d, ao.data());
        ker::add_bias(ao.data(), 1, d, pv.block(l, kBo));
        for (int j = 0; j < d; ++j) x_[static_cast<std::size_t>(j)] += ao[static_cast<std::size_t>(j)];

        ker::layernorm_fwd(x_.data(), 1, d, pv.block(l, kLn2G), pv.block(l, kLn2B), h2.data(),
                           mean.data(), rstd.data());
        ker::matmul_nn(h2.data(), 1, d, pv.block(l, kW1), f, f1.data());
        ker::add_bias(f1.data(), 1, f, pv.block(l, kB1));
        ker::gelu_fwd(f1.data(), f, g.data());
        ker::matmul_nn(g.data(), 1, f, pv.block(l, kW2), d, mlp.data());
        ker::add_bias(mlp.data(), 1, d, pv.block(l, kB2));
        for (int j = 0; j < d; ++j) x_[static_cast<std::size_t>(j)] += mlp[static_cast<std::size_t>(j)];
    }

    scratch_.resize(static_cast<std::size_t>(d));
    ker::layernorm_fwd(x_.data(), 1, d, pv.lnf_gamma(), pv.lnf_beta(), scratch_.data(),
                       mean.data(), rstd.data());
    ker::matmul_nt(scratch_.data(), 1, d, pv.tok_emb(), cfg.vocab_size, logits_row_.data());
    ++t_;
    return logits_row_;
}

// ---- sampling ----

void SampleConfig::validate(int vocab_size) const {
    if (k < 1) throw InputError("sampling: k must be >= 1");
    if (k > vocab_size) throw InputError("sampling: k exceeds vocabulary size");
    if (!(temperature > 0)) throw InputError("sampling: temperature must be positive");
    if (max_new < 1) throw InputError("sampling: max_new must be >= 1");
}

std::vector<int> sample_top_k(const Model& model, const std::vector<int>& prompt,
                              const SampleConfig& scfg, Rng& rng) {
    const ModelConfig& cfg = model.config();
    scfg.validate(cfg.vocab_size);
    if (prompt.empty() || prompt.back() != corpus::kSep)
        throw InputError("sampling: prompt must end with [SEP]");
    if (static_cast<int>(prompt.size()) > cfg.max_len)
        throw InputError("sampling: prompt longer than max_len");

    DecodeState state(model);
    const std::vector<real>* logits = nullptr;
    for (int id : prompt) logits = &state.step(id);

    // ids eligible for generation; PAD/BOS/SEP never appear in output
    std::vector<int> eligible;
    eligible.reserve(static_cast<std::size_t>(cfg.vocab_size));
    for (int id = 0; id < cfg.vocab_size; ++id)
        if (id != corpus::kPad && id != corpus::kBos && id != corpus::kSep)
            eligible.push_back(id);
    const int kk = std::min<int>(scfg.k, static_cast<int>(eligible.size()));

    std::vector<int> out;
    std::vector<int> order;
    std::vector<real> probs(static_cast<std::size_t>(kk));
    while (static_cast<int>(out.size()) < scfg.max_new) {
        order = eligible;
        const std::vector<real>& row = *logits;
        std::partial_sort(order.begin(), order.begin() + kk, order.end(),
                          [&row](int a, int b) {
                              const real la = row[static_cast<std::size_t>(a)];
                              const real lb = row[static_cast<std::size_t>(b)];
                              if (la != lb) return la > lb;
                              return a < b;
                          });
        const real top = row[static_cast<std::size_t>(order[0])];
        if (!std::isfinite(top)) throw NumericError("sampling: no finite logit available");

        int chosen;
        if (kk == 1) {
            chosen = order[0];
        } else {
            real denom = 0;
            for (int i = 0; i < kk; ++i) {
                const real z =
                    (row[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - top) /
                    scfg.temperature;
                probs[static_cast<std::size_t>(i)] = std::exp(z);
                denom += probs[static_cast<std::size_t>(i)];
            }
            const real u = static_cast<real>(rng.uniform_real()) * denom;
            real acc = 0;
            chosen = order[static_cast<std::size_t>(kk) - 1];
            for (int i = 0; i < kk; ++i) {
                acc += probs[static_cast<std::size_t>(i)];
                if (u < acc) {
                    chosen = order[static_cast<std::size_t>(i)];
                    break;
                }
            }
        }

        if (chosen == corpus::kEos) break;
        out.push_back(chosen);
        if (static_cast<int>(out.size()) >= scfg.max_new) break;
        if (state.length() >= cfg.max_len) break;  // positional limit
        logits = &state.step(chosen);
    }
    return out;
}

// ---- training ----

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) throw InputError("train config: learning_rate must be >= 0");
    if (batch_size < 1) throw InputError("train config: batch_size must be >= 1");
    if (max_epochs < 1) throw InputError("train config: max_epochs must be >= 1");
    if (patience < 1) throw InputError("train config: patience must be >= 1");
    if (!(warmup_frac >= 0 && warmup_frac <= 1))
        throw InputError("train config: warmup_frac must lie in [0, 1]");
}

EarlyStopper::EarlyStopper(int patience)
    : best_(std::numeric_limits<real>::infinity()), patience_(patience) {
    if (patience < 1) throw InputError("early stopping: patience must be >= 1");
}

bool EarlyStopper::observe(real value) {
    if (value < best_) {
        best_ = value;
        bad_ = 0;
        return false;
    }
    return ++bad_ >= patience_;
}

Model Checkpoint::to_model() const {
    Model m(config);
    if (params.size() != m.params().size())
        throw InputError("checkpoint: parameter count does not match its config");
    m.params() = params;
    return m;
}

Checkpoint train(const std::vector<TrainingExample>& train_set,
                 const std::vector<TrainingExample>& valid_set, const ModelConfig& cfg,
                 const TrainConfig& tcfg, std::uint64_t vocab_hash,
                 const EpochCallback& on_epoch, const Model* warm_start) {
    cfg.validate();
    tcfg.validate();
    if (train_set.empty()) throw InputError("train: empty training set");
    if (valid_set.empty()) throw InputError("train: empty validation set");

    Model model(cfg);
    if (warm_start != nullptr) {
        if (warm_start->params().size() != model.params().size())
            throw InputError("train: warm start parameters do not match the model config");
        model.params() = warm_start->params();
    } else {
        model.init(derive_seed(tcfg.seed, "init"));
    }

    const int n = static_cast<int>(train_set.size());
    const int bs = std::min(tcfg.batch_size, n);
    const std::int64_t steps_per_epoch = (n + bs - 1) / bs;
    const std::int64_t total_steps = steps_per_epoch * tcfg.max_epochs;
    const std::int64_t warmup_steps = static_cast<std::int64_t>(
        std::ceil(static_cast<double>(tcfg.warmup_frac) * static_cast<double>(total_steps)));

    const std::int64_t np = static_cast<std::int64_t>(model.params().size());
    std::vector<real> grad, m1(static_cast<std::size_t>(np), real{0}),
        m2(static_cast<std::size_t>(np), real{0});
    Rng dropout_rng(derive_seed(tcfg.seed, "dropout"));
    Rng* drng = cfg.dropout > 0 ? &dropout_rng : nullptr;

    EarlyStopper stopper(tcfg.patience);
    Checkpoint best;
    best.config = cfg;
    best.vocab_hash = vocab_hash;
    best.valid_perplexity = std::numeric_limits<double>::infinity();

    std::int64_t step = 0;
    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng erng(derive_seed(tcfg.seed, "epoch_order", static_cast<std::uint64_t>(epoch)));
        erng.shuffle(order);

        real loss_sum = 0;
        std::int64_t batches = 0;
        for (int b = 0; b < n; b += bs) {
            const int e = std::min(b + bs, n);
            std::vector<TrainingExample> batch;
            batch.reserve(static_cast<std::size_t>(e - b));
            for (int i = b; i < e; ++i)
                batch.push_back(train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);

            ++step;
            const real loss = model.loss_and_grad(batch, grad, tcfg.target_only_loss, drng);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << ", step "
                   << step;
                throw NumericError(os.str());
            }
            real lr = tcfg.learning_rate;
            if (warmup_steps > 0 && step < warmup_steps)
                lr = tcfg.learning_rate * static_cast<real>(step) /
                     static_cast<real>(warmup_steps);
            ker::adam_step(model.params().data(), grad.data(), m1.data(), m2.data(), np, lr,
                           static_cast<real>(0.9), static_cast<real>(0.999),
                           static_cast<real>(1e-8), step);
            loss_sum += loss;
            ++batches;
        }

        const real vppl = model.perplexity(valid_set, tcfg.target_only_loss);
        if (!std::isfinite(vppl)) {
            std::ostringstream os;
            os << "training diverged: non-finite validation perplexity after epoch " << epoch;
            throw NumericError(os.str());
        }
        const bool improved = vppl < stopper.best();
        const bool stop = stopper.observe(vppl);
        if (improved) {
            best.params = model.params();
            best.best_epoch = epoch;
            best.valid_perplexity = static_cast<double>(vppl);
        }
        if (on_epoch) on_epoch({epoch, loss_sum / static_cast<real>(batches), vppl, improved});
        if (stop) break;
    }
    return best;
}

// ---- checkpoint io ----

namespace {

constexpr char kMagic[4] = {'P', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t x) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t x) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    os.write(b, 8);
}

void put_i32(std::ostream& os, std::int32_t x) { put_u32(os, static_cast<std::uint32_t>(x)); }
void put_i64(std::ostream& os, std::int64_t x) { put_u64(os, static_cast<std::uint64_t>(x)); }
void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw InputError("checkpoint: truncated file");
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw InputError("checkpoint: truncated file");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }
std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    if (ckpt.params.size() != static_cast<std::size_t>(param_count(ckpt.config)))
        throw InputError("checkpoint: parameter count does not match its config");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write checkpoint file: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_i32(os, ckpt.config.vocab_size);
    put_i32(os, ckpt.config.d_model);
    put_i32(os, ckpt.config.n_heads);
    put_i32(os, ckpt.config.n_layers);
    put_i32(os, ckpt.config.d_ffn);
    put_i32(os, ckpt.config.max_len);
    put_f64(os, static_cast<double>(ckpt.config.dropout));
    put_u64(os, ckpt.vocab_hash);
    put_i32(os, ckpt.best_epoch);
    put_f64(os, ckpt.valid_perplexity);
    put_i64(os, static_cast<std::int64_t>(ckpt.params.size()));
    for (real x : ckpt.params) put_f64(os, static_cast<double>(x));
    if (!os) throw InputError("failed while writing checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open checkpoint file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw InputError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion) {
        std::ostringstream os;
        os << "unsupported checkpoint version " << version << " (expected " << kVersion
           << "): " << path;
        throw InputError(os.str());
    }
    Checkpoint ckpt;
    ckpt.config.vocab_size = get_i32(is);
    ckpt.config.d_model = get_i32(is);
    ckpt.config.n_heads = get_i32(is);
    ckpt.config.n_layers = get_i32(is);
    ckpt.config.d_ffn = get_i32(is);
    ckpt.config.max_len = get_i32(is);
    ckpt.config.dropout = static_cast<real>(get_f64(is));
    ckpt.config.validate();
    ckpt.vocab_hash = get_u64(is);
    if (expected_vocab_hash != 0 && ckpt.vocab_hash != expected_vocab_hash)
        throw InputError("checkpoint vocabulary hash mismatch: " + path);
    ckpt.best_epoch = get_i32(is);
    ckpt.valid_perplexity = get_f64(is);
    const std::int64_t np = get_i64(is);
    if (np != param_count(ckpt.config))
        throw InputError("checkpoint parameter count mismatch (corrupt file): " + path);
    ckpt.params.resize(static_cast<std::size_t>(np));
    for (std::int64_t i = 0; i < np; ++i)
        ckpt.params[static_cast<std::size_t>(i)] = static_cast<real>(get_f64(is));
    char extra;
    if (is.read(&extra, 1))
        throw InputError("checkpoint has trailing bytes (corrupt file): " + path);
    return ckpt;
}

}  // namespace paragen
