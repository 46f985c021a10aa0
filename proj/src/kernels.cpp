#include "paragen/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace paragen::kernels {

namespace {

std::atomic<int> g_threads{0};  // 0 = uninitialized, resolve lazily

constexpr real kLnEps = static_cast<real>(1e-5);
const real kInvSqrt2 = static_cast<real>(0.70710678118654752440);
const real kInvSqrt2Pi = static_cast<real>(0.39894228040143267794);

// ---- per-element loop bodies, shared by the serial and parallel variants
// so both compile to the same arithmetic in the same order ----

inline void row_matmul_nn(int i, const real* a, int k, const real* b, int n, real* c) {
    real* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    std::fill(crow, crow + n, real{0});
    const real* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
        const real aik = arow[kk];
        const real* brow = b + static_cast<std::ptrdiff_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
}

inline void row_matmul_nt(int i, const real* a, int k, const real* b, int n, real* c) {
    const real* arow = a + static_cast<std::ptrdiff_t>(i) * k;
    real* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const real* brow = b + static_cast<std::ptrdiff_t>(j) * k;
        real acc = 0;
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] = acc;
    }
}

inline void row_matmul_tn_acc(int i, const real* a, int m, int k, const real* b, int n,
                              real* c) {
    // row i of C = column i of A dotted against rows of B, accumulated
    real* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int mm = 0; mm < m; ++mm) {
        const real ami = a[static_cast<std::ptrdiff_t>(mm) * k + i];
        const real* brow = b + static_cast<std::ptrdiff_t>(mm) * n;
        for (int j = 0; j < n; ++j) crow[j] += ami * brow[j];
    }
}

inline void row_add_bias(int i, real* c, int n, const real* bias) {
    real* crow = c + static_cast<std::ptrdiff_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] += bias[j];
}

inline void col_bias_grad_acc(int j, const real* dc, int m, int n, real* db) {
    real acc = 0;
    for (int i = 0; i < m; ++i) acc += dc[static_cast<std::ptrdiff_t>(i) * n + j];
    db[j] += acc;
}

inline void row_layernorm_fwd(int i, const real* x, int n, const real* gamma,
                              const real* beta, real* y, real* mean, real* rstd) {
    const real* xr = x + static_cast<std::ptrdiff_t>(i) * n;
    real* yr = y + static_cast<std::ptrdiff_t>(i) * n;
    real mu = 0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<real>(n);
    real var = 0;
    for (int j = 0; j < n; ++j) {
        const real d = xr[j] - mu;
        var += d * d;
    }
    var /= static_cast<real>(n);
    const real rs = real{1} / std::sqrt(var + kLnEps);
    for (int j = 0; j < n; ++j) yr[j] = gamma[j] * ((xr[j] - mu) * rs) + beta[j];
    mean[i] = mu;
    rstd[i] = rs;
}

inline void row_layernorm_bwd_dx(int i, const real* x, int n, const real* gamma,
                                 const real* mean, const real* rstd, const real* dy,
                                 real* dx) {
    const real* xr = x + static_cast<std::ptrdiff_t>(i) * n;
    const real* dyr = dy + static_cast<std::ptrdiff_t>(i) * n;
    real* dxr = dx + static_cast<std::ptrdiff_t>(i) * n;
    const real mu = mean[i];
    const real rs = rstd[i];
    real sum_dyg = 0;
    real sum_dyg_xhat = 0;
    for (int j = 0; j < n; ++j) {
        const real xhat = (xr[j] - mu) * rs;
        const real dyg = dyr[j] * gamma[j];
        sum_dyg += dyg;
        sum_dyg_xhat += dyg * xhat;
    }
    const real inv_n = real{1} / static_cast<real>(n);
    for (int j = 0; j < n; ++j) {
        const real xhat = (xr[j] - mu) * rs;
        const real dyg = dyr[j] * gamma[j];
        dxr[j] = rs * (dyg - sum_dyg * inv_n - xhat * sum_dyg_xhat * inv_n);
    }
}

inline void col_layernorm_bwd_params(int j, const real* x, int m, int n, const real* mean,
                                     const real* rstd, const real* dy, real* dgamma,
                                     real* dbeta) {
    real dg = 0;
    real db = 0;
    for (int i = 0; i < m; ++i) {
        const real xhat = (x[static_cast<std::ptrdiff_t>(i) * n + j] - mean[i]) * rstd[i];
        const real d = dy[static_cast<std::ptrdiff_t>(i) * n + j];
        dg += d * xhat;
        db += d;
    }
    dgamma[j] += dg;
    dbeta[j] += db;
}

inline real gelu_value(real x) {
    return real{0.5} * x * (real{1} + std::erf(x * kInvSqrt2));
}

inline real gelu_deriv(real x) {
    return real{0.5} * (real{1} + std::erf(x * kInvSqrt2)) +
           x * kInvSqrt2Pi * std::exp(real{-0.5} * x * x);
}

inline void row_attn_probs(int i, const real* q, const real* k, int t, int dh, real scale,
                           real* p) {
    real* pr = p + static_cast<std::ptrdiff_t>(i) * t;
    attn_probs_row(q + static_cast<std::ptrdiff_t>(i) * dh, k, i + 1, dh, scale, pr);
    for (int j = i + 1; j < t; ++j) pr[j] = 0;
}

inline void row_softmax_bwd(int i, const real* p, const real* dp, int n, real* ds) {
    const real* pr = p + static_cast<std::ptrdiff_t>(i) * n;
    const real* dpr = dp + static_cast<std::ptrdiff_t>(i) * n;
    real* dsr = ds + static_cast<std::ptrdiff_t>(i) * n;
    real dot = 0;
    for (int j = 0; j < n; ++j) dot += dpr[j] * pr[j];
    for (int j = 0; j < n; ++j) dsr[j] = pr[j] * (dpr[j] - dot);
}

inline void row_ce_fwd(int i, const real* logits, int v, const int* targets, real* losses,
                       real* lse) {
    const int tgt = targets[i];
    if (tgt < 0) {
        losses[i] = 0;
        lse[i] = 0;
        return;
    }
    const real* lr = logits + static_cast<std::ptrdiff_t>(i) * v;
    real maxl = lr[0];
    for (int j = 1; j < v; ++j) maxl = std::max(maxl, lr[j]);
    real sum = 0;
    for (int j = 0; j < v; ++j) sum += std::exp(lr[j] - maxl);
    const real l = maxl + std::log(sum);
    lse[i] = l;
    losses[i] = l - lr[tgt];
}

inline void row_ce_bwd(int i, const real* logits, int v, const int* targets, const real* lse,
                       real scale, real* dlogits) {
    const int tgt = targets[i];
    real* dr = dlogits + static_cast<std::ptrdiff_t>(i) * v;
    if (tgt < 0) {
        std::fill(dr, dr + v, real{0});
        return;
    }
    const real* lr = logits + static_cast<std::ptrdiff_t>(i) * v;
    const real l = lse[i];
    for (int j = 0; j < v; ++j) dr[j] = scale * std::exp(lr[j] - l);
    dr[tgt] -= scale;
}

inline void col_emb_scatter_add(int j, const real* dx, int t, int d, const int* ids,
                                real* de) {
    for (int i = 0; i < t; ++i)
        de[static_cast<std::ptrdiff_t>(ids[i]) * d + j] +=
            dx[static_cast<std::ptrdiff_t>(i) * d + j];
}

inline void elt_adam(std::int64_t i, real* p, const real* g, real* m, real* v, real lr,
                     real beta1, real beta2, real eps, real bc1, real bc2) {
    const real gi = g[i];
    m[i] = beta1 * m[i] + (real{1} - beta1) * gi;
    v[i] = beta2 * v[i] + (real{1} - beta2) * gi * gi;
    const real mhat = m[i] / bc1;
    const real vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
}

}  // namespace

void attn_probs_row(const real* q_row, const real* k, int count, int dh, real scale,
                    real* p_row) {
    real maxs = -std::numeric_limits<real>::infinity();
    for (int j = 0; j < count; ++j) {
        const real* kr = k + static_cast<std::ptrdiff_t>(j) * dh;
        real s = 0;
        for (int d = 0; d < dh; ++d) s += q_row[d] * kr[d];
        s *= scale;
        p_row[j] = s;
        if (s > maxs) maxs = s;
    }
    real denom = 0;
    for (int j = 0; j < count; ++j) {
        p_row[j] = std::exp(p_row[j] - maxs);
        denom += p_row[j];
    }
    const real inv = real{1} / denom;
    for (int j = 0; j < count; ++j) p_row[j] *= inv;
}

int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int threads() {
    int t = g_threads.load(std::memory_order_relaxed);
    if (t <= 0) {
        t = hardware_threads();
        g_threads.store(t, std::memory_order_relaxed);
    }
    return t;
}

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

// ---- serial reference implementations ----

namespace serial {

void matmul_nn(const real* a, int m, int k, const real* b, int n, real* c) {
    for (int i = 0; i < m; ++i) row_matmul_nn(i, a, k, b, n, c);
}

void matmul_nt(const real* a, int m, int k, const real* b, int n, real* c) {
    for (int i = 0; i < m; ++i) row_matmul_nt(i, a, k, b, n, c);
}

void matmul_tn_acc(const real* a, int m, int k, const real* b, int n, real* c) {
    for (int i = 0; i < k; ++i) row_matmul_tn_acc(i, a, m, k, b, n, c);
}

void add_bias(real* c, int m, int n, const real* bias) {
    for (int i = 0; i < m; ++i) row_add_bias(i, c, n, bias);
}

void bias_grad_acc(const real* dc, int m, int n, real* db) {
    for (int j = 0; j < n; ++j) col_bias_grad_acc(j, dc, m, n, db);
}

void layernorm_fwd(const real* x, int m, int n, const real* gamma, const real* beta, real* y,
                   real* mean, real* rstd) {
    for (int i = 0; i < m; ++i) row_layernorm_fwd(i, x, n, gamma, beta, y, mean, rstd);
}

void layernorm_bwd(const real* x, int m, int n, const real* gamma, const real* mean,
                   const real* rstd, const real* dy, real* dx, real* dgamma, real* dbeta) {
    for (int i = 0; i < m; ++i) row_layernorm_bwd_dx(i, x, n, gamma, mean, rstd, dy, dx);
    for (int j = 0; j < n; ++j)
        col_layernorm_bwd_params(j, x, m, n, mean, rstd, dy, dgamma, dbeta);
}

void gelu_fwd(const real* x, std::int64_t n, real* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

void gelu_bwd(const real* x, std::int64_t n, const real* dy, real* dx) {
    for (std::int64_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_deriv(x[i]);
}

void attn_probs(const real* q, const real* k, int t, int dh, real scale, real* p) {
    for (int i = 0; i < t; ++i) row_attn_probs(i, q, k, t, dh, scale, p);
}

void softmax_bwd_rows(const real* p, const real* dp, int m, int n, real* ds) {
    for (int i = 0; i < m; ++i) row_softmax_bwd(i, p, dp, n, ds);
}

void ce_fwd(const real* logits, int m, int v, const int* targets, real* losses, real* lse) {
    for (int i = 0; i < m; ++i) row_ce_fwd(i, logits, v, targets, losses, lse);
}

void ce_bwd(const real* logits, int m, int v, const int* targets, const real* lse, real scale,
            real* dlogits) {
    for (int i = 0; i < m; ++i) row_ce_bwd(i, logits, v, targets, lse, scale, dlogits);
}

void emb_scatter_add(const real* dx, int t, int d, const int* ids, real* de) {
    for (int j = 0; j < d; ++j) col_emb_scatter_add(j, dx, t, d, ids, de);
}

void adam_step(real* p, const real* g, real* m, real* v, std::int64_t n, real lr, real beta1,
               real beta2, real eps, std::int64_t step) {
    const real bc1 = real{1} - std::pow(beta1, static_cast<real>(step));
    const real bc2 = real{1} - std::pow(beta2, static_cast<real>(step));
    for (std::int64_t i = 0; i < n; ++i)
        elt_adam(i, p, g, m, v, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace serial

// ---- OpenMP variants: identical element loops, outer loop distributed ----

namespace par {

#ifdef _OPENMP
#define PARAGEN_OMP_FOR(n) _Pragma("omp parallel for schedule(static)")
#else
#define PARAGEN_OMP_FOR(n)
#endif

void matmul_nn(const real* a, int m, int k, const real* b, int n, real* c) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_matmul_nn(i, a, k, b, n, c);
}

void matmul_nt(const real* a, int m, int k, const real* b, int n, real* c) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_matmul_nt(i, a, k, b, n, c);
}

void matmul_tn_acc(const real* a, int m, int k, const real* b, int n, real* c) {
    PARAGEN_OMP_FOR(k)
    for (int i = 0; i < k; ++i) row_matmul_tn_acc(i, a, m, k, b, n, c);
}

void add_bias(real* c, int m, int n, const real* bias) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_add_bias(i, c, n, bias);
}

void bias_grad_acc(const real* dc, int m, int n, real* db) {
    PARAGEN_OMP_FOR(n)
    for (int j = 0; j < n; ++j) col_bias_grad_acc(j, dc, m, n, db);
}

void layernorm_fwd(const real* x, int m, int n, const real* gamma, const real* beta, real* y,
                   real* mean, real* rstd) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_layernorm_fwd(i, x, n, gamma, beta, y, mean, rstd);
}

void layernorm_bwd(const real* x, int m, int n, const real* gamma, const real* mean,
                   const real* rstd, const real* dy, real* dx, real* dgamma, real* dbeta) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_layernorm_bwd_dx(i, x, n, gamma, mean, rstd, dy, dx);
    PARAGEN_OMP_FOR(n)
    for (int j = 0; j < n; ++j)
        col_layernorm_bwd_params(j, x, m, n, mean, rstd, dy, dgamma, dbeta);
}

void gelu_fwd(const real* x, std::int64_t n, real* y) {
    PARAGEN_OMP_FOR(n)
    for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

void gelu_bwd(const real* x, std::int64_t n, const real* dy, real* dx) {
    PARAGEN_OMP_FOR(n)
    for (std::int64_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_deriv(x[i]);
}

void attn_probs(const real* q, const real* k, int t, int dh, real scale, real* p) {
    PARAGEN_OMP_FOR(t)
    for (int i = 0; i < t; ++i) row_attn_probs(i, q, k, t, dh, scale, p);
}

void softmax_bwd_rows(const real* p, const real* dp, int m, int n, real* ds) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_softmax_bwd(i, p, dp, n, ds);
}

void ce_fwd(const real* logits, int m, int v, const int* targets, real* losses, real* lse) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_ce_fwd(i, logits, v, targets, losses, lse);
}

void ce_bwd(const real* logits, int m, int v, const int* targets, const real* lse, real scale,
            real* dlogits) {
    PARAGEN_OMP_FOR(m)
    for (int i = 0; i < m; ++i) row_ce_bwd(i, logits, v, targets, lse, scale, dlogits);
}

void emb_scatter_add(const real* dx, int t, int d, const int* ids, real* de) {
    PARAGEN_OMP_FOR(d)
    for (int j = 0; j < d; ++j) col_emb_scatter_add(j, dx, t, d, ids, de);
}

void adam_step(real* p, const real* g, real* m, real* v, std::int64_t n, real lr, real beta1,
               real beta2, real eps, std::int64_t step) {
    const real bc1 = real{1} - std::pow(beta1, static_cast<real>(step));
    const real bc2 = real{1} - std::pow(beta2, static_cast<real>(step));
    PARAGEN_OMP_FOR(n)
    for (std::int64_t i = 0; i < n; ++i)
        elt_adam(i, p, g, m, v, lr, beta1, beta2, eps, bc1, bc2);
}

#undef PARAGEN_OMP_FOR

}  // namespace par

// ---- dispatching entry points ----

namespace {
inline bool use_par() { return threads() > 1; }
}  // namespace

void matmul_nn(const real* a, int m, int k, const real* b, int n, real* c) {
    use_par() ? par::matmul_nn(a, m, k, b, n, c) : serial::matmul_nn(a, m, k, b, n, c);
}
void matmul_nt(const real* a, int m, int k, const real* b, int n, real* c) {
    use_par() ? par::matmul_nt(a, m, k, b, n, c) : serial::matmul_nt(a, m, k, b, n, c);
}
void matmul_tn_acc(const real* a, int m, int k, const real* b, int n, real* c) {
    use_par() ? par::matmul_tn_acc(a, m, k, b, n, c)
              : serial::matmul_tn_acc(a, m, k, b, n, c);
}
void add_bias(real* c, int m, int n, const real* bias) {
    use_par() ? par::add_bias(c, m, n, bias) : serial::add_bias(c, m, n, bias);
}
void bias_grad_acc(const real* dc, int m, int n, real* db) {
    use_par() ? par::bias_grad_acc(dc, m, n, db) : serial::bias_grad_acc(dc, m, n, db);
}
void layernorm_fwd(const real* x, int m, int n, const real* gamma, const real* beta, real* y,
                   real* mean, real* rstd) {
    use_par() ? par::layernorm_fwd(x, m, n, gamma, beta, y, mean, rstd)
              : serial::layernorm_fwd(x, m, n, gamma, beta, y, mean, rstd);
}
void layernorm_bwd(const real* x, int m, int n, const real* gamma, const real* mean,
                   const real* rstd, const real* dy, real* dx, real* dgamma, real* dbeta) {
    use_par() ? par::layernorm_bwd(x, m, n, gamma, mean, rstd, dy, dx, dgamma, dbeta)
              : serial::layernorm_bwd(x, m, n, gamma, mean, rstd, dy, dx, dgamma, dbeta);
}
void gelu_fwd(const real* x, std::int64_t n, real* y) {
    use_par() ? par::gelu_fwd(x, n, y) : serial::gelu_fwd(x, n, y);
}
void gelu_bwd(const real* x, std::int64_t n, const real* dy, real* dx) {
    use_par() ? par::gelu_bwd(x, n, dy, dx) : serial::gelu_bwd(x, n, dy, dx);
}
void attn_probs(const real* q, const real* k, int t, int dh, real scale, real* p) {
    use_par() ? par::attn_probs(q, k, t, dh, scale, p)
              : serial::attn_probs(q, k, t, dh, scale, p);
}
void softmax_bwd_rows(const real* p, const real* dp, int m, int n, real* ds) {
    use_par() ? par::softmax_bwd_rows(p, dp, m, n, ds)
              : serial::softmax_bwd_rows(p, dp, m, n, ds);
}
void ce_fwd(const real* logits, int m, int v, const int* targets, real* losses, real* lse) {
    use_par() ? par::ce_fwd(logits, m, v, targets, losses, lse)
              : serial::ce_fwd(logits, m, v, targets, losses, lse);
}
void ce_bwd(const real* logits, int m, int v, const int* targets, const real* lse, real scale,
            real* dlogits) {
    use_par() ? par::ce_bwd(logits, m, v, targets, lse, scale, dlogits)
              : serial::ce_bwd(logits, m, v, targets, lse, scale, dlogits);
}
void emb_scatter_add(const real* dx, int t, int d, const int* ids, real* de) {
    use_par() ? par::emb_scatter_add(dx, t, d, ids, de)
              : serial::emb_scatter_add(dx, t, d, ids, de);
}
void adam_step(real* p, const real* g, real* m, real* v, std::int64_t n, real lr, real beta1,
               real beta2, real eps, std::int64_t step) {
    use_par() ? par::adam_step(p, g, m, v, n, lr, beta1, beta2, eps, step)
              : serial::adam_step(p, g, m, v, n, lr, beta1, beta2, eps, step);
}

}  // namespace paragen::kernels
