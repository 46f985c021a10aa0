// Numerical kernels behind the language model.
//
// Every kernel exists twice: kernels::serial::* is the reference
// implementation and kernels::par::* the OpenMP one. The unqualified entry
// points dispatch on the current thread setting. The parallel variants
// partition *output* elements across threads and run the same per-element
// loop as the serial code, so both paths produce bit-identical results for
// any thread count; tests assert exact equality and tools/bench_kernels
// compares their throughput.
//
// All matrices are dense row-major.
#pragma once

#include <cstdint>

#include "paragen/real.hpp"

namespace paragen::kernels {

// Worker cap for the parallel path. 1 selects the serial reference
// implementation. Thread count never changes results.
int threads();
void set_threads(int n);
int hardware_threads();

// Causal softmax for a single query row against the first `count` key rows;
// writes `count` probabilities. attn_probs runs this per row, and incremental
// decoding calls it directly so cached and full passes agree bit for bit.
void attn_probs_row(const real* q_row, const real* k, int count, int dh, real scale,
                    real* p_row);

#define PARAGEN_DECLARE_KERNELS                                                              \
    /* C[m x n] = A[m x k] * B[k x n] */                                                     \
    void matmul_nn(const real* a, int m, int k, const real* b, int n, real* c);              \
    /* C[m x n] = A[m x k] * B[n x k]^T */                                                   \
    void matmul_nt(const real* a, int m, int k, const real* b, int n, real* c);              \
    /* C[k x n] += A[m x k]^T * B[m x n] */                                                  \
    void matmul_tn_acc(const real* a, int m, int k, const real* b, int n, real* c);          \
    /* C[i][j] += bias[j] */                                                                 \
    void add_bias(real* c, int m, int n, const real* bias);                                  \
    /* db[j] += sum_i dC[i][j] */                                                            \
    void bias_grad_acc(const real* dc, int m, int n, real* db);                              \
    /* y = gamma * (x - mean) * rstd + beta, per row; mean/rstd cached */                    \
    void layernorm_fwd(const real* x, int m, int n, const real* gamma, const real* beta,     \
                       real* y, real* mean, real* rstd);                                     \
    /* dx written, dgamma/dbeta accumulated */                                               \
    void layernorm_bwd(const real* x, int m, int n, const real* gamma, const real* mean,     \
                       const real* rstd, const real* dy, real* dx, real* dgamma,             \
                       real* dbeta);                                                         \
    void gelu_fwd(const real* x, std::int64_t n, real* y);                                   \
    /* dx = dy * gelu'(x) */                                                                 \
    void gelu_bwd(const real* x, std::int64_t n, const real* dy, real* dx);                  \
    /* causal softmax(Q K^T * scale): P[i][j] for j <= i, 0 above diagonal */                \
    void attn_probs(const real* q, const real* k, int t, int dh, real scale, real* p);       \
    /* per row r: ds[r] = p[r] o (dp[r] - sum_j dp[r][j] p[r][j]) */                         \
    void softmax_bwd_rows(const real* p, const real* dp, int m, int n, real* ds);            \
    /* losses[i] = -log softmax(logits[i])[targets[i]]; lse cached; target < 0 skips */      \
    void ce_fwd(const real* logits, int m, int v, const int* targets, real* losses,          \
                real* lse);                                                                  \
    /* dlogits[i] = scale * (softmax(logits[i]) - onehot(targets[i])), 0 when skipped */     \
    void ce_bwd(const real* logits, int m, int v, const int* targets, const real* lse,       \
                real scale, real* dlogits);                                                  \
    /* de[ids[i]] += dx[i] for each position row; parallel over columns */                   \
    void emb_scatter_add(const real* dx, int t, int d, const int* ids, real* de);            \
    /* bias-corrected adaptive moment update, step counts from 1 */                          \
    void adam_step(real* p, const real* g, real* m, real* v, std::int64_t n, real lr,        \
                   real beta1, real beta2, real eps, std::int64_t step);

namespace serial {
PARAGEN_DECLARE_KERNELS
}
namespace par {
PARAGEN_DECLARE_KERNELS
}
PARAGEN_DECLARE_KERNELS

#undef PARAGEN_DECLARE_KERNELS

}  // namespace paragen::kernels
