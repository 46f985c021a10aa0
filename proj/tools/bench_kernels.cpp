// Throughput comparison between the serial reference kernels and the OpenMP
// variants. Each kernel runs on shapes typical of the default model config;
// outputs are checked for exact equality before timing, since the parallel
// path must be bit-identical regardless of thread count.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "paragen/kernels.hpp"
#include "paragen/rng.hpp"

namespace {

using paragen::Rng;
using paragen::real;
namespace k = paragen::kernels;

std::vector<real> random_vec(std::size_t n, Rng& rng) {
    std::vector<real> v(n);
    for (auto& x : v) x = static_cast<real>(rng.normal() * 0.1);
    return v;
}

double time_loop(const std::function<void()>& fn, int reps) {
    fn();  // warm cache
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto dt = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0);
    return dt.count() / reps;
}

bool equal(const std::vector<real>& a, const std::vector<real>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0;
}

struct Row {
    std::string name;
    double serial_s;
    double par_s;
    bool exact;
};

std::vector<Row> rows;

void report(const std::string& name, double serial_s, double par_s, bool exact) {
    rows.push_back({name, serial_s, par_s, exact});
}

void bench_matmuls(Rng& rng, int reps) {
    const int m = 128, kk = 128, n = 512;
    const auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
    const auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
    const auto bt = random_vec(static_cast<std::size_t>(n) * kk, rng);
    std::vector<real> c0(static_cast<std::size_t>(m) * n), c1 = c0;

    k::serial::matmul_nn(a.data(), m, kk, b.data(), n, c0.data());
    k::par::matmul_nn(a.data(), m, kk, b.data(), n, c1.data());
    report("matmul_nn 128x128x512",
           time_loop([&] { k::serial::matmul_nn(a.data(), m, kk, b.data(), n, c0.data()); }, reps),
           time_loop([&] { k::par::matmul_nn(a.data(), m, kk, b.data(), n, c1.data()); }, reps),
           equal(c0, c1));

    k::serial::matmul_nt(a.data(), m, kk, bt.data(), n, c0.data());
    k::par::matmul_nt(a.data(), m, kk, bt.data(), n, c1.data());
    report("matmul_nt 128x128x512",
           time_loop([&] { k::serial::matmul_nt(a.data(), m, kk, bt.data(), n, c0.data()); }, reps),
           time_loop([&] { k::par::matmul_nt(a.data(), m, kk, bt.data(), n, c1.data()); }, reps),
           equal(c0, c1));

    const auto g = random_vec(static_cast<std::size_t>(m) * n, rng);
    std::vector<real> w0(static_cast<std::size_t>(kk) * n), w1 = w0;
    k::serial::matmul_tn_acc(a.data(), m, kk, g.data(), n, w0.data());
    k::par::matmul_tn_acc(a.data(), m, kk, g.data(), n, w1.data());
    report("matmul_tn_acc 128x128x512",
           time_loop([&] { k::serial::matmul_tn_acc(a.data(), m, kk, g.data(), n, w0.data()); }, reps),
           time_loop([&] { k::par::matmul_tn_acc(a.data(), m, kk, g.data(), n, w1.data()); }, reps),
           equal(w0, w1));
}

void bench_layernorm(Rng& rng, int reps) {
    const int m = 512, n = 128;
    const auto x = random_vec(static_cast<std::size_t>(m) * n, rng);
    const auto gamma = random_vec(n, rng);
    const auto beta = random_vec(n, rng);
    const auto dy = random_vec(static_cast<std::size_t>(m) * n, rng);
    std::vector<real> y0(x.size()), y1(x.size()), mean0(m), mean1(m), rstd0(m),
        rstd1(m);

    k::serial::layernorm_fwd(x.data(), m, n, gamma.data(), beta.data(), y0.data(),
                             mean0.data(), rstd0.data());
    k::par::layernorm_fwd(x.data(), m, n, gamma.data(), beta.data(), y1.data(),
                          mean1.data(), rstd1.data());
    report("layernorm_fwd 512x128",
           time_loop([&] {
               k::serial::layernorm_fwd(x.data(), m, n, gamma.data(), beta.data(),
                                        y0.data(), mean0.data(), rstd0.data());
           }, reps),
           time_loop([&] {
               k::par::layernorm_fwd(x.data(), m, n, gamma.data(), beta.data(),
                                     y1.data(), mean1.data(), rstd1.data());
           }, reps),
           equal(y0, y1) && equal(mean0, mean1) && equal(rstd0, rstd1));

    std::vector<real> dx0(x.size()), dx1(x.size()), dg0(n), dg1(n), db0(n), db1(n);
    k::serial::layernorm_bwd(x.data(), m, n, gamma.data(), mean0.data(),
                             rstd0.data(), dy.data(), dx0.data(), dg0.data(),
                             db0.data());
    k::par::layernorm_bwd(x.data(), m, n, gamma.data(), mean1.data(), rstd1.data(),
                          dy.data(), dx1.data(), dg1.data(), db1.data());
    report("layernorm_bwd 512x128",
           time_loop([&] {
               std::fill(dg0.begin(), dg0.end(), real(0));
               std::fill(db0.begin(), db0.end(), real(0));
               k::serial::layernorm_bwd(x.data(), m, n, gamma.data(), mean0.data(),
                                        rstd0.data(), dy.data(), dx0.data(),
                                        dg0.data(), db0.data());
           }, reps),
           time_loop([&] {
               std::fill(dg1.begin(), dg1.end(), real(0));
               std::fill(db1.begin(), db1.end(), real(0));
               k::par::layernorm_bwd(x.data(), m, n, gamma.data(), mean1.data(),
                                     rstd1.data(), dy.data(), dx1.data(),
                                     dg1.data(), db1.data());
           }, reps),
           equal(dx0, dx1) && equal(dg0, dg1) && equal(db0, db1));
}

void bench_gelu(Rng& rng, int reps) {
    const std::int64_t n = 1 << 20;
    const auto x = random_vec(n, rng);
    const auto dy = random_vec(n, rng);
    std::vector<real> y0(n), y1(n);
    k::serial::gelu_fwd(x.data(), n, y0.data());
    k::par::gelu_fwd(x.data(), n, y1.data());
    report("gelu_fwd 1M",
           time_loop([&] { k::serial::gelu_fwd(x.data(), n, y0.data()); }, reps),
           time_loop([&] { k::par::gelu_fwd(x.data(), n, y1.data()); }, reps),
           equal(y0, y1));

    k::serial::gelu_bwd(x.data(), n, dy.data(), y0.data());
    k::par::gelu_bwd(x.data(), n, dy.data(), y1.data());
    report("gelu_bwd 1M",
           time_loop([&] { k::serial::gelu_bwd(x.data(), n, dy.data(), y0.data()); }, reps),
           time_loop([&] { k::par::gelu_bwd(x.data(), n, dy.data(), y1.data()); }, reps),
           equal(y0, y1));
}

void bench_attention(Rng& rng, int reps) {
    const int t = 128, dh = 32;
    const real scale = real(1) / std::sqrt(real(dh));
    const auto q = random_vec(static_cast<std::size_t>(t) * dh, rng);
    const auto kv = random_vec(static_cast<std::size_t>(t) * dh, rng);
    std::vector<real> p0(static_cast<std::size_t>(t) * t), p1 = p0;
    k::serial::attn_probs(q.data(), kv.data(), t, dh, scale, p0.data());
    k::par::attn_probs(q.data(), kv.data(), t, dh, scale, p1.data());
    report("attn_probs t=128 dh=32",
           time_loop([&] { k::serial::attn_probs(q.data(), kv.data(), t, dh, scale, p0.data()); }, reps),
           time_loop([&] { k::par::attn_probs(q.data(), kv.data(), t, dh, scale, p1.data()); }, reps),
           equal(p0, p1));

    const auto dp = random_vec(p0.size(), rng);
    std::vector<real> ds0(p0.size()), ds1(p0.size());
    k::serial::softmax_bwd_rows(p0.data(), dp.data(), t, t, ds0.data());
    k::par::softmax_bwd_rows(p1.data(), dp.data(), t, t, ds1.data());
    report("softmax_bwd_rows 128x128",
           time_loop([&] { k::serial::softmax_bwd_rows(p0.data(), dp.data(), t, t, ds0.data()); }, reps),
           time_loop([&] { k::par::softmax_bwd_rows(p1.data(), dp.data(), t, t, ds1.data()); }, reps),
           equal(ds0, ds1));
}

void bench_ce(Rng& rng, int reps) {
    const int m = 256, v = 4096;
    const auto logits = random_vec(static_cast<std::size_t>(m) * v, rng);
    std::vector<int> targets(m);
    for (auto& t : targets) t = static_cast<int>(rng.uniform_int(v));
    targets[0] = -1;
    std::vector<real> losses0(m), losses1(m), lse0(m), lse1(m);
    k::serial::ce_fwd(logits.data(), m, v, targets.data(), losses0.data(), lse0.data());
    k::par::ce_fwd(logits.data(), m, v, targets.data(), losses1.data(), lse1.data());
    report("ce_fwd 256x4096",
           time_loop([&] { k::serial::ce_fwd(logits.data(), m, v, targets.data(), losses0.data(), lse0.data()); }, reps),
           time_loop([&] { k::par::ce_fwd(logits.data(), m, v, targets.data(), losses1.data(), lse1.data()); }, reps),
           equal(losses0, losses1) && equal(lse0, lse1));

    std::vector<real> dl0(logits.size()), dl1(logits.size());
    k::serial::ce_bwd(logits.data(), m, v, targets.data(), lse0.data(), real(0.5), dl0.data());
    k::par::ce_bwd(logits.data(), m, v, targets.data(), lse1.data(), real(0.5), dl1.data());
    report("ce_bwd 256x4096",
           time_loop([&] { k::serial::ce_bwd(logits.data(), m, v, targets.data(), lse0.data(), real(0.5), dl0.data()); }, reps),
           time_loop([&] { k::par::ce_bwd(logits.data(), m, v, targets.data(), lse1.data(), real(0.5), dl1.data()); }, reps),
           equal(dl0, dl1));
}

void bench_adam(Rng& rng, int reps) {
    const std::int64_t n = 1 << 20;
    const auto g = random_vec(n, rng);
    auto p0 = random_vec(n, rng);
    auto p1 = p0;
    std::vector<real> m0(n), m1(n), v0(n), v1(n);
    k::serial::adam_step(p0.data(), g.data(), m0.data(), v0.data(), n, real(1e-3),
                         real(0.9), real(0.999), real(1e-8), 1);
    k::par::adam_step(p1.data(), g.data(), m1.data(), v1.data(), n, real(1e-3),
                      real(0.9), real(0.999), real(1e-8), 1);
    std::int64_t step = 2;
    report("adam_step 1M",
           time_loop([&] {
               k::serial::adam_step(p0.data(), g.data(), m0.data(), v0.data(), n,
                                    real(1e-3), real(0.9), real(0.999), real(1e-8),
                                    step++);
           }, reps),
           time_loop([&] {
               // Mirror the serial step counter so the states stay comparable.
               static std::int64_t par_step = 2;
               k::par::adam_step(p1.data(), g.data(), m1.data(), v1.data(), n,
                                 real(1e-3), real(0.9), real(0.999), real(1e-8),
                                 par_step++);
           }, reps),
           equal(m0, m1) && equal(v0, v1) && equal(p0, p1));
}

}  // namespace

int main(int argc, char** argv) {
    int threads = paragen::kernels::hardware_threads();
    int reps = 5;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--threads" && i + 1 < argc) {
            threads = std::atoi(argv[++i]);
        } else if (arg == "--reps" && i + 1 < argc) {
            reps = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: bench_kernels [--threads N] [--reps N]\n");
            return 2;
        }
    }
    paragen::kernels::set_threads(threads);
    std::printf("threads: %d (hardware %d), reps: %d\n",
                paragen::kernels::threads(), paragen::kernels::hardware_threads(),
                reps);

    Rng rng(42);
    bench_matmuls(rng, reps);
    bench_layernorm(rng, reps);
    bench_gelu(rng, reps);
    bench_attention(rng, reps);
    bench_ce(rng, reps);
    bench_adam(rng, reps);

    std::printf("%-28s %12s %12s %9s %7s\n", "kernel", "serial (ms)", "openmp (ms)",
                "speedup", "exact");
    bool all_exact = true;
    for (const Row& r : rows) {
        std::printf("%-28s %12.3f %12.3f %8.2fx %7s\n", r.name.c_str(),
                    r.serial_s * 1e3, r.par_s * 1e3, r.serial_s / r.par_s,
                    r.exact ? "yes" : "NO");
        all_exact = all_exact && r.exact;
    }
    if (!all_exact) {
        std::fprintf(stderr, "error: a parallel kernel diverged from the serial "
                             "reference\n");
        return 1;
    }
    return 0;
}
