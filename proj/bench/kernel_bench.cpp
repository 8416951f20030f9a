// Times the serial reference kernels against the OpenMP kernels at model-like
// shapes and verifies the outputs stay bitwise identical while doing so.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "imae/kernels.hpp"
#include "imae/rng.hpp"

using namespace imae;
namespace k = imae::kernels;

namespace {

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Result {
    double ref_s = 0, par_s = 0;
    bool bitwise = true;
};

template <class RefFn, class ParFn>
Result time_pair(RefFn ref_fn, ParFn par_fn, std::vector<double>& out_ref,
                 std::vector<double>& out_par, int iters) {
    Result r;
    double t0 = now();
    for (int i = 0; i < iters; ++i) ref_fn();
    r.ref_s = (now() - t0) / iters;
    t0 = now();
    for (int i = 0; i < iters; ++i) par_fn();
    r.par_s = (now() - t0) / iters;
    r.bitwise = std::memcmp(out_ref.data(), out_par.data(),
                            out_ref.size() * sizeof(double)) == 0;
    return r;
}

void report(const char* name, double flops, const Result& r) {
    std::printf("%-22s  ref %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   x%.2f   %s\n",
                name, r.ref_s * 1e3, flops / r.ref_s / 1e9, r.par_s * 1e3,
                flops / r.par_s / 1e9, r.ref_s / r.par_s,
                r.bitwise ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    Rng rng(7);
    // shapes from the micro-profile training step: [B*T, D] x [D, 3D] etc.
    const i64 M = 2176, K = 64, N = 192;
    std::vector<double> A(M * K), B(K * N), Bt(N * K), Cr(M * N), Cp(M * N);
    for (auto& v : A) v = rng.normal();
    for (auto& v : B) v = rng.normal();
    for (auto& v : Bt) v = rng.normal();

    report("matmul 2176x64x192", 2.0 * M * K * N,
           time_pair([&] { k::ref::matmul(A.data(), B.data(), Cr.data(), M, K, N, false); },
                     [&] { k::par::matmul(A.data(), B.data(), Cp.data(), M, K, N, false); }, Cr,
                     Cp, 20));

    report("matmul_nt 2176x192x64", 2.0 * M * K * N,
           time_pair([&] { k::ref::matmul_nt(A.data(), Bt.data(), Cr.data(), M, K, N, false); },
                     [&] { k::par::matmul_nt(A.data(), Bt.data(), Cp.data(), M, K, N, false); },
                     Cr, Cp, 20));

    std::vector<double> G(K * N), Gp(K * N);
    report("matmul_tn 2176->64x192", 2.0 * M * K * N,
           time_pair([&] { k::ref::matmul_tn(A.data(), Cr.data(), G.data(), M, K, N, false); },
                     [&] { k::par::matmul_tn(A.data(), Cr.data(), Gp.data(), M, K, N, false); },
                     G, Gp, 20));

    // attention-shaped batched matmul: 125 samples x 4 heads, 17 tokens, dh 16
    const i64 Gb = 500, T = 17, dh = 16;
    std::vector<double> q(Gb * T * dh), kk(Gb * T * dh), Sr(Gb * T * T), Sp(Gb * T * T);
    for (auto& v : q) v = rng.normal();
    for (auto& v : kk) v = rng.normal();
    report("bmatmul_nt attn", 2.0 * Gb * T * T * dh,
           time_pair([&] { k::ref::bmatmul_nt(q.data(), kk.data(), Sr.data(), Gb, T, dh, T, false); },
                     [&] { k::par::bmatmul_nt(q.data(), kk.data(), Sp.data(), Gb, T, dh, T, false); },
                     Sr, Sp, 50));

    const i64 LM = 2176, LD = 64;
    std::vector<double> x(LM * LD), g(LD, 1.0), b(LD, 0.0), yr(LM * LD), yp(LM * LD),
        mean(LM), rstd(LM);
    for (auto& v : x) v = rng.normal();
    report("layernorm 2176x64", 8.0 * LM * LD,
           time_pair(
               [&] {
                   k::ref::layernorm_fwd(x.data(), g.data(), b.data(), yr.data(), mean.data(),
                                         rstd.data(), LM, LD);
               },
               [&] {
                   k::par::layernorm_fwd(x.data(), g.data(), b.data(), yp.data(), mean.data(),
                                         rstd.data(), LM, LD);
               },
               yr, yp, 50));

    std::vector<double> gr(LM * LD), gp(LM * LD);
    report("gelu 2176x64", 10.0 * LM * LD,
           time_pair([&] { k::ref::gelu_fwd(x.data(), gr.data(), LM * LD); },
                     [&] { k::par::gelu_fwd(x.data(), gp.data(), LM * LD); }, gr, gp, 50));
    return 0;
}
