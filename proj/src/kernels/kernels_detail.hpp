#pragma once

#include <cmath>

#include "imae/common.hpp"

// Per-row / per-element scalar routines shared by both backends. Keeping the
// inner loops in one place guarantees the serial and parallel kernels add
// floating-point terms in the same order, which is what makes them bitwise
// comparable in the parity tests.
namespace imae::kernels::detail {

constexpr double kLayernormEps = 1e-6;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// The matmul row kernels keep one strict contract: every output element is a
// chain of multiply-adds over the reduction index in ascending order, starting
// from the existing value (acc) or zero. Register tiling below only widens how
// many independent chains run at once; it never reorders a chain, so results
// are identical between the tiled main loop, the scalar tail, and both
// backends.

inline void matmul_row(const double* a, const double* B, double* c, i64 K, i64 N, bool acc) {
    constexpr i64 TJ = 16;  // column tile held in registers across the k loop
    double t[TJ];
    i64 j0 = 0;
    for (; j0 + TJ <= N; j0 += TJ) {
        for (i64 u = 0; u < TJ; ++u) t[u] = acc ? c[j0 + u] : 0.0;
        const double* b = B + j0;
        for (i64 k = 0; k < K; ++k, b += N) {
            const double av = a[k];
            for (i64 u = 0; u < TJ; ++u) t[u] += av * b[u];
        }
        for (i64 u = 0; u < TJ; ++u) c[j0 + u] = t[u];
    }
    if (j0 < N) {
        if (!acc)
            for (i64 j = j0; j < N; ++j) c[j] = 0.0;
        const double* b = B;
        for (i64 k = 0; k < K; ++k, b += N) {
            const double av = a[k];
            for (i64 j = j0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

inline void matmul_nt_row(const double* a, const double* B, double* c, i64 K, i64 N, bool acc) {
    i64 j = 0;
    for (; j + 4 <= N; j += 4) {
        const double* b0 = B + (j + 0) * K;
        const double* b1 = B + (j + 1) * K;
        const double* b2 = B + (j + 2) * K;
        const double* b3 = B + (j + 3) * K;
        double s0 = acc ? c[j + 0] : 0.0, s1 = acc ? c[j + 1] : 0.0;
        double s2 = acc ? c[j + 2] : 0.0, s3 = acc ? c[j + 3] : 0.0;
        for (i64 k = 0; k < K; ++k) {
            const double av = a[k];
            s0 += av * b0[k];
            s1 += av * b1[k];
            s2 += av * b2[k];
            s3 += av * b3[k];
        }
        c[j + 0] = s0;
        c[j + 1] = s1;
        c[j + 2] = s2;
        c[j + 3] = s3;
    }
    for (; j < N; ++j) {
        double v = acc ? c[j] : 0.0;
        const double* b = B + j * K;
        for (i64 k = 0; k < K; ++k) v += a[k] * b[k];
        c[j] = v;
    }
}

// One output row of C[K,N] += A[M,K]^T B[M,N]; i indexes the K dimension.
inline void matmul_tn_row(const double* A, const double* B, double* c, i64 i, i64 M, i64 K,
                          i64 N, bool acc) {
    if (!acc)
        for (i64 j = 0; j < N; ++j) c[j] = 0.0;
    const double* ap = A + i;
    const double* b = B;
    for (i64 m = 0; m < M; ++m, ap += K, b += N) {
        const double av = ap[0];
        for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
    }
}

// Eight consecutive output rows of the same product, sharing each B row load
// across the tile (the C rows stay L1-resident). Per-element accumulation
// order (m ascending) is identical to the one-row version.
constexpr i64 kTnRowTile = 8;

inline void matmul_tn_rows8(const double* __restrict A, const double* __restrict B,
                            double* __restrict C, i64 i0, i64 M, i64 K, i64 N, bool acc) {
    if (!acc)
        for (i64 r = 0; r < kTnRowTile; ++r)
            for (i64 j = 0; j < N; ++j) C[(i0 + r) * N + j] = 0.0;
    const double* arow = A + i0;
    const double* b = B;
    for (i64 m = 0; m < M; ++m, arow += K, b += N) {
        for (i64 r = 0; r < kTnRowTile; ++r) {
            const double av = arow[r];
            double* c = C + (i0 + r) * N;
            for (i64 j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

inline void bias_grad_col(const double* dY, double* db, i64 j, i64 M, i64 N, bool acc) {
    double v = acc ? db[j] : 0.0;
    for (i64 m = 0; m < M; ++m) v += dY[m * N + j];
    db[j] = v;
}

inline void layernorm_row(const double* x, const double* gamma, const double* beta, double* y,
                          double* mean, double* rstd, i64 N) {
    double mu = 0.0;
    for (i64 j = 0; j < N; ++j) mu += x[j];
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (i64 j = 0; j < N; ++j) {
        double d = x[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(N);
    double rs = 1.0 / std::sqrt(var + kLayernormEps);
    for (i64 j = 0; j < N; ++j) y[j] = (x[j] - mu) * rs * gamma[j] + beta[j];
    *mean = mu;
    *rstd = rs;
}

inline void layernorm_bwd_row(const double* dy, const double* x, const double* gamma, double mean,
                              double rstd, double* dx, i64 N) {
    // dx = rstd * (g - mean(g) - xhat * mean(g .* xhat)), g = dy .* gamma
    double gsum = 0.0, gxsum = 0.0;
    for (i64 j = 0; j < N; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double g = dy[j] * gamma[j];
        gsum += g;
        gxsum += g * xhat;
    }
    const double inv_n = 1.0 / static_cast<double>(N);
    for (i64 j = 0; j < N; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double g = dy[j] * gamma[j];
        dx[j] = rstd * (g - gsum * inv_n - xhat * gxsum * inv_n);
    }
}

inline void layernorm_param_grad_col(const double* dy, const double* x, const double* mean,
                                     const double* rstd, double* dgamma, double* dbeta, i64 j,
                                     i64 M, i64 N) {
    double dg = dgamma[j];
    double db = dbeta[j];
    for (i64 m = 0; m < M; ++m) {
        double xhat = (x[m * N + j] - mean[m]) * rstd[m];
        dg += dy[m * N + j] * xhat;
        db += dy[m * N + j];
    }
    dgamma[j] = dg;
    dbeta[j] = db;
}

inline void softmax_row(const double* x, double* p, i64 N) {
    double mx = x[0];
    for (i64 j = 1; j < N; ++j) mx = x[j] > mx ? x[j] : mx;
    double sum = 0.0;
    for (i64 j = 0; j < N; ++j) {
        p[j] = std::exp(x[j] - mx);
        sum += p[j];
    }
    double inv = 1.0 / sum;
    for (i64 j = 0; j < N; ++j) p[j] *= inv;
}

inline void softmax_bwd_row(const double* dp, const double* p, double* dx, i64 N) {
    double s = 0.0;
    for (i64 j = 0; j < N; ++j) s += dp[j] * p[j];
    for (i64 j = 0; j < N; ++j) dx[j] = p[j] * (dp[j] - s);
}

inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad_scalar(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    return cdf + x * pdf;
}

}  // namespace imae::kernels::detail
