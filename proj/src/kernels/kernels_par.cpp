#include "imae/kernels.hpp"

#include <cstring>

#include "kernels_detail.hpp"

// OpenMP backend. Parallelism is only over independent output rows/columns;
// each element is still accumulated serially in the reference order, so the
// result is independent of the thread count and equal to ref:: bitwise.
namespace imae::kernels::par {

namespace d = imae::kernels::detail;

void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < M; ++i) d::matmul_row(A + i * K, B, C + i * N, K, N, acc);
}

void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < M; ++i) d::matmul_nt_row(A + i * K, B, C + i * N, K, N, acc);
}

void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    const i64 tiles = K / d::kTnRowTile;
    const i64 rem = K - tiles * d::kTnRowTile;
#pragma omp parallel for schedule(static)
    for (i64 w = 0; w < tiles + rem; ++w) {
        if (w < tiles)
            d::matmul_tn_rows8(A, B, C, w * d::kTnRowTile, M, K, N, acc);
        else {
            const i64 i = tiles * d::kTnRowTile + (w - tiles);
            d::matmul_tn_row(A, B, C + i * N, i, M, K, N, acc);
        }
    }
}

void add_bias(double* Y, const double* b, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 m = 0; m < M; ++m) {
        double* y = Y + m * N;
        for (i64 j = 0; j < N; ++j) y[j] += b[j];
    }
}

void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc) {
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < N; ++j) d::bias_grad_col(dY, db, j, M, N, acc);
}

void add_inplace(double* y, const double* x, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) y[i] += x[i];
}

void axpy(double a, const double* x, double* y, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_inplace(double* y, double s, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) y[i] *= s;
}

void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 m = 0; m < M; ++m)
        d::layernorm_row(x + m * N, gamma, beta, y + m * N, mean + m, rstd + m, N);
}

void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 m = 0; m < M; ++m)
        d::layernorm_bwd_row(dy + m * N, x + m * N, gamma, mean[m], rstd[m], dx + m * N, N);
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < N; ++j)
        d::layernorm_param_grad_col(dy, x, mean, rstd, dgamma, dbeta, j, M, N);
}

void softmax_fwd(const double* x, double* p, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 m = 0; m < M; ++m) d::softmax_row(x + m * N, p + m * N, N);
}

void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 m = 0; m < M; ++m) d::softmax_bwd_row(dp + m * N, p + m * N, dx + m * N, N);
}

void gelu_fwd(const double* x, double* y, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) y[i] = d::gelu_scalar(x[i]);
}

void gelu_bwd(const double* x, const double* dy, double* dx, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dx[i] = dy[i] * d::gelu_grad_scalar(x[i]);
}

void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < R; ++r)
        std::memcpy(Y + r * N, X + idx[r] * N, static_cast<size_t>(N) * sizeof(double));
}

void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N) {
    // idx injective: rows write to disjoint destinations.
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < R; ++r) {
        double* x = X + idx[r] * N;
        const double* y = Y + r * N;
        for (i64 j = 0; j < N; ++j) x[j] += y[j];
    }
}

void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < G * M; ++r) {
        const i64 g = r / M, i = r % M;
        d::matmul_row(A + (g * M + i) * K, B + g * K * N, C + r * N, K, N, acc);
    }
}

void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < G * M; ++r) {
        const i64 g = r / M, i = r % M;
        d::matmul_nt_row(A + (g * M + i) * K, B + g * N * K, C + r * N, K, N, acc);
    }
}

void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    const i64 tiles = K / d::kTnRowTile, rem = K - tiles * d::kTnRowTile, per_g = tiles + rem;
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < G * per_g; ++r) {
        const i64 g = r / per_g, w = r % per_g;
        const double* Ag = A + g * M * K;
        const double* Bg = B + g * M * N;
        double* Cg = C + g * K * N;
        if (w < tiles)
            d::matmul_tn_rows8(Ag, Bg, Cg, w * d::kTnRowTile, M, K, N, acc);
        else {
            const i64 i = tiles * d::kTnRowTile + (w - tiles);
            d::matmul_tn_row(Ag, Bg, Cg + i * N, i, M, K, N, acc);
        }
    }
}

void split_qkv_heads(const double* qkv, double* q, double* k, double* v, i64 Bn, i64 T, i64 H,
                     i64 dh) {
    const i64 D = H * dh;
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < Bn * H * T; ++r) {
        const i64 t = r % T, h = (r / T) % H, b = r / (T * H);
        const double* src = qkv + (b * T + t) * 3 * D + h * dh;
        double* dst = q + r * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
        dst = k + r * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = src[D + j];
        dst = v + r * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = src[2 * D + j];
    }
}

void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn,
                     i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < Bn * H * T; ++r) {
        const i64 t = r % T, h = (r / T) % H, b = r / (T * H);
        double* dst = dqkv + (b * T + t) * 3 * D + h * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = dq[r * dh + j];
        for (i64 j = 0; j < dh; ++j) dst[D + j] = dk[r * dh + j];
        for (i64 j = 0; j < dh; ++j) dst[2 * D + j] = dv[r * dh + j];
    }
}

void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < Bn * H * T; ++r) {
        const i64 t = r % T, h = (r / T) % H, b = r / (T * H);
        const double* src = ctx + r * dh;
        double* dst = out + (b * T + t) * D + h * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
    }
}

void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < Bn * H * T; ++r) {
        const i64 t = r % T, h = (r / T) % H, b = r / (T * H);
        const double* src = x + (b * T + t) * D + h * dh;
        double* dst = ctx + r * dh;
        for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
    }
}


void transpose(const double* A, double* At, i64 M, i64 N) {
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < N; ++j)
        for (i64 i = 0; i < M; ++i) At[j * M + i] = A[i * N + j];
}

}  // namespace imae::kernels::par
