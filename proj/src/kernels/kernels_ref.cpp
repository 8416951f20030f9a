#include "imae/kernels.hpp"

#include <cstring>

#include "kernels_detail.hpp"

// Serial reference backend: plain loops, no threading. The training-scale
// backend in kernels_par.cpp must reproduce these results bitwise.
namespace imae::kernels::ref {

namespace d = imae::kernels::detail;

void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    for (i64 i = 0; i < M; ++i) d::matmul_row(A + i * K, B, C + i * N, K, N, acc);
}

void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    for (i64 i = 0; i < M; ++i) d::matmul_nt_row(A + i * K, B, C + i * N, K, N, acc);
}

void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    const i64 tiles = K / d::kTnRowTile;
    for (i64 t = 0; t < tiles; ++t) d::matmul_tn_rows8(A, B, C, t * d::kTnRowTile, M, K, N, acc);
    for (i64 i = tiles * d::kTnRowTile; i < K; ++i)
        d::matmul_tn_row(A, B, C + i * N, i, M, K, N, acc);
}

void add_bias(double* Y, const double* b, i64 M, i64 N) {
    for (i64 m = 0; m < M; ++m) {
        double* y = Y + m * N;
        for (i64 j = 0; j < N; ++j) y[j] += b[j];
    }
}

void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc) {
    for (i64 j = 0; j < N; ++j) d::bias_grad_col(dY, db, j, M, N, acc);
}

void add_inplace(double* y, const double* x, i64 n) {
    for (i64 i = 0; i < n; ++i) y[i] += x[i];
}

void axpy(double a, const double* x, double* y, i64 n) {
    for (i64 i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_inplace(double* y, double s, i64 n) {
    for (i64 i = 0; i < n; ++i) y[i] *= s;
}

void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N) {
    for (i64 m = 0; m < M; ++m)
        d::layernorm_row(x + m * N, gamma, beta, y + m * N, mean + m, rstd + m, N);
}

void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N) {
    for (i64 m = 0; m < M; ++m)
        d::layernorm_bwd_row(dy + m * N, x + m * N, gamma, mean[m], rstd[m], dx + m * N, N);
    for (i64 j = 0; j < N; ++j)
        d::layernorm_param_grad_col(dy, x, mean, rstd, dgamma, dbeta, j, M, N);
}

void softmax_fwd(const double* x, double* p, i64 M, i64 N) {
    for (i64 m = 0; m < M; ++m) d::softmax_row(x + m * N, p + m * N, N);
}

void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N) {
    for (i64 m = 0; m < M; ++m) d::softmax_bwd_row(dp + m * N, p + m * N, dx + m * N, N);
}

void gelu_fwd(const double* x, double* y, i64 n) {
    for (i64 i = 0; i < n; ++i) y[i] = d::gelu_scalar(x[i]);
}

void gelu_bwd(const double* x, const double* dy, double* dx, i64 n) {
    for (i64 i = 0; i < n; ++i) dx[i] = dy[i] * d::gelu_grad_scalar(x[i]);
}

void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N) {
    for (i64 r = 0; r < R; ++r)
        std::memcpy(Y + r * N, X + idx[r] * N, static_cast<size_t>(N) * sizeof(double));
}

void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N) {
    for (i64 r = 0; r < R; ++r) {
        double* x = X + idx[r] * N;
        const double* y = Y + r * N;
        for (i64 j = 0; j < N; ++j) x[j] += y[j];
    }
}

void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    for (i64 r = 0; r < G * M; ++r) {
        const i64 g = r / M, i = r % M;
        d::matmul_row(A + (g * M + i) * K, B + g * K * N, C + r * N, K, N, acc);
    }
}

void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    for (i64 r = 0; r < G * M; ++r) {
        const i64 g = r / M, i = r % M;
        d::matmul_nt_row(A + (g * M + i) * K, B + g * N * K, C + r * N, K, N, acc);
    }
}

void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    const i64 tiles = K / d::kTnRowTile, rem = K - tiles * d::kTnRowTile, per_g = tiles + rem;
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
    for (i64 b = 0; b < Bn; ++b)
        for (i64 h = 0; h < H; ++h)
            for (i64 t = 0; t < T; ++t) {
                const double* src = qkv + (b * T + t) * 3 * D + h * dh;
                double* dst = ((b * H + h) * T + t) * dh + q;
                for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
                dst = ((b * H + h) * T + t) * dh + k;
                for (i64 j = 0; j < dh; ++j) dst[j] = src[D + j];
                dst = ((b * H + h) * T + t) * dh + v;
                for (i64 j = 0; j < dh; ++j) dst[j] = src[2 * D + j];
            }
}

void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn,
                     i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
    for (i64 b = 0; b < Bn; ++b)
        for (i64 h = 0; h < H; ++h)
            for (i64 t = 0; t < T; ++t) {
                double* dst = dqkv + (b * T + t) * 3 * D + h * dh;
                const i64 src_row = ((b * H + h) * T + t) * dh;
                for (i64 j = 0; j < dh; ++j) dst[j] = dq[src_row + j];
                for (i64 j = 0; j < dh; ++j) dst[D + j] = dk[src_row + j];
                for (i64 j = 0; j < dh; ++j) dst[2 * D + j] = dv[src_row + j];
            }
}

void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
    for (i64 b = 0; b < Bn; ++b)
        for (i64 h = 0; h < H; ++h)
            for (i64 t = 0; t < T; ++t) {
                const double* src = ctx + ((b * H + h) * T + t) * dh;
                double* dst = out + (b * T + t) * D + h * dh;
                for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
            }
}

void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh) {
    const i64 D = H * dh;
    for (i64 b = 0; b < Bn; ++b)
        for (i64 h = 0; h < H; ++h)
            for (i64 t = 0; t < T; ++t) {
                const double* src = x + (b * T + t) * D + h * dh;
                double* dst = ctx + ((b * H + h) * T + t) * dh;
                for (i64 j = 0; j < dh; ++j) dst[j] = src[j];
            }
}


void transpose(const double* A, double* At, i64 M, i64 N) {
    for (i64 i = 0; i < M; ++i)
        for (i64 j = 0; j < N; ++j) At[j * M + i] = A[i * N + j];
}

}  // namespace imae::kernels::ref
