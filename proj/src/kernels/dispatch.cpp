#include "imae/kernels.hpp"

namespace imae::kernels {

namespace {
Backend g_backend = Backend::parallel;
}

void set_backend(Backend b) { g_backend = b; }
Backend backend() { return g_backend; }

#define IMAE_DISPATCH(fn, ...)                  \
    do {                                        \
        if (g_backend == Backend::parallel)     \
            par::fn(__VA_ARGS__);               \
        else                                    \
            ref::fn(__VA_ARGS__);               \
    } while (0)

void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(matmul, A, B, C, M, K, N, acc);
}
void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(matmul_nt, A, B, C, M, K, N, acc);
}
void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(matmul_tn, A, B, C, M, K, N, acc);
}
void add_bias(double* Y, const double* b, i64 M, i64 N) { IMAE_DISPATCH(add_bias, Y, b, M, N); }
void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc) {
    IMAE_DISPATCH(bias_grad, dY, db, M, N, acc);
}
void add_inplace(double* y, const double* x, i64 n) { IMAE_DISPATCH(add_inplace, y, x, n); }
void axpy(double a, const double* x, double* y, i64 n) { IMAE_DISPATCH(axpy, a, x, y, n); }
void scale_inplace(double* y, double s, i64 n) { IMAE_DISPATCH(scale_inplace, y, s, n); }
void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N) {
    IMAE_DISPATCH(layernorm_fwd, x, gamma, beta, y, mean, rstd, M, N);
}
void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N) {
    IMAE_DISPATCH(layernorm_bwd, dy, x, gamma, mean, rstd, dx, dgamma, dbeta, M, N);
}
void softmax_fwd(const double* x, double* p, i64 M, i64 N) {
    IMAE_DISPATCH(softmax_fwd, x, p, M, N);
}
void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N) {
    IMAE_DISPATCH(softmax_bwd, dp, p, dx, M, N);
}
void gelu_fwd(const double* x, double* y, i64 n) { IMAE_DISPATCH(gelu_fwd, x, y, n); }
void gelu_bwd(const double* x, const double* dy, double* dx, i64 n) {
    IMAE_DISPATCH(gelu_bwd, x, dy, dx, n);
}
void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N) {
    IMAE_DISPATCH(gather_rows, X, idx, Y, R, N);
}
void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N) {
    IMAE_DISPATCH(scatter_rows_add, Y, idx, X, R, N);
}
void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(bmatmul, A, B, C, G, M, K, N, acc);
}
void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(bmatmul_nt, A, B, C, G, M, K, N, acc);
}
void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc) {
    IMAE_DISPATCH(bmatmul_tn, A, B, C, G, M, K, N, acc);
}
void split_qkv_heads(const double* qkv, double* q, double* k, double* v, i64 Bn, i64 T, i64 H, i64 dh) {
    IMAE_DISPATCH(split_qkv_heads, qkv, q, k, v, Bn, T, H, dh);
}
void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn, i64 T, i64 H, i64 dh) {
    IMAE_DISPATCH(merge_qkv_heads, dq, dk, dv, dqkv, Bn, T, H, dh);
}
void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh) {
    IMAE_DISPATCH(merge_heads, ctx, out, Bn, T, H, dh);
}
void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh) {
    IMAE_DISPATCH(split_heads, x, ctx, Bn, T, H, dh);
}
void transpose(const double* A, double* At, i64 M, i64 N) {
    IMAE_DISPATCH(transpose, A, At, M, N);
}

#undef IMAE_DISPATCH

}  // namespace imae::kernels
