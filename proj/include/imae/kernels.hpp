#pragma once

#include "imae/common.hpp"

namespace imae::kernels {

/// The serial and OpenMP backends compute every output element with the same
/// accumulation order, so their results are bitwise identical for any thread
/// count. Tests rely on that; the parity suite compares them directly.
enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();

// ---- dispatched API (calls ref:: or par:: per the global backend) ----

// C[M,N] (+)= A[M,K] * B[K,N]
void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc = false);
// C[M,N] (+)= A[M,K] * B[N,K]^T
void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc = false);
// C[K,N] (+)= A[M,K]^T * B[M,N]
void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc = false);

void add_bias(double* Y, const double* b, i64 M, i64 N);            // Y[m,:] += b
void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc = true);

void add_inplace(double* y, const double* x, i64 n);                // y += x
void axpy(double a, const double* x, double* y, i64 n);             // y += a*x
void scale_inplace(double* y, double s, i64 n);

// Per-row layernorm with eps=1e-6; mean/rstd are saved for backward.
void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N);
void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N);

void softmax_fwd(const double* x, double* p, i64 M, i64 N);
void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N);

// Exact erf GELU.
void gelu_fwd(const double* x, double* y, i64 n);
void gelu_bwd(const double* x, const double* dy, double* dx, i64 n);

// Row gather/scatter. idx must be injective for the parallel backend;
// every call site uses permutations or keep-subsets, which are.
void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N);
void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N);

// Batched matmuls over G independent problems (attention heads).
void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc = false);
void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc = false);
void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc = false);

void transpose(const double* A, double* At, i64 M, i64 N);

// Head reshapes: qkv [B,T,3D] <-> q,k,v [B,H,T,dh]; ctx [B,H,T,dh] <-> [B,T,D].
void split_qkv_heads(const double* qkv, double* q, double* k, double* v, i64 Bn, i64 T, i64 H, i64 dh);
void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn, i64 T, i64 H, i64 dh);
void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh);
void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh);

namespace ref {
void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void add_bias(double* Y, const double* b, i64 M, i64 N);
void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc);
void add_inplace(double* y, const double* x, i64 n);
void axpy(double a, const double* x, double* y, i64 n);
void scale_inplace(double* y, double s, i64 n);
void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N);
void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N);
void softmax_fwd(const double* x, double* p, i64 M, i64 N);
void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N);
void gelu_fwd(const double* x, double* y, i64 n);
void gelu_bwd(const double* x, const double* dy, double* dx, i64 n);
void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N);
void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N);
void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void split_qkv_heads(const double* qkv, double* q, double* k, double* v, i64 Bn, i64 T, i64 H, i64 dh);
void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn, i64 T, i64 H, i64 dh);
void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh);
void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh);
void transpose(const double* A, double* At, i64 M, i64 N);
}  // namespace ref

namespace par {
void matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void matmul_nt(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void matmul_tn(const double* A, const double* B, double* C, i64 M, i64 K, i64 N, bool acc);
void add_bias(double* Y, const double* b, i64 M, i64 N);
void bias_grad(const double* dY, double* db, i64 M, i64 N, bool acc);
void add_inplace(double* y, const double* x, i64 n);
void axpy(double a, const double* x, double* y, i64 n);
void scale_inplace(double* y, double s, i64 n);
void layernorm_fwd(const double* x, const double* gamma, const double* beta, double* y,
                   double* mean, double* rstd, i64 M, i64 N);
void layernorm_bwd(const double* dy, const double* x, const double* gamma, const double* mean,
                   const double* rstd, double* dx, double* dgamma, double* dbeta, i64 M, i64 N);
void softmax_fwd(const double* x, double* p, i64 M, i64 N);
void softmax_bwd(const double* dp, const double* p, double* dx, i64 M, i64 N);
void gelu_fwd(const double* x, double* y, i64 n);
void gelu_bwd(const double* x, const double* dy, double* dx, i64 n);
void gather_rows(const double* X, const i64* idx, double* Y, i64 R, i64 N);
void scatter_rows_add(const double* Y, const i64* idx, double* X, i64 R, i64 N);
void bmatmul(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void bmatmul_nt(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void bmatmul_tn(const double* A, const double* B, double* C, i64 G, i64 M, i64 K, i64 N, bool acc);
void split_qkv_heads(const double* qkv, double* q, double* k, double* v, i64 Bn, i64 T, i64 H, i64 dh);
void merge_qkv_heads(const double* dq, const double* dk, const double* dv, double* dqkv, i64 Bn, i64 T, i64 H, i64 dh);
void merge_heads(const double* ctx, double* out, i64 Bn, i64 T, i64 H, i64 dh);
void split_heads(const double* x, double* ctx, i64 Bn, i64 T, i64 H, i64 dh);
void transpose(const double* A, double* At, i64 M, i64 N);
}  // namespace par

}  // namespace imae::kernels
