#pragma once

// Independent oracles for the unit and acceptance suites. Everything here is
// deliberately naive and separate from the implementation paths it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "imae/backbone.hpp"
#include "imae/rng.hpp"
#include "imae/tensor.hpp"

namespace testutil {

using imae::i64;
using imae::Tensor;

/// Plain triple-loop matmul, accumulator per element.
inline void naive_matmul(const double* A, const double* B, double* C, i64 M, i64 K, i64 N) {
    for (i64 i = 0; i < M; ++i)
        for (i64 j = 0; j < N; ++j) {
            double acc = 0.0;
            for (i64 k = 0; k < K; ++k) acc += A[i * K + k] * B[k * N + j];
            C[i * N + j] = acc;
        }
}

/// Least squares by normal equations, Gaussian elimination with partial
/// pivoting: returns W [Din, Dout], bias [Dout] for centered fit.
inline void least_squares(const Tensor& X, const Tensor& Y, Tensor& W, Tensor& bias) {
    const i64 M = X.dim(0), Din = X.dim(1), Dout = Y.dim(1);
    std::vector<double> xm(Din, 0.0), ym(Dout, 0.0);
    for (i64 j = 0; j < Din; ++j) {
        for (i64 r = 0; r < M; ++r) xm[j] += X[r * Din + j];
        xm[j] /= static_cast<double>(M);
    }
    for (i64 j = 0; j < Dout; ++j) {
        for (i64 r = 0; r < M; ++r) ym[j] += Y[r * Dout + j];
        ym[j] /= static_cast<double>(M);
    }
    std::vector<double> G(Din * Din, 0.0), R(Din * Dout, 0.0);
    for (i64 a = 0; a < Din; ++a)
        for (i64 b = 0; b < Din; ++b)
            for (i64 r = 0; r < M; ++r)
                G[a * Din + b] += (X[r * Din + a] - xm[a]) * (X[r * Din + b] - xm[b]);
    for (i64 a = 0; a < Din; ++a)
        for (i64 c = 0; c < Dout; ++c)
            for (i64 r = 0; r < M; ++r)
                R[a * Dout + c] += (X[r * Din + a] - xm[a]) * (Y[r * Dout + c] - ym[c]);
    // solve G w = R column by column
    W = Tensor({Din, Dout});
    std::vector<double> A(Din * (Din + 1));
    for (i64 c = 0; c < Dout; ++c) {
        for (i64 i = 0; i < Din; ++i) {
            for (i64 j = 0; j < Din; ++j) A[i * (Din + 1) + j] = G[i * Din + j];
            A[i * (Din + 1) + Din] = R[i * Dout + c];
        }
        for (i64 col = 0; col < Din; ++col) {
            i64 piv = col;
            for (i64 r = col + 1; r < Din; ++r)
                if (std::fabs(A[r * (Din + 1) + col]) > std::fabs(A[piv * (Din + 1) + col]))
                    piv = r;
            for (i64 j = 0; j <= Din; ++j) std::swap(A[col * (Din + 1) + j], A[piv * (Din + 1) + j]);
            const double d = A[col * (Din + 1) + col];
            for (i64 r = 0; r < Din; ++r) {
                if (r == col || A[r * (Din + 1) + col] == 0.0) continue;
                const double f = A[r * (Din + 1) + col] / d;
                for (i64 j = col; j <= Din; ++j) A[r * (Din + 1) + j] -= f * A[col * (Din + 1) + j];
            }
        }
        for (i64 i = 0; i < Din; ++i)
            W[i * Dout + c] = A[i * (Din + 1) + Din] / A[i * (Din + 1) + i];
    }
    bias = Tensor({Dout});
    for (i64 c = 0; c < Dout; ++c) {
        bias[c] = ym[c];
        for (i64 j = 0; j < Din; ++j) bias[c] -= xm[j] * W[j * Dout + c];
    }
}

/// Central finite differences of a scalar function over every element of the
/// given parameter tensors; returns per-tensor max relative error vs analytic.
/// rel err per tensor = ||g_fd - g_an|| / max(||g_fd||, ||g_an||, floor).
inline double grad_check_tensor(imae::model::Param& p, const std::function<double()>& eval_loss,
                                double h = 1e-4, double floor_norm = 1e-6) {
    double num2 = 0.0, an2 = 0.0, diff2 = 0.0;
    for (i64 i = 0; i < p.w.size(); ++i) {
        const double keep = p.w[i];
        p.w[i] = keep + h;
        const double lp = eval_loss();
        p.w[i] = keep - h;
        const double lm = eval_loss();
        p.w[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = p.g[i];
        num2 += fd * fd;
        an2 += an * an;
        diff2 += (fd - an) * (fd - an);
    }
    const double denom = std::max({std::sqrt(num2), std::sqrt(an2), floor_norm});
    return std::sqrt(diff2) / denom;
}

/// Exhaustive same-class pair counter for a permutation.
inline int count_same_class(const std::vector<int>& labels, const std::vector<i64>& perm) {
    int c = 0;
    for (size_t i = 0; i < perm.size(); ++i)
        if (labels[i] == labels[static_cast<size_t>(perm[i])]) ++c;
    return c;
}

/// Brute force over all permutations of [0,B): which exact same-class counts
/// are achievable without fixed points? B <= 8.
inline std::vector<bool> feasible_counts(const std::vector<int>& labels) {
    const i64 B = static_cast<i64>(labels.size());
    std::vector<i64> perm(B);
    for (i64 i = 0; i < B; ++i) perm[i] = i;
    std::vector<bool> ok(static_cast<size_t>(B) + 1, false);
    do {
        bool derangement = true;
        for (i64 i = 0; i < B; ++i)
            if (perm[i] == i) {
                derangement = false;
                break;
            }
        if (!derangement) continue;
        ok[static_cast<size_t>(count_same_class(labels, perm))] = true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return ok;
}

inline Tensor random_tensor(std::vector<i64> shape, imae::Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (i64 i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

inline imae::data::ImageBatch random_images(i64 B, i64 H, i64 W, i64 C, imae::Rng& rng) {
    imae::data::ImageBatch b;
    b.pixels = Tensor({B, H, W, C});
    for (i64 i = 0; i < b.pixels.size(); ++i) b.pixels[i] = rng.uniform();
    b.ids.resize(static_cast<size_t>(B));
    for (i64 i = 0; i < B; ++i) b.ids[static_cast<size_t>(i)] = i;
    return b;
}

}  // namespace testutil
