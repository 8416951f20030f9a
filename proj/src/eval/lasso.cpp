#include <cmath>

#include "imae/evalsep.hpp"
#include "imae/kernels.hpp"

namespace imae::eval {

namespace k = imae::kernels;

Tensor LinearMap::predict(const Tensor& X) const {
    const i64 M = X.dim(0), Din = X.dim(1), Dout = W.dim(1);
    if (Din != W.dim(0)) throw DimensionError("LinearMap dimension mismatch");
    Tensor out({M, Dout});
    k::matmul(X.data(), W.data(), out.data(), M, Din, Dout, false);
    k::add_bias(out.data(), bias.data(), M, Dout);
    return out;
}

LinearMap fit_lasso(const Tensor& X, const Tensor& Y, double lambda, i64 max_sweeps, double tol) {
    const i64 M = X.dim(0), Din = X.dim(1), Dout = Y.dim(1);
    if (Y.dim(0) != M) throw DimensionError("fit_lasso row mismatch");
    if (M < 2) throw ConfigError("fit_lasso needs at least 2 samples");
    if (lambda < 0.0) throw ConfigError("lasso penalty must be >= 0");
    for (i64 i = 0; i < X.size(); ++i)
        if (!std::isfinite(X[i])) throw NumericError("non-finite features in fit_lasso");
    for (i64 i = 0; i < Y.size(); ++i)
        if (!std::isfinite(Y[i])) throw NumericError("non-finite targets in fit_lasso");

    // centered copies; bias carries the means
    std::vector<double> xm(static_cast<size_t>(Din)), ym(static_cast<size_t>(Dout));
    Tensor Xc = X, Yc = Y;
    for (i64 j = 0; j < Din; ++j) {
        double m = 0.0;
        for (i64 r = 0; r < M; ++r) m += X[r * Din + j];
        xm[static_cast<size_t>(j)] = m / static_cast<double>(M);
        for (i64 r = 0; r < M; ++r) Xc[r * Din + j] -= xm[static_cast<size_t>(j)];
    }
    for (i64 j = 0; j < Dout; ++j) {
        double m = 0.0;
        for (i64 r = 0; r < M; ++r) m += Y[r * Dout + j];
        ym[static_cast<size_t>(j)] = m / static_cast<double>(M);
        for (i64 r = 0; r < M; ++r) Yc[r * Dout + j] -= ym[static_cast<size_t>(j)];
    }

    // Gram formulation: G = Xc'Xc, R = Xc'Yc; coordinate updates touch only
    // G columns, so sweeps cost O(Din^2 * Dout) independent of M.
    Tensor G({Din, Din}), R({Din, Dout});
    k::matmul_tn(Xc.data(), Xc.data(), G.data(), M, Din, Din, false);
    k::matmul_tn(Xc.data(), Yc.data(), R.data(), M, Din, Dout, false);
    double tr_yy = 0.0;
    for (i64 i = 0; i < Yc.size(); ++i) tr_yy += Yc[i] * Yc[i];

    LinearMap map;
    map.lambda = lambda;
    map.W = Tensor({Din, Dout});
    map.bias = Tensor({Dout});
    const double lam_m = lambda * static_cast<double>(M);

    // q[:, c] = G * W[:, c], maintained incrementally
    Tensor q({Din, Dout});
    for (i64 sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (i64 j = 0; j < Din; ++j) {
            const double gjj = G[j * Din + j];
            for (i64 c = 0; c < Dout; ++c) {
                const double wold = map.W[j * Dout + c];
                if (gjj <= 0.0) continue;  // constant column, keep at zero
                const double rho = R[j * Dout + c] - q[j * Dout + c] + gjj * wold;
                double wnew = 0.0;
                if (rho > lam_m)
                    wnew = (rho - lam_m) / gjj;
                else if (rho < -lam_m)
                    wnew = (rho + lam_m) / gjj;
                const double delta = wnew - wold;
                if (delta != 0.0) {
                    for (i64 i = 0; i < Din; ++i) q[i * Dout + c] += delta * G[i * Din + j];
                    map.W[j * Dout + c] = wnew;
                }
                max_delta = std::max(max_delta, std::fabs(delta));
            }
        }
        // objective = (1/2M)(tr(Y'Y) - 2 tr(W'R) + tr(W'GW)) + lambda ||W||_1
        double lin = 0.0, quad = 0.0, l1 = 0.0;
        for (i64 i = 0; i < map.W.size(); ++i) {
            lin += map.W[i] * R[i];
            quad += map.W[i] * q[i];
            l1 += std::fabs(map.W[i]);
        }
        map.objective.push_back((tr_yy - 2.0 * lin + quad) / (2.0 * static_cast<double>(M)) +
                                lambda * l1);
        map.sweeps = sweep + 1;
        if (max_delta < tol) {
            map.converged = true;
            break;
        }
    }

    // bias = ym - xm' W
    for (i64 c = 0; c < Dout; ++c) {
        double b = ym[static_cast<size_t>(c)];
        for (i64 j = 0; j < Din; ++j) b -= xm[static_cast<size_t>(j)] * map.W[j * Dout + c];
        map.bias[c] = b;
    }
    return map;
}

}  // namespace imae::eval
