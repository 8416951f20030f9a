#pragma once

#include <string>
#include <vector>

#include "imae/dataset.hpp"
#include "imae/imae_model.hpp"

namespace imae::eval {

/// Affine map fitted from student features to teacher features.
struct LinearMap {
    Tensor W;     // [Din, Dout]
    Tensor bias;  // [Dout]
    double lambda = 0.0;
    i64 sweeps = 0;
    bool converged = false;
    std::vector<double> objective;  // value after each coordinate-descent sweep

    Tensor predict(const Tensor& X) const;  // [M, Din] -> [M, Dout]
};

/// Multi-output lasso, objective (1/2M)||Y - XW - b||^2 + lambda*||W||_1,
/// solved by cyclic coordinate descent on precomputed Gram matrices.
/// Columns are centered internally; the bias absorbs the means.
LinearMap fit_lasso(const Tensor& X, const Tensor& Y, double lambda, i64 max_sweeps = 1000,
                    double tol = 1e-6);

/// sqrt(mean((pred-target)^2)) / std(target); std over all entries (population).
double nrmse(const Tensor& pred, const Tensor& target);

/// 1 - SS_res / SS_tot about the global target mean. Equals 1 - nrmse^2.
double r_squared(const Tensor& pred, const Tensor& target);

/// Mean per-row cosine similarity; zero-norm rows are skipped and counted.
double cosine_sim(const Tensor& pred, const Tensor& target, i64* skipped = nullptr);

struct SeparabilityReport {
    double nrmse_fore = 0, nrmse_aft = 0;
    double r2_fore = 0, r2_aft = 0;
    double cos_fore = 0, cos_aft = 0;
    double lambda = 0;
    i64 train_rows = 0, val_rows = 0;
    i64 skipped_rows = 0;

    std::string csv_header() const;
    std::string csv_row(const std::string& tag) const;
    std::string table(const std::string& tag) const;
};

enum class PairingMode { derangement, identity };

struct SeparabilityOptions {
    double lambda = 1e-3;
    double train_frac = 0.8;
    i64 batch = 128;
    i64 max_batches = 8;    // feature-collection budget
    u64 seed = 0;
    mix::MixConfig mix;     // alpha sampling for the evaluation mixtures
    PairingMode pairing = PairingMode::derangement;
};

/// The Fore/Aft protocol: encode mixed inputs with the student, disentangle
/// the subordinate branch, compare per-token against the frozen teacher's
/// features of the same subordinate image under the same mask. Aft metrics
/// come from a lasso regressor fitted on the train split and evaluated on the
/// held-out split; Fore compares raw features on the same held-out rows.
SeparabilityReport separability_report(const model::ImaeModel& student,
                                       const model::ViTBackbone& teacher,
                                       const data::Dataset& ds, const SeparabilityOptions& opt);

}  // namespace imae::eval
