#include <cmath>
#include <sstream>

#include "imae/evalsep.hpp"

namespace imae::eval {

namespace {
double global_std(const Tensor& t) {
    const i64 n = t.size();
    double mean = 0.0;
    for (i64 i = 0; i < n; ++i) mean += t[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (i64 i = 0; i < n; ++i) {
        const double d = t[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(n));
}
}  // namespace

double nrmse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw DimensionError("nrmse shape mismatch");
    const double sd = global_std(target);
    if (sd == 0.0) throw NumericError("nrmse: constant target has zero std");
    double mse = 0.0;
    for (i64 i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    return std::sqrt(mse) / sd;
}

double r_squared(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw DimensionError("r_squared shape mismatch");
    const i64 n = target.size();
    double mean = 0.0;
    for (i64 i = 0; i < n; ++i) mean += target[i];
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (i64 i = 0; i < n; ++i) {
        const double r = pred[i] - target[i];
        const double t = target[i] - mean;
        ss_res += r * r;
        ss_tot += t * t;
    }
    if (ss_tot == 0.0) throw NumericError("r_squared: zero total sum of squares");
    return 1.0 - ss_res / ss_tot;
}

double cosine_sim(const Tensor& pred, const Tensor& target, i64* skipped) {
    if (!pred.same_shape(target)) throw DimensionError("cosine_sim shape mismatch");
    if (pred.rank() != 2) throw DimensionError("cosine_sim expects [M, D] rows");
    const i64 M = pred.dim(0), D = pred.dim(1);
    double acc = 0.0;
    i64 used = 0, skip = 0;
    for (i64 r = 0; r < M; ++r) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        const double* a = pred.data() + r * D;
        const double* b = target.data() + r * D;
        for (i64 j = 0; j < D; ++j) {
            dot += a[j] * b[j];
            na += a[j] * a[j];
            nb += b[j] * b[j];
        }
        if (na == 0.0 || nb == 0.0) {
            ++skip;
            continue;
        }
        acc += dot / (std::sqrt(na) * std::sqrt(nb));
        ++used;
    }
    if (skipped) *skipped = skip;
    if (used == 0) throw NumericError("cosine_sim: all rows have zero norm");
    return acc / static_cast<double>(used);
}

std::string SeparabilityReport::csv_header() const {
    return "tag,nrmse_fore,nrmse_aft,r2_fore,r2_aft,cos_fore,cos_aft,lambda,train_rows,val_rows,"
           "skipped_rows\n";
}

std::string SeparabilityReport::csv_row(const std::string& tag) const {
    std::ostringstream os;
    os.precision(17);
    os << tag << "," << nrmse_fore << "," << nrmse_aft << "," << r2_fore << "," << r2_aft << ","
       << cos_fore << "," << cos_aft << "," << lambda << "," << train_rows << "," << val_rows
       << "," << skipped_rows << "\n";
    return os.str();
}

std::string SeparabilityReport::table(const std::string& tag) const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-18s  %10s  %10s\n"
                  "%-18s  %10.3f  %10.3f\n"
                  "%-18s  %10.3f  %10.3f\n"
                  "%-18s  %10.3f  %10.3f\n",
                  tag.c_str(), "Fore", "Aft", "NRMSE (down)", nrmse_fore, nrmse_aft,
                  "R^2 (up)", r2_fore, r2_aft, "Cos (up)", cos_fore, cos_aft);
    return buf;
}

}  // namespace imae::eval
