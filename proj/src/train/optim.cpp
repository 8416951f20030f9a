#include "imae/optim.hpp"

#include <cmath>

namespace imae::train {

double lr_schedule(i64 step, i64 warmup_steps, i64 total_steps, double base_lr) {
    if (step < 0) throw ConfigError("lr_schedule: negative step");
    if (warmup_steps >= total_steps) throw ConfigError("warmup must end before total steps");
    if (step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (step >= total_steps) return 0.0;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(ParamStore& params, double beta1, double beta2, double eps, double weight_decay)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
    for (auto& p : params_.all()) {
        m_.emplace_back(p.w.shape());
        v_.emplace_back(p.w.shape());
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (i64 i = 0; i < params_.count(); ++i) {
        auto& p = params_.at(i);
        auto& m = m_[static_cast<size_t>(i)];
        auto& v = v_[static_cast<size_t>(i)];
        const double decay = p.decay ? wd_ : 0.0;
        for (i64 j = 0; j < p.w.size(); ++j) {
            const double g = p.g[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay * p.w[j]);
        }
    }
}

SgdMomentum::SgdMomentum(ParamStore& params, double momentum, double weight_decay)
    : params_(params), mu_(momentum), wd_(weight_decay) {
    for (auto& p : params_.all()) vel_.emplace_back(p.w.shape());
}

void SgdMomentum::step(double lr) {
    for (i64 i = 0; i < params_.count(); ++i) {
        auto& p = params_.at(i);
        auto& v = vel_[static_cast<size_t>(i)];
        const double decay = p.decay ? wd_ : 0.0;
        for (i64 j = 0; j < p.w.size(); ++j) {
            const double g = p.g[j] + decay * p.w[j];
            v[j] = mu_ * v[j] + g;
            p.w[j] -= lr * v[j];
        }
    }
}

}  // namespace imae::train
