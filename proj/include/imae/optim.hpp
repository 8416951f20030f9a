#pragma once

#include <vector>

#include "imae/backbone.hpp"

namespace imae::train {

using model::ParamStore;

/// Cosine schedule with linear warmup: 0 at step 0, base_lr at warmup_steps,
/// cosine decay to 0 at total_steps.
double lr_schedule(i64 step, i64 warmup_steps, i64 total_steps, double base_lr);

/// Adam with decoupled weight decay. Decay applies only to params flagged
/// decay (2-D weights), matching usual transformer practice.
class AdamW {
public:
    AdamW(ParamStore& params, double beta1, double beta2, double eps, double weight_decay);

    void step(double lr);
    i64 steps_taken() const { return t_; }

    // checkpoint plumbing
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    void set_steps(i64 t) { t_ = t; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double weight_decay() const { return wd_; }

private:
    ParamStore& params_;
    double beta1_, beta2_, eps_, wd_;
    i64 t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Plain momentum SGD (linear probe).
class SgdMomentum {
public:
    SgdMomentum(ParamStore& params, double momentum, double weight_decay);
    void step(double lr);

private:
    ParamStore& params_;
    double mu_, wd_;
    std::vector<Tensor> vel_;
};

}  // namespace imae::train
