#pragma once

#include "imae/backbone.hpp"
#include "imae/mixer.hpp"

namespace imae::model {

struct LossConfig {
    double distill_coeff = 1.0;   // c
    bool dual_branch = true;      // false = subordinate-only (i-MAE-Sub)
    bool use_distill = true;
    bool norm_pix_targets = true;

    void validate() const {
        if (distill_coeff < 0.0) throw ConfigError("loss.c must be >= 0");
    }
};

struct LossReport {
    double recon_sub = 0.0, recon_dom = 0.0;
    double distill_sub = 0.0, distill_dom = 0.0;
    double total = 0.0;
    double alpha_mean = 0.0, sub_coeff_mean = 0.0;
};

/// Mean squared error over masked patches only: per-patch pixel mean, then
/// mean over all masked patches in the batch. d_pred (optional) receives the
/// gradient for upstream weight 1.
double recon_loss(const Tensor& pred, const Tensor& target, const MaskSpec& mask,
                  Tensor* d_pred = nullptr);

/// Elementwise MSE between student and teacher tokens over visible patch
/// tokens (class token excluded when skip_cls). Teacher side is constant.
double distill_loss(const Tensor& h_student, const Tensor& h_teacher, bool skip_cls,
                    Tensor* d_student = nullptr);

/// Student model: MAE backbone plus the two disentanglement heads, all in one
/// parameter store so the optimizer and checkpoints see a single registry.
class ImaeModel {
public:
    ImaeModel(const BackboneConfig& cfg, Rng& init_rng);

    ViTBackbone& vit() { return vit_; }
    const ViTBackbone& vit() const { return vit_; }
    ParamStore& params() { return vit_.params(); }
    const ParamStore& params() const { return vit_.params(); }

    /// h = F_head(h_m) applied per token (class token included). head is 1 or 2.
    Tensor disentangle(const Tensor& h_m, int head) const;
    /// Accumulates head parameter grads and adds the input gradient into d_h_m.
    void disentangle_backward(const Tensor& h_m, const Tensor& d_h, int head, Tensor& d_h_m);

private:
    ViTBackbone vit_;
    LinearRef f1_, f2_;
};

/// One training objective evaluation on a prepared batch: mixes inputs,
/// encodes once, disentangles, reconstructs each branch against (optionally
/// normalized) pixel targets, distills against the frozen teacher under the
/// same mask, and (optionally) accumulates all student gradients.
LossReport imae_step(ImaeModel& student, const ViTBackbone* teacher,
                     const data::ImageBatch& batch, const mix::MixSpec& mix_spec,
                     const MaskSpec& mask, const LossConfig& cfg, bool backward);

/// Convenience wrapper matching the training loop: draws the shared mask from
/// rng, then runs imae_step.
LossReport imae_forward(ImaeModel& student, const ViTBackbone* teacher,
                        const data::ImageBatch& batch, const mix::MixSpec& mix_spec,
                        const LossConfig& cfg, Rng& rng, bool backward);

}  // namespace imae::model
