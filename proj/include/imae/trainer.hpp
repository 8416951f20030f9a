#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "imae/checkpoint.hpp"
#include "imae/dataset.hpp"
#include "imae/imae_model.hpp"
#include "imae/optim.hpp"

namespace imae::train {

// ---- metrics log ----

struct MetricsRow {
    i64 epoch = 0, step = 0;
    double recon_sub = 0, recon_dom = 0, distill_sub = 0, distill_dom = 0, total = 0, lr = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& r);

// ---- pre-training (teacher MAE and i-MAE phases) ----

struct TrainOptions {
    std::string phase;  // "teacher_pretrain" | "imae_pretrain"
    model::BackboneConfig backbone;
    mix::MixConfig mix;
    model::LossConfig loss;
    double base_lr = 1.5e-4;
    i64 epochs = 100, warmup_epochs = 10, batch = 128, accum_steps = 1;
    double weight_decay = 0.05, beta1 = 0.9, beta2 = 0.95;
    u64 seed = 0;
    std::string teacher_ckpt;     // required for imae phase with distillation
    std::string resume;           // snapshot to continue from (same horizon)
    i64 checkpoint_every = 0;     // epochs between snapshots, 0 = final only
    std::string out_dir = "out";
    std::string run_name = "pretrain";
    nlohmann::json config_echo;
};

struct PretrainResult {
    std::string checkpoint_path;
    std::vector<MetricsRow> rows;
    std::string metrics_path;
    std::string teacher_hash_before, teacher_hash_after;  // empty when no teacher
};

/// Vanilla MAE objective for the teacher phase: reconstruct the (unmixed)
/// input from its visible tokens.
model::LossReport mae_step(model::ViTBackbone& vit, const data::ImageBatch& batch,
                           const model::MaskSpec& mask, bool norm_pix, bool backward);

PretrainResult pretrain(const TrainOptions& opt, const data::Dataset& train_data);

// ---- supervised heads ----

struct FinetuneOptions {
    std::string init_ckpt;
    int num_classes = 10;
    bool mixup = true;
    double mix_beta = 1.0;
    std::optional<double> fixed_lambda;  // explicit lambda (accepts 1 = plain CE)
    bool mean_pool = false;              // default: class token
    double base_lr = 1e-3;
    i64 epochs = 100, warmup_epochs = 5, batch = 128;
    double weight_decay = 0.05, beta1 = 0.9, beta2 = 0.999;
    u64 seed = 0;
    std::string out_dir = "out";
    std::string run_name = "finetune";
    nlohmann::json config_echo;
};

struct ProbeOptions {
    std::string init_ckpt;
    int num_classes = 10;
    bool mean_pool = false;
    double base_lr = 1e-2, momentum = 0.9;
    i64 epochs = 200, batch = 128;
    u64 seed = 0;
    std::string out_dir = "out";
    std::string run_name = "probe";
    nlohmann::json config_echo;
};

struct EvalReport {
    double top1 = 0;                // final validation top-1 (percent)
    std::vector<double> history;    // per-epoch validation accuracy
    std::string checkpoint_path;    // finetune only
    std::string encoder_hash_before, encoder_hash_after;  // probe freeze proof
};

EvalReport finetune(const FinetuneOptions& opt, const data::Dataset& train_data,
                    const data::Dataset& val_data);

EvalReport linear_probe(const ProbeOptions& opt, const data::Dataset& train_data,
                        const data::Dataset& val_data);

// ---- shared helpers (also used by tests) ----

/// Softmax cross-entropy with soft targets; returns mean loss, writes
/// d_logits = (softmax - target) / B when requested.
double softmax_xent(const Tensor& logits, const Tensor& targets, Tensor* d_logits = nullptr);

/// Batch-statistics normalization without affine parameters. Training mode
/// normalizes with batch moments and updates running stats (momentum 0.1).
Tensor batchnorm_train(const Tensor& x, Tensor& running_mean, Tensor& running_var,
                       double momentum = 0.1);
Tensor batchnorm_eval(const Tensor& x, const Tensor& running_mean, const Tensor& running_var);

/// Frozen-encoder feature extraction: unmasked forward, class token (or mean
/// of patch tokens). Batched internally.
Tensor extract_features(const model::ViTBackbone& vit, const data::Dataset& ds, bool mean_pool,
                        i64 batch);

/// The probe head: batch-normalized features into a linear classifier trained
/// with momentum SGD. Returns per-epoch validation top-1 (percent).
std::vector<double> train_linear_head(const Tensor& x_train, const std::vector<int>& y_train,
                                      const Tensor& x_val, const std::vector<int>& y_val,
                                      const ProbeOptions& opt);

/// Rebuild a model from a checkpoint (teacher/imae/finetune kinds).
struct LoadedModel {
    std::string kind;
    std::unique_ptr<model::ViTBackbone> vit;    // teacher / finetune kinds
    std::unique_ptr<model::ImaeModel> imae;     // imae kind
    CheckpointMeta meta;

    model::ViTBackbone& backbone() { return imae ? imae->vit() : *vit; }
    const model::ViTBackbone& backbone() const { return imae ? imae->vit() : *vit; }
};

LoadedModel load_model(const std::string& ckpt_path);

}  // namespace imae::train
