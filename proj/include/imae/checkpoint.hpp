#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imae/backbone.hpp"
#include "imae/optim.hpp"

namespace imae::train {

nlohmann::json backbone_config_to_json(const model::BackboneConfig& cfg);
model::BackboneConfig backbone_config_from_json(const nlohmann::json& j);

/// Checkpoint header; parameter blobs follow in registry order, raw little-
/// endian doubles, so a save/load round trip is bitwise exact.
struct CheckpointMeta {
    std::string kind;            // "teacher" | "imae" | "finetune"
    model::BackboneConfig model;
    nlohmann::json extra;        // run-config echo
    i64 epoch = 0;
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore& params, const AdamW* opt = nullptr);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    std::vector<std::pair<std::string, Tensor>> params;
    bool has_opt = false;
    i64 opt_t = 0;
    std::vector<Tensor> opt_m, opt_v;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copy loaded tensors into a live registry by name. strict requires an exact
/// one-to-one match.
void restore_params(const LoadedCheckpoint& ck, ParamStore& params, bool strict = true);
void restore_optimizer(const LoadedCheckpoint& ck, AdamW& opt);

std::string sha256_bytes(const void* data, size_t len);
std::string sha256_file(const std::string& path);
/// Hash of the concatenated parameter blobs in registry order.
std::string sha256_params(const ParamStore& params);

}  // namespace imae::train
