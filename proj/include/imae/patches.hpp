#pragma once

#include <optional>
#include <vector>

#include "imae/tensor.hpp"

namespace imae::data {

/// A batch of images in [0,1], pixel layout [B, H, W, C] row-major.
struct ImageBatch {
    Tensor pixels;              // [B, H, W, C]
    std::vector<int> labels;    // empty when absent, else size B
    std::vector<i64> ids;       // sample identifiers, size B

    i64 batch() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
    i64 height() const { return pixels.dim(1); }
    i64 width() const { return pixels.dim(2); }
    i64 channels() const { return pixels.dim(3); }
    bool has_labels() const { return !labels.empty(); }

    void validate(int num_classes = -1) const;
};

/// Per-patch pixel rows [B, N, P*P*C]; used both as reconstruction targets
/// and as the patch-embedding input.
struct PatchTargets {
    Tensor patches;             // [B, N, P*P*C]
    bool normalized = false;
};

/// Per-patch statistics captured when normalizing, needed to undo the
/// normalization for display.
struct PatchStats {
    Tensor mean;                // [B, N]
    Tensor std;                 // [B, N], sqrt(var + eps)
};

constexpr double kNormPixEps = 1e-6;

/// Split images into non-overlapping P x P patches, row-major patch order,
/// raster (dy, dx, c) pixel order within a patch.
PatchTargets patchify(const ImageBatch& batch, i64 P);

/// Exact inverse of patchify. Patches must be unnormalized (or de-normalized).
ImageBatch unpatchify(const PatchTargets& patches, i64 P, i64 H, i64 W, i64 C);

/// Standardize every patch row: (x - mean) / sqrt(var + 1e-6).
PatchTargets normalize_pix(const PatchTargets& in, PatchStats* stats = nullptr);

/// Undo normalize_pix given the captured stats.
PatchTargets denormalize_pix(const PatchTargets& in, const PatchStats& stats);

}  // namespace imae::data
