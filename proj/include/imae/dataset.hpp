#pragma once

#include <string>
#include <vector>

#include "imae/patches.hpp"
#include "imae/rng.hpp"

namespace imae::data {

struct DatasetConfig {
    std::string name = "synthetic";  // "synthetic" or "folder"
    std::string root;                // folder datasets: <root>/<split>/<class>/<images>
    std::string split = "train";
    i64 size = 5000;                 // synthetic sample count
    int num_classes = 10;            // synthetic class count
    i64 image_h = 32, image_w = 32, channels = 3;
    u64 seed = 0;
    bool augment_crop = false;       // RandomResizedCrop
    bool augment_hflip = false;
};

/// In-memory dataset. Desk-scale by design: everything is materialized once,
/// read-only afterwards.
class Dataset {
public:
    static Dataset load(const DatasetConfig& cfg);
    static Dataset synthetic(const DatasetConfig& cfg);
    static Dataset folder(const DatasetConfig& cfg);

    i64 size() const { return static_cast<i64>(ids_.size()); }
    i64 image_h() const { return h_; }
    i64 image_w() const { return w_; }
    i64 channels() const { return c_; }
    int num_classes() const { return num_classes_; }
    const std::vector<int>& labels() const { return labels_; }
    const std::vector<i64>& ids() const { return ids_; }

    /// Assemble a batch from dataset indices (no augmentation).
    ImageBatch make_batch(const std::vector<i64>& indices) const;

private:
    Tensor images_;  // [M, H, W, C]
    std::vector<int> labels_;
    std::vector<i64> ids_;
    i64 h_ = 0, w_ = 0, c_ = 0;
    int num_classes_ = 0;
};

struct IteratorOptions {
    i64 batch_size = 128;
    bool drop_last = true;
    bool shuffle = true;
    u64 seed = 0;
    i64 epoch = 0;
    bool augment_crop = false;
    bool augment_hflip = false;
};

/// Deterministic batch stream: order depends only on (seed, epoch).
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, const IteratorOptions& opt);

    i64 num_batches() const { return num_batches_; }
    bool next(ImageBatch& out);
    void reset();

private:
    const Dataset& ds_;
    IteratorOptions opt_;
    std::vector<i64> order_;
    i64 cursor_ = 0;
    i64 num_batches_ = 0;
    Rng aug_rng_;
};

/// RandomResizedCrop + horizontal flip, in place. Exposed for tests.
void augment_batch(ImageBatch& batch, bool crop, bool hflip, Rng& rng);

}  // namespace imae::data
