#include "imae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "imae/image_io.hpp"

namespace imae::data {

namespace fs = std::filesystem;

namespace {

u64 split_tag(const std::string& split) {
    if (split == "train") return 0;
    if (split == "val") return 1;
    if (split == "test") return 2;
    return hash_mix(0x5714, std::hash<std::string>{}(split));
}

/// Smooth unit-variance field: low-res gaussian grid, bilinear upsample.
void smooth_field(Rng& rng, i64 H, i64 W, i64 C, i64 grid, std::vector<double>& out) {
    std::vector<double> g(static_cast<size_t>(grid * grid * C));
    for (auto& v : g) v = rng.normal();
    out.resize(static_cast<size_t>(H * W * C));
    for (i64 y = 0; y < H; ++y) {
        double gy = static_cast<double>(y) / static_cast<double>(H) * (grid - 1);
        i64 y0 = static_cast<i64>(gy);
        i64 y1 = std::min(y0 + 1, grid - 1);
        double fy = gy - static_cast<double>(y0);
        for (i64 x = 0; x < W; ++x) {
            double gx = static_cast<double>(x) / static_cast<double>(W) * (grid - 1);
            i64 x0 = static_cast<i64>(gx);
            i64 x1 = std::min(x0 + 1, grid - 1);
            double fx = gx - static_cast<double>(x0);
            for (i64 ch = 0; ch < C; ++ch) {
                double v00 = g[static_cast<size_t>((y0 * grid + x0) * C + ch)];
                double v01 = g[static_cast<size_t>((y0 * grid + x1) * C + ch)];
                double v10 = g[static_cast<size_t>((y1 * grid + x0) * C + ch)];
                double v11 = g[static_cast<size_t>((y1 * grid + x1) * C + ch)];
                double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
                out[static_cast<size_t>((y * W + x) * C + ch)] = v;
            }
        }
    }
}

void bilinear_resize(const double* src, i64 sh, i64 sw, i64 c, double* dst, i64 dh, i64 dw) {
    for (i64 y = 0; y < dh; ++y) {
        double sy = dh > 1 ? static_cast<double>(y) * (sh - 1) / (dh - 1) : 0.0;
        i64 y0 = static_cast<i64>(sy);
        i64 y1 = std::min(y0 + 1, sh - 1);
        double fy = sy - static_cast<double>(y0);
        for (i64 x = 0; x < dw; ++x) {
            double sx = dw > 1 ? static_cast<double>(x) * (sw - 1) / (dw - 1) : 0.0;
            i64 x0 = static_cast<i64>(sx);
            i64 x1 = std::min(x0 + 1, sw - 1);
            double fx = sx - static_cast<double>(x0);
            for (i64 ch = 0; ch < c; ++ch) {
                double v00 = src[(y0 * sw + x0) * c + ch];
                double v01 = src[(y0 * sw + x1) * c + ch];
                double v10 = src[(y1 * sw + x0) * c + ch];
                double v11 = src[(y1 * sw + x1) * c + ch];
                dst[(y * dw + x) * c + ch] =
                    (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
}

}  // namespace

Dataset Dataset::load(const DatasetConfig& cfg) {
    if (cfg.name == "synthetic") return synthetic(cfg);
    if (cfg.name == "folder") return folder(cfg);
    throw ConfigError("unknown dataset '" + cfg.name + "' (expected synthetic or folder)");
}

Dataset Dataset::synthetic(const DatasetConfig& cfg) {
    if (cfg.size <= 0 || cfg.num_classes <= 0) throw ConfigError("synthetic dataset needs size > 0, classes > 0");
    const i64 H = cfg.image_h, W = cfg.image_w, C = cfg.channels, M = cfg.size;
    Dataset ds;
    ds.h_ = H;
    ds.w_ = W;
    ds.c_ = C;
    ds.num_classes_ = cfg.num_classes;
    ds.images_ = Tensor({M, H, W, C});
    ds.labels_.resize(static_cast<size_t>(M));
    ds.ids_.resize(static_cast<size_t>(M));

    // Class prototypes: a smooth field plus a class-specific oriented grating.
    std::vector<std::vector<double>> protos(static_cast<size_t>(cfg.num_classes));
    for (int c = 0; c < cfg.num_classes; ++c) {
        Rng rng(hash_mix(cfg.seed, hash_mix(0xC1A55, static_cast<u64>(c))));
        std::vector<double> field;
        smooth_field(rng, H, W, C, 4, field);
        double freq = 2.0 + 4.0 * rng.uniform();
        double theta = rng.uniform(0.0, M_PI);
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        double kx = std::cos(theta) * freq * 2.0 * M_PI / static_cast<double>(W);
        double ky = std::sin(theta) * freq * 2.0 * M_PI / static_cast<double>(H);
        auto& p = protos[static_cast<size_t>(c)];
        p.resize(static_cast<size_t>(H * W * C));
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x) {
                double g = std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
                for (i64 ch = 0; ch < C; ++ch)
                    p[static_cast<size_t>((y * W + x) * C + ch)] =
                        0.6 * field[static_cast<size_t>((y * W + x) * C + ch)] + 0.55 * g;
            }
    }

    const u64 tag = split_tag(cfg.split);
    double* dst = ds.images_.data();
    for (i64 i = 0; i < M; ++i) {
        int label = static_cast<int>(i % cfg.num_classes);
        Rng rng(hash_mix(cfg.seed, hash_mix(tag + 1, static_cast<u64>(i))));
        i64 dx = rng.randint(9) - 4;  // circular shift in [-4, 4]
        i64 dy = rng.randint(9) - 4;
        std::vector<double> inst;
        smooth_field(rng, H, W, C, 4, inst);
        double bright = rng.uniform(-0.12, 0.12);
        const auto& p = protos[static_cast<size_t>(label)];
        double* img = dst + i * H * W * C;
        for (i64 y = 0; y < H; ++y)
            for (i64 x = 0; x < W; ++x) {
                i64 sy = ((y + dy) % H + H) % H;
                i64 sx = ((x + dx) % W + W) % W;
                for (i64 ch = 0; ch < C; ++ch) {
                    double v = 0.6 * p[static_cast<size_t>((sy * W + sx) * C + ch)] +
                               0.3 * inst[static_cast<size_t>((y * W + x) * C + ch)] + bright;
                    img[(y * W + x) * C + ch] = std::min(1.0, std::max(0.0, 0.5 + 0.42 * v));
                }
            }
        ds.labels_[static_cast<size_t>(i)] = label;
        ds.ids_[static_cast<size_t>(i)] = static_cast<i64>(tag) * 1000000000LL + i;
    }
    return ds;
}

Dataset Dataset::folder(const DatasetConfig& cfg) {
    const fs::path split_dir = fs::path(cfg.root) / cfg.split;
    if (!fs::is_directory(split_dir))
        throw DataError("dataset split directory not found: " + split_dir.string() +
                        " (hint: layout is <root>/<split>/<class_name>/<images>; " +
                        "use dataset.name=synthetic for generated data)");
    std::vector<std::string> class_names;
    for (const auto& e : fs::directory_iterator(split_dir))
        if (e.is_directory()) class_names.push_back(e.path().filename().string());
    std::sort(class_names.begin(), class_names.end());
    if (class_names.empty()) throw DataError("no class directories under " + split_dir.string());

    std::vector<std::pair<std::string, int>> files;  // path, label
    for (size_t c = 0; c < class_names.size(); ++c) {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(split_dir / class_names[c]))
            if (e.is_regular_file() && io::is_supported_image(e.path().string()))
                names.push_back(e.path().string());
        std::sort(names.begin(), names.end());
        for (auto& n : names) files.emplace_back(n, static_cast<int>(c));
    }
    if (files.empty()) throw DataError("no .bmp/.ppm images under " + split_dir.string());

    Dataset ds;
    ds.num_classes_ = static_cast<int>(class_names.size());
    const i64 M = static_cast<i64>(files.size());
    for (i64 i = 0; i < M; ++i) {
        io::Image img = io::read_image(files[static_cast<size_t>(i)].first);
        if (i == 0) {
            ds.h_ = img.h;
            ds.w_ = img.w;
            ds.c_ = cfg.channels;
            ds.images_ = Tensor({M, ds.h_, ds.w_, ds.c_});
        }
        if (img.h != ds.h_ || img.w != ds.w_)
            throw DataError("image size mismatch in " + files[static_cast<size_t>(i)].first +
                            " (all images in a folder dataset must share one size)");
        double* dst = ds.images_.data() + i * ds.h_ * ds.w_ * ds.c_;
        for (i64 y = 0; y < ds.h_; ++y)
            for (i64 x = 0; x < ds.w_; ++x)
                for (i64 ch = 0; ch < ds.c_; ++ch) {
                    double v = ds.c_ == 1
                                   ? (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0
                                   : img.at(y, x, ch % img.c);
                    dst[(y * ds.w_ + x) * ds.c_ + ch] = v;
                }
        ds.labels_.push_back(files[static_cast<size_t>(i)].second);
        ds.ids_.push_back(static_cast<i64>(split_tag(cfg.split)) * 1000000000LL + i);
    }
    return ds;
}

ImageBatch Dataset::make_batch(const std::vector<i64>& indices) const {
    const i64 B = static_cast<i64>(indices.size());
    ImageBatch out;
    out.pixels = Tensor({B, h_, w_, c_});
    out.labels.resize(static_cast<size_t>(B));
    out.ids.resize(static_cast<size_t>(B));
    const i64 stride = h_ * w_ * c_;
    for (i64 b = 0; b < B; ++b) {
        i64 i = indices[static_cast<size_t>(b)];
        if (i < 0 || i >= size()) throw DataError("dataset index out of range");
        std::copy(images_.data() + i * stride, images_.data() + (i + 1) * stride,
                  out.pixels.data() + b * stride);
        out.labels[static_cast<size_t>(b)] = labels_[static_cast<size_t>(i)];
        out.ids[static_cast<size_t>(b)] = ids_[static_cast<size_t>(i)];
    }
    return out;
}

BatchIterator::BatchIterator(const Dataset& ds, const IteratorOptions& opt)
    : ds_(ds), opt_(opt), aug_rng_(hash_mix(opt.seed, hash_mix(0xA06, static_cast<u64>(opt.epoch)))) {
    if (opt_.batch_size <= 0) throw ConfigError("batch_size must be positive");
    reset();
}

void BatchIterator::reset() {
    order_.resize(static_cast<size_t>(ds_.size()));
    for (i64 i = 0; i < ds_.size(); ++i) order_[static_cast<size_t>(i)] = i;
    if (opt_.shuffle) {
        Rng rng(hash_mix(opt_.seed, hash_mix(0x0D0E, static_cast<u64>(opt_.epoch))));
        rng.shuffle(order_);
    }
    cursor_ = 0;
    num_batches_ = opt_.drop_last ? ds_.size() / opt_.batch_size
                                  : (ds_.size() + opt_.batch_size - 1) / opt_.batch_size;
}

bool BatchIterator::next(ImageBatch& out) {
    const i64 remaining = ds_.size() - cursor_;
    if (remaining <= 0) return false;
    i64 take = std::min(opt_.batch_size, remaining);
    if (opt_.drop_last && take < opt_.batch_size) return false;
    std::vector<i64> idx(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    out = ds_.make_batch(idx);
    if (opt_.augment_crop || opt_.augment_hflip)
        augment_batch(out, opt_.augment_crop, opt_.augment_hflip, aug_rng_);
    return true;
}

void augment_batch(ImageBatch& batch, bool crop, bool hflip, Rng& rng) {
    const i64 B = batch.batch(), H = batch.height(), W = batch.width(), C = batch.channels();
    std::vector<double> tmp(static_cast<size_t>(H * W * C));
    for (i64 b = 0; b < B; ++b) {
        double* img = batch.pixels.data() + b * H * W * C;
        if (crop) {
            // RandomResizedCrop: area in [0.2, 1], aspect in [3/4, 4/3].
            double area = static_cast<double>(H * W) * rng.uniform(0.2, 1.0);
            double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
            i64 cw = std::min<i64>(W, std::max<i64>(1, static_cast<i64>(std::lround(std::sqrt(area * aspect)))));
            i64 ch = std::min<i64>(H, std::max<i64>(1, static_cast<i64>(std::lround(std::sqrt(area / aspect)))));
            i64 x0 = rng.randint(W - cw + 1);
            i64 y0 = rng.randint(H - ch + 1);
            std::vector<double> cropped(static_cast<size_t>(ch * cw * C));
            for (i64 y = 0; y < ch; ++y)
                for (i64 x = 0; x < cw; ++x)
                    for (i64 k = 0; k < C; ++k)
                        cropped[static_cast<size_t>((y * cw + x) * C + k)] =
                            img[((y0 + y) * W + x0 + x) * C + k];
            bilinear_resize(cropped.data(), ch, cw, C, tmp.data(), H, W);
            std::copy(tmp.begin(), tmp.end(), img);
        }
        if (hflip && rng.uniform() < 0.5) {
            for (i64 y = 0; y < H; ++y)
                for (i64 x = 0; x < W / 2; ++x)
                    for (i64 k = 0; k < C; ++k)
                        std::swap(img[(y * W + x) * C + k], img[(y * W + (W - 1 - x)) * C + k]);
        }
    }
}

}  // namespace imae::data
