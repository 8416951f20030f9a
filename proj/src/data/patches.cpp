#include "imae/patches.hpp"

#include <cmath>
#include <string>

namespace imae::data {

void ImageBatch::validate(int num_classes) const {
    if (pixels.rank() != 4) throw DimensionError("ImageBatch pixels must be [B,H,W,C]");
    for (i64 i = 0; i < pixels.size(); ++i)
        if (!std::isfinite(pixels[i])) throw DataError("non-finite pixel value");
    if (!labels.empty()) {
        if (static_cast<i64>(labels.size()) != batch())
            throw DimensionError("labels size mismatch");
        if (num_classes >= 0)
            for (int l : labels)
                if (l < 0 || l >= num_classes) throw DataError("label out of range");
    }
    if (static_cast<i64>(ids.size()) != batch()) throw DimensionError("ids size mismatch");
}

PatchTargets patchify(const ImageBatch& batch, i64 P) {
    const i64 B = batch.batch(), H = batch.height(), W = batch.width(), C = batch.channels();
    if (P <= 0 || H % P != 0 || W % P != 0)
        throw DimensionError("image size " + std::to_string(H) + "x" + std::to_string(W) +
                             " not divisible by patch size " + std::to_string(P));
    const i64 gh = H / P, gw = W / P, N = gh * gw, D = P * P * C;
    PatchTargets out;
    out.patches = Tensor({B, N, D});
    const double* src = batch.pixels.data();
    double* dst = out.patches.data();
    for (i64 b = 0; b < B; ++b) {
        for (i64 py = 0; py < gh; ++py) {
            for (i64 px = 0; px < gw; ++px) {
                double* row = dst + ((b * N) + py * gw + px) * D;
                for (i64 dy = 0; dy < P; ++dy) {
                    const double* line = src + ((b * H + py * P + dy) * W + px * P) * C;
                    for (i64 k = 0; k < P * C; ++k) row[dy * P * C + k] = line[k];
                }
            }
        }
    }
    return out;
}

ImageBatch unpatchify(const PatchTargets& patches, i64 P, i64 H, i64 W, i64 C) {
    if (patches.patches.rank() != 3) throw DimensionError("patches must be [B,N,P*P*C]");
    const i64 B = patches.patches.dim(0), N = patches.patches.dim(1), D = patches.patches.dim(2);
    if (P <= 0 || H % P != 0 || W % P != 0 || D != P * P * C || N != (H / P) * (W / P))
        throw DimensionError("patch grid does not match target image shape");
    const i64 gw = W / P;
    ImageBatch out;
    out.pixels = Tensor({B, H, W, C});
    const double* src = patches.patches.data();
    double* dst = out.pixels.data();
    for (i64 b = 0; b < B; ++b) {
        for (i64 n = 0; n < N; ++n) {
            const i64 py = n / gw, px = n % gw;
            const double* row = src + (b * N + n) * D;
            for (i64 dy = 0; dy < P; ++dy) {
                double* line = dst + ((b * H + py * P + dy) * W + px * P) * C;
                for (i64 k = 0; k < P * C; ++k) line[k] = row[dy * P * C + k];
            }
        }
    }
    out.ids.assign(static_cast<size_t>(B), 0);
    for (i64 b = 0; b < B; ++b) out.ids[static_cast<size_t>(b)] = b;
    return out;
}

PatchTargets normalize_pix(const PatchTargets& in, PatchStats* stats) {
    if (in.normalized) throw ConfigError("normalize_pix input already normalized");
    const i64 B = in.patches.dim(0), N = in.patches.dim(1), D = in.patches.dim(2);
    PatchTargets out;
    out.patches = Tensor({B, N, D});
    out.normalized = true;
    if (stats) {
        stats->mean = Tensor({B, N});
        stats->std = Tensor({B, N});
    }
    const double* src = in.patches.data();
    double* dst = out.patches.data();
    for (i64 r = 0; r < B * N; ++r) {
        const double* x = src + r * D;
        double* y = dst + r * D;
        double mu = 0.0;
        for (i64 j = 0; j < D; ++j) mu += x[j];
        mu /= static_cast<double>(D);
        double var = 0.0;
        for (i64 j = 0; j < D; ++j) {
            double d = x[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(D);
        double sd = std::sqrt(var + kNormPixEps);
        for (i64 j = 0; j < D; ++j) y[j] = (x[j] - mu) / sd;
        if (stats) {
            stats->mean[r] = mu;
            stats->std[r] = sd;
        }
    }
    return out;
}

PatchTargets denormalize_pix(const PatchTargets& in, const PatchStats& stats) {
    const i64 B = in.patches.dim(0), N = in.patches.dim(1), D = in.patches.dim(2);
    if (stats.mean.size() != B * N) throw DimensionError("patch stats shape mismatch");
    PatchTargets out;
    out.patches = Tensor({B, N, D});
    out.normalized = false;
    const double* src = in.patches.data();
    double* dst = out.patches.data();
    for (i64 r = 0; r < B * N; ++r)
        for (i64 j = 0; j < D; ++j) dst[r * D + j] = src[r * D + j] * stats.std[r] + stats.mean[r];
    return out;
}

}  // namespace imae::data
