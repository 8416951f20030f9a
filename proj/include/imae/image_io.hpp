#pragma once

#include <string>
#include <vector>

#include "imae/common.hpp"

namespace imae::io {

/// One decoded image, pixels [h, w, c] row-major in [0, 1].
struct Image {
    i64 h = 0, w = 0, c = 0;
    std::vector<double> px;

    double at(i64 y, i64 x, i64 ch) const { return px[static_cast<size_t>((y * w + x) * c + ch)]; }
    double& at(i64 y, i64 x, i64 ch) { return px[static_cast<size_t>((y * w + x) * c + ch)]; }
};

/// 24-bit uncompressed BMP. Values are clamped to [0,1] and quantized to 8-bit;
/// byte output is deterministic.
void write_bmp(const std::string& path, const Image& img);
Image read_bmp(const std::string& path);

/// Binary PPM (P6), maxval 255.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Dispatch on file extension (.bmp, .ppm).
Image read_image(const std::string& path);
bool is_supported_image(const std::string& path);

}  // namespace imae::io
