#include "imae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace imae::io {

namespace {

uint8_t quantize(double v) {
    double c = std::min(1.0, std::max(0.0, v));
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
}

double channel_or_gray(const Image& img, i64 y, i64 x, i64 ch) {
    return img.c == 1 ? img.at(y, x, 0) : img.at(y, x, ch);
}

}  // namespace

void write_bmp(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3) throw DataError("bmp writer supports 1 or 3 channels");
    const i64 w = img.w, h = img.h;
    const i64 row_bytes = (3 * w + 3) / 4 * 4;
    const uint32_t data_size = static_cast<uint32_t>(row_bytes * h);
    std::vector<uint8_t> out;
    out.reserve(54 + data_size);
    out.push_back('B');
    out.push_back('M');
    put_u32(out, 54 + data_size);
    put_u32(out, 0);
    put_u32(out, 54);
    put_u32(out, 40);  // BITMAPINFOHEADER
    put_u32(out, static_cast<uint32_t>(w));
    put_u32(out, static_cast<uint32_t>(h));
    put_u16(out, 1);
    put_u16(out, 24);
    put_u32(out, 0);
    put_u32(out, data_size);
    put_u32(out, 2835);
    put_u32(out, 2835);
    put_u32(out, 0);
    put_u32(out, 0);
    const i64 pad = row_bytes - 3 * w;
    for (i64 y = h - 1; y >= 0; --y) {  // bottom-up rows
        for (i64 x = 0; x < w; ++x) {
            out.push_back(quantize(channel_or_gray(img, y, x, 2)));  // B
            out.push_back(quantize(channel_or_gray(img, y, x, 1)));  // G
            out.push_back(quantize(channel_or_gray(img, y, x, 0)));  // R
        }
        for (i64 p = 0; p < pad; ++p) out.push_back(0);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Image read_bmp(const std::string& path) {
    auto buf = read_file(path);
    if (buf.size() < 54 || buf[0] != 'B' || buf[1] != 'M') throw DataError("not a BMP: " + path);
    const uint32_t offset = get_u32(&buf[10]);
    const uint32_t header_size = get_u32(&buf[14]);
    if (header_size < 40) throw DataError("unsupported BMP header: " + path);
    const int32_t w = static_cast<int32_t>(get_u32(&buf[18]));
    const int32_t h = static_cast<int32_t>(get_u32(&buf[22]));
    const uint16_t bpp = get_u16(&buf[28]);
    const uint32_t compression = get_u32(&buf[30]);
    if (bpp != 24 || compression != 0 || w <= 0 || h == 0)
        throw DataError("only 24-bit uncompressed BMP supported: " + path);
    const bool top_down = h < 0;
    const i64 height = top_down ? -h : h;
    const i64 row_bytes = (3 * static_cast<i64>(w) + 3) / 4 * 4;
    if (buf.size() < offset + static_cast<size_t>(row_bytes * height))
        throw DataError("truncated BMP: " + path);
    Image img;
    img.w = w;
    img.h = height;
    img.c = 3;
    img.px.resize(static_cast<size_t>(img.w * img.h * 3));
    for (i64 y = 0; y < height; ++y) {
        const i64 src_y = top_down ? y : height - 1 - y;
        const uint8_t* row = buf.data() + offset + src_y * row_bytes;
        for (i64 x = 0; x < w; ++x) {
            img.at(y, x, 2) = row[3 * x + 0] / 255.0;
            img.at(y, x, 1) = row[3 * x + 1] / 255.0;
            img.at(y, x, 0) = row[3 * x + 2] / 255.0;
        }
    }
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3) throw DataError("ppm writer supports 1 or 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    for (i64 y = 0; y < img.h; ++y)
        for (i64 x = 0; x < img.w; ++x)
            for (i64 ch = 0; ch < 3; ++ch) {
                uint8_t v = quantize(channel_or_gray(img, y, x, ch));
                f.write(reinterpret_cast<const char*>(&v), 1);
            }
}

Image read_ppm(const std::string& path) {
    auto buf = read_file(path);
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < buf.size()) {
            if (std::isspace(buf[pos])) {
                ++pos;
            } else if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < buf.size() && !std::isspace(buf[pos])) t.push_back(static_cast<char>(buf[pos++]));
        return t;
    };
    if (token() != "P6") throw DataError("not a binary PPM: " + path);
    const i64 w = std::stol(token()), h = std::stol(token()), maxval = std::stol(token());
    if (w <= 0 || h <= 0 || maxval != 255) throw DataError("unsupported PPM: " + path);
    ++pos;  // single whitespace after maxval
    if (buf.size() < pos + static_cast<size_t>(w * h * 3)) throw DataError("truncated PPM: " + path);
    Image img;
    img.w = w;
    img.h = h;
    img.c = 3;
    img.px.resize(static_cast<size_t>(w * h * 3));
    for (i64 i = 0; i < w * h * 3; ++i) img.px[static_cast<size_t>(i)] = buf[pos + static_cast<size_t>(i)] / 255.0;
    return img;
}

bool is_supported_image(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return false;
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".bmp" || ext == ".ppm";
}

Image read_image(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".bmp") return read_bmp(path);
    if (ext == ".ppm") return read_ppm(path);
    throw DataError("unsupported image format: " + path + " (expected .bmp or .ppm)");
}

}  // namespace imae::io
