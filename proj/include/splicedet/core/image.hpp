#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splicedet/core/tensor.hpp"

namespace splicedet::core {

/// Interleaved 8-bit image, row-major, c = 1 (gray) or 3 (RGB).
struct ImageU8 {
    int h = 0, w = 0, c = 0;
    std::vector<std::uint8_t> px;

    ImageU8() = default;
    ImageU8(int height, int width, int channels, std::uint8_t fill = 0)
        : h(height), w(width), c(channels),
          px(static_cast<size_t>(height) * width * channels, fill) {}

    std::uint8_t& at(int y, int x, int ch) {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    std::uint8_t at(int y, int x, int ch) const {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    bool empty() const { return px.empty(); }
};

/// Binary mask, 0/1 per pixel.
struct MaskU8 {
    int h = 0, w = 0;
    std::vector<std::uint8_t> px;

    MaskU8() = default;
    MaskU8(int height, int width, std::uint8_t fill = 0)
        : h(height), w(width), px(static_cast<size_t>(height) * width, fill) {}

    std::uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
    std::int64_t area() const {
        std::int64_t n = 0;
        for (auto v : px) n += v ? 1 : 0;
        return n;
    }
    bool empty() const { return px.empty(); }
};

// PNG (8-bit gray / RGB / RGBA / gray+alpha; alpha is dropped on read).
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// Masks round-trip as single-channel PNG with 0 = authentic, 255 = spliced.
MaskU8 read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const MaskU8& mask);

// PPM (P6) / PGM (P5).
ImageU8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageU8& img);

/// Reads any supported format by extension (.png/.ppm/.pgm).
ImageU8 read_image(const std::string& path);

/// Header-only dimension probe; also understands JPEG (SOF markers), so MISD
/// annotations can be rasterized without a JPEG pixel decoder.
bool read_image_size(const std::string& path, int& h, int& w);

// Conversions between 8-bit images and [C,H,W] float tensors in [0,1].
Tensor to_chw_float(const ImageU8& img);
ImageU8 to_image_u8(const Tensor& chw);

// Bilinear resize for images, nearest for masks.
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);
MaskU8 resize_nearest(const MaskU8& mask, int out_h, int out_w);

}  // namespace splicedet::core
