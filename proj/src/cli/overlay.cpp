#include "splicedet/cli/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace splicedet::cli {

namespace {

// Detection colors cycle through this palette.
constexpr std::array<std::uint8_t, 3> kColors[] = {
    {255, 64, 64}, {64, 160, 255}, {64, 220, 120}, {255, 180, 40}, {200, 90, 255}, {64, 220, 220},
};

// 5x7 glyphs, row-major bits, MSB = leftmost column.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
        {'%', {0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13}},
        {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
        {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
        {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
        {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
        {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
        {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
        {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x13, 0x0D}},
    };
    return glyphs;
}

void set_px(core::ImageU8& img, int x, int y, const std::array<std::uint8_t, 3>& color) {
    if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
    for (int ch = 0; ch < img.c; ++ch) img.at(y, x, ch) = color[static_cast<size_t>(ch)];
}

}  // namespace

void draw_text(core::ImageU8& image, int x, int y, const std::string& text,
               const std::array<std::uint8_t, 3>& color) {
    int cx = x;
    for (char c : text) {
        const auto it = font().find(c);
        if (it != font().end()) {
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (it->second[static_cast<size_t>(row)] & (1 << (4 - col)))
                        set_px(image, cx + col, y + row, color);
        }
        cx += 6;
    }
}

core::ImageU8 render_overlay(const core::ImageU8& image, const std::vector<roi::Detection>& dets,
                             const std::vector<double>& region_percentages,
                             const OverlayOptions& opts) {
    core::ImageU8 out = image;
    const double a = opts.mask_alpha;

    if (opts.draw_masks) {
        for (size_t d = 0; d < dets.size(); ++d) {
            const auto& color = kColors[d % std::size(kColors)];
            const auto& mask = dets[d].image_mask;
            for (int y = 0; y < std::min(mask.h, out.h); ++y)
                for (int x = 0; x < std::min(mask.w, out.w); ++x) {
                    if (!mask.at(y, x)) continue;
                    for (int ch = 0; ch < out.c; ++ch) {
                        const double blended = (1.0 - a) * out.at(y, x, ch) + a * color[static_cast<size_t>(ch)];
                        out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(blended));
                    }
                }
        }
    }
    if (opts.draw_boxes) {
        for (size_t d = 0; d < dets.size(); ++d) {
            const auto& color = kColors[d % std::size(kColors)];
            const auto& b = dets[d].box;
            const int x1 = static_cast<int>(std::lround(b.x1)), y1 = static_cast<int>(std::lround(b.y1));
            const int x2 = static_cast<int>(std::lround(b.x2)) - 1, y2 = static_cast<int>(std::lround(b.y2)) - 1;
            for (int t = 0; t < 2; ++t) {
                for (int x = x1; x <= x2; ++x) {
                    set_px(out, x, y1 + t, color);
                    set_px(out, x, y2 - t, color);
                }
                for (int y = y1; y <= y2; ++y) {
                    set_px(out, x1 + t, y, color);
                    set_px(out, x2 - t, y, color);
                }
            }
        }
    }
    if (opts.draw_captions) {
        for (size_t d = 0; d < dets.size(); ++d) {
            const auto& b = dets[d].box;
            char caption[64];
            const double pct = d < region_percentages.size() ? region_percentages[d] : 0.0;
            std::snprintf(caption, sizeof(caption), "spliced p=%.2f (%.1f%%)", dets[d].score, pct);
            const int tx = std::max(0, static_cast<int>(std::lround(b.x1)));
            const int ty = std::max(0, static_cast<int>(std::lround(b.y1)) - 9);
            draw_text(out, tx + 2, ty, caption, {255, 255, 255});
        }
    }
    return out;
}

}  // namespace splicedet::cli
