#pragma once

#include <string>
#include <vector>

#include "splicedet/core/image.hpp"
#include "splicedet/roi/roi_heads.hpp"

namespace splicedet::cli {

struct OverlayOptions {
    bool draw_masks = true;
    bool draw_boxes = true;
    bool draw_captions = true;
    double mask_alpha = 0.5;
};

/// Detection overlay: translucent per-detection mask fill, 2 px solid box
/// border, and a "spliced p=0.87 (4.2%)" caption above each box.
core::ImageU8 render_overlay(const core::ImageU8& image, const std::vector<roi::Detection>& dets,
                             const std::vector<double>& region_percentages,
                             const OverlayOptions& opts = {});

/// 5x7 bitmap text, used by the caption renderer (exposed for tests).
void draw_text(core::ImageU8& image, int x, int y, const std::string& text,
               const std::array<std::uint8_t, 3>& color);

}  // namespace splicedet::cli
