#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "splicedet/core/image.hpp"

namespace splicedet::data {

/// Result of the aspect-preserving resize + zero-pad to a square target.
struct ResizedSample {
    core::ImageU8 image;               // target x target x C
    std::vector<core::MaskU8> masks;   // transformed identically (nearest)
    double scale = 1.0;                // applied to the longest side
    int pad_top = 0, pad_left = 0;
};

/// Scales the longest side to `target`, preserves aspect ratio, zero-pads to
/// a centered square. The inverse transform is recoverable from
/// (scale, pad_top, pad_left).
ResizedSample resize_and_pad(const core::ImageU8& image, const std::vector<core::MaskU8>& masks,
                             int target = 512);

// Coordinate maps between original-image space and padded-square space.
std::array<double, 4> transform_box(const std::array<double, 4>& box, double scale, int pad_top,
                                    int pad_left);
std::array<double, 4> inverse_transform_box(const std::array<double, 4>& box, double scale,
                                            int pad_top, int pad_left);

/// Deterministic train/val/test split with exact requested sizes.
struct DatasetSplit {
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::uint64_t seed = 0;
};

DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           const std::array<int, 3>& counts, std::uint64_t seed);

}  // namespace splicedet::data
