#include "splicedet/data/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "splicedet/core/error.hpp"
#include "splicedet/core/rng.hpp"

namespace splicedet::data {

ResizedSample resize_and_pad(const core::ImageU8& image, const std::vector<core::MaskU8>& masks,
                             int target) {
    check(target > 0, "resize_and_pad: target must be positive");
    check(!image.empty(), "resize_and_pad: empty image");
    const int long_side = std::max(image.h, image.w);
    const double scale = static_cast<double>(target) / long_side;
    // The longest side lands exactly on target; the other side rounds.
    int new_h, new_w;
    if (image.h >= image.w) {
        new_h = target;
        new_w = std::max(1, static_cast<int>(std::lround(image.w * scale)));
    } else {
        new_w = target;
        new_h = std::max(1, static_cast<int>(std::lround(image.h * scale)));
    }
    ResizedSample out;
    out.scale = scale;
    out.pad_top = (target - new_h) / 2;
    out.pad_left = (target - new_w) / 2;

    const core::ImageU8 resized =
        (new_h == image.h && new_w == image.w) ? image : core::resize_bilinear(image, new_h, new_w);
    out.image = core::ImageU8(target, target, image.c);
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int ch = 0; ch < image.c; ++ch)
                out.image.at(y + out.pad_top, x + out.pad_left, ch) = resized.at(y, x, ch);

    for (const auto& m : masks) {
        check(m.h == image.h && m.w == image.w, "resize_and_pad: mask size mismatch");
        const core::MaskU8 rm =
            (new_h == m.h && new_w == m.w) ? m : core::resize_nearest(m, new_h, new_w);
        core::MaskU8 padded(target, target);
        for (int y = 0; y < new_h; ++y)
            for (int x = 0; x < new_w; ++x)
                padded.at(y + out.pad_top, x + out.pad_left) = rm.at(y, x);
        out.masks.push_back(std::move(padded));
    }
    return out;
}

std::array<double, 4> transform_box(const std::array<double, 4>& box, double scale, int pad_top,
                                    int pad_left) {
    return {box[0] * scale + pad_left, box[1] * scale + pad_top, box[2] * scale + pad_left,
            box[3] * scale + pad_top};
}

std::array<double, 4> inverse_transform_box(const std::array<double, 4>& box, double scale,
                                            int pad_top, int pad_left) {
    return {(box[0] - pad_left) / scale, (box[1] - pad_top) / scale, (box[2] - pad_left) / scale,
            (box[3] - pad_top) / scale};
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, const std::array<int, 3>& counts,
                           std::uint64_t seed) {
    const long total = static_cast<long>(counts[0]) + counts[1] + counts[2];
    check(counts[0] >= 0 && counts[1] >= 0 && counts[2] >= 0, "split_dataset: negative count");
    if (total > static_cast<long>(ids.size()))
        throw Error("split_dataset: requested " + std::to_string(total) + " ids but only " +
                    std::to_string(ids.size()) + " available");
    std::vector<std::string> shuffled = ids;
    core::Rng rng(seed);
    rng.shuffle(shuffled);
    DatasetSplit split;
    split.seed = seed;
    auto it = shuffled.begin();
    split.train_ids.assign(it, it + counts[0]);
    it += counts[0];
    split.val_ids.assign(it, it + counts[1]);
    it += counts[1];
    split.test_ids.assign(it, it + counts[2]);
    return split;
}

}  // namespace splicedet::data
