#include "splicedet/rpn/box_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splicedet/core/error.hpp"

namespace splicedet::rpn {

double iou(const Box& a, const Box& b) {
    if (a.degenerate() || b.degenerate()) return 0.0;
    const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
    const double iw = ix2 - ix1, ih = iy2 - iy1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

Box clip_box(const Box& b, double height, double width) {
    Box out;
    out.x1 = std::clamp(b.x1, 0.0, width);
    out.y1 = std::clamp(b.y1, 0.0, height);
    out.x2 = std::clamp(b.x2, 0.0, width);
    out.y2 = std::clamp(b.y2, 0.0, height);
    return out;
}

std::array<double, 4> encode_box_deltas(const Box& anchor, const Box& target) {
    if (anchor.width() <= 0.0 || anchor.height() <= 0.0)
        throw ShapeError("encode_box_deltas: zero-size anchor");
    const double wa = anchor.width(), ha = anchor.height();
    return {(target.cx() - anchor.cx()) / wa, (target.cy() - anchor.cy()) / ha,
            std::log(target.width() / wa), std::log(target.height() / ha)};
}

Box decode_box_deltas(const Box& anchor, const std::array<double, 4>& deltas) {
    if (anchor.width() <= 0.0 || anchor.height() <= 0.0)
        throw ShapeError("decode_box_deltas: zero-size anchor");
    const double wa = anchor.width(), ha = anchor.height();
    const double cx = anchor.cx() + deltas[0] * wa;
    const double cy = anchor.cy() + deltas[1] * ha;
    const double w = wa * std::exp(std::clamp(deltas[2], -kMaxLogDelta, kMaxLogDelta));
    const double h = ha * std::exp(std::clamp(deltas[3], -kMaxLogDelta, kMaxLogDelta));
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_threshold) {
    check(boxes.size() == scores.size(), "nms: boxes/scores size mismatch");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
    std::vector<char> suppressed(boxes.size(), 0);
    std::vector<int> keep;
    for (size_t i = 0; i < order.size(); ++i) {
        const int idx = order[i];
        if (suppressed[static_cast<size_t>(idx)]) continue;
        keep.push_back(idx);
        for (size_t j = i + 1; j < order.size(); ++j) {
            const int jdx = order[j];
            if (suppressed[static_cast<size_t>(jdx)]) continue;
            if (iou(boxes[static_cast<size_t>(idx)], boxes[static_cast<size_t>(jdx)]) > iou_threshold)
                suppressed[static_cast<size_t>(jdx)] = 1;
        }
    }
    return keep;
}

}  // namespace splicedet::rpn
