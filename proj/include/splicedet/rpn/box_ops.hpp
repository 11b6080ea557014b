#pragma once

#include <array>
#include <vector>

namespace splicedet::rpn {

/// Axis-aligned box in pixel coordinates, x2 >= x1 and y2 >= y1.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool degenerate() const { return x2 <= x1 || y2 <= y1; }
};

/// Intersection over union; 0 for disjoint or degenerate boxes.
double iou(const Box& a, const Box& b);

Box clip_box(const Box& b, double height, double width);

/// (tx, ty, tw, th) parameterization between an anchor and a target box:
/// tx = (cx_t - cx_a) / w_a, tw = log(w_t / w_a), and the y analogues.
std::array<double, 4> encode_box_deltas(const Box& anchor, const Box& target);

/// Inverse of encode; exact round trip. log-space deltas are clamped at
/// +/- kMaxLogDelta to keep exp() sane on wild predictions.
Box decode_box_deltas(const Box& anchor, const std::array<double, 4>& deltas);

inline constexpr double kMaxLogDelta = 4.0;  // e^4 ~ 54x growth cap

/// Greedy NMS: repeatedly keep the highest-scoring remaining box and discard
/// boxes with IoU strictly greater than the threshold against it. Ties break
/// toward the lower index. Returns kept indices in score-descending order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_threshold);

}  // namespace splicedet::rpn
