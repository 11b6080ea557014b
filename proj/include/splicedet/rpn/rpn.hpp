#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "splicedet/core/rng.hpp"
#include "splicedet/nn/layers.hpp"
#include "splicedet/rpn/box_ops.hpp"

namespace splicedet::rpn {

struct LevelShape {
    int h = 0, w = 0, stride = 0;
};

/// Dense anchors over the pyramid, level-major / row-major / ratio-minor.
struct AnchorSet {
    std::vector<Box> boxes;
    std::vector<int> level_of;   // pyramid level index (0 = P2)
    std::vector<int> stride_of;  // feature stride in pixels

    size_t size() const { return boxes.size(); }
};

/// One scale per level. At each grid cell of level l, |ratios| anchors of
/// area (scale_l * stride_l)^2 with aspect ratio h/w in ratios, centered at
/// ((x + 0.5) * stride, (y + 0.5) * stride).
AnchorSet generate_anchors(const std::vector<LevelShape>& levels, const std::vector<double>& scales,
                           const std::vector<double>& ratios);

enum class AnchorLabel : std::uint8_t { negative = 0, positive = 1, ignore = 2 };

struct AnchorLabels {
    std::vector<AnchorLabel> label;
    std::vector<int> matched_gt;  // -1 for non-positives
};

/// Positive iff max IoU >= pos_iou, or the anchor is some GT's argmax (every
/// GT with any overlap owns at least one positive). Negative iff max IoU <
/// neg_iou. Everything else is ignored.
AnchorLabels match_anchors(const AnchorSet& anchors, const std::vector<Box>& gt_boxes,
                           double pos_iou, double neg_iou);

/// Up to `batch` anchor indices, positives capped at batch * pos_fraction,
/// the remainder negatives. Deterministic for a given rng state; the returned
/// indices are sorted ascending.
std::vector<int> sample_anchor_minibatch(const AnchorLabels& labels, int batch,
                                         double pos_fraction, core::Rng& rng);

struct ProposalConfig {
    int pre_nms_topk = 2000;
    int post_nms_topk = 512;
    double nms_iou = 0.7;
    double min_size = 1.0;  // proposals thinner than this are dropped
    double image_h = 0, image_w = 0;
    std::array<double, 4> delta_std{0.1, 0.1, 0.2, 0.2};
};

struct ScoredBox {
    Box box;
    double score = 0;
    int anchor_index = -1;
};

/// Decode deltas (network outputs are divided by delta_std), clip, drop
/// degenerate boxes, take top-K by objectness, NMS, return top-M.
std::vector<ScoredBox> propose(const std::vector<double>& objectness,
                               const std::vector<std::array<double, 4>>& deltas,
                               const AnchorSet& anchors, const ProposalConfig& cfg);

/// Shared 3x3 conv + ReLU, then 1x1 heads for 2-way objectness logits and 4
/// box deltas per anchor. Applied to every pyramid level with shared weights.
class RpnHead {
public:
    RpnHead(int in_channels, int mid_channels, int anchors_per_loc, core::Rng& rng,
            nn::ParamRegistry& reg, const std::string& prefix = "rpn");

    struct LevelCache {
        nn::Conv2d::Cache conv;
        core::Tensor pre_act;
        nn::Conv2d::Cache cls;
        nn::Conv2d::Cache box;
    };
    struct Cache {
        std::vector<LevelCache> levels;
    };

    struct Output {
        // Flattened per-anchor arrays aligned with generate_anchors ordering.
        std::vector<std::array<double, 2>> cls_logits;
        std::vector<std::array<double, 4>> deltas;
        // Raw per-level maps, kept for backward.
        std::vector<core::Tensor> cls_maps;
        std::vector<core::Tensor> box_maps;
    };

    Output forward(const std::vector<core::Tensor>& pyramid, Cache* cache) const;

    /// d_cls / d_deltas are per-anchor gradients aligned with the flattened
    /// ordering. Returns per-level feature gradients.
    std::vector<core::Tensor> backward(const std::vector<std::array<double, 2>>& d_cls,
                                       const std::vector<std::array<double, 4>>& d_deltas,
                                       const Cache& cache);

    int anchors_per_loc() const { return anchors_per_loc_; }

private:
    nn::Conv2d conv_, cls_, box_;
    int anchors_per_loc_ = 3;
};

}  // namespace splicedet::rpn
