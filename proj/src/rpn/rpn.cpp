#include "splicedet/rpn/rpn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"

namespace splicedet::rpn {

using core::Tensor;

AnchorSet generate_anchors(const std::vector<LevelShape>& levels, const std::vector<double>& scales,
                           const std::vector<double>& ratios) {
    if (scales.size() != levels.size())
        throw Error("generate_anchors: need one scale per pyramid level (" +
                    std::to_string(levels.size()) + " levels, " + std::to_string(scales.size()) +
                    " scales)");
    check(!ratios.empty(), "generate_anchors: ratios must be nonempty");
    AnchorSet set;
    for (size_t li = 0; li < levels.size(); ++li) {
        const auto& lv = levels[li];
        const double side = scales[li] * lv.stride;
        for (int y = 0; y < lv.h; ++y)
            for (int x = 0; x < lv.w; ++x) {
                const double cx = (x + 0.5) * lv.stride;
                const double cy = (y + 0.5) * lv.stride;
                for (double r : ratios) {
                    const double h = side * std::sqrt(r);
                    const double w = side / std::sqrt(r);
                    set.boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
                    set.level_of.push_back(static_cast<int>(li));
                    set.stride_of.push_back(lv.stride);
                }
            }
    }
    return set;
}

AnchorLabels match_anchors(const AnchorSet& anchors, const std::vector<Box>& gt_boxes,
                           double pos_iou, double neg_iou) {
    check(pos_iou > neg_iou, "match_anchors: pos_iou must exceed neg_iou");
    if (anchors.size() == 0) throw Error("match_anchors: empty anchor set");
    const int a_count = static_cast<int>(anchors.size());
    const int g_count = static_cast<int>(gt_boxes.size());
    AnchorLabels out;
    out.label.assign(anchors.size(), AnchorLabel::negative);
    out.matched_gt.assign(anchors.size(), -1);
    if (g_count == 0) return out;

    std::vector<double> best_iou(anchors.size(), 0.0);
    std::vector<int> best_gt(anchors.size(), -1);
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int a = 0; a < a_count; ++a) {
        double best = 0.0;
        int who = -1;
        for (int g = 0; g < g_count; ++g) {
            const double v = iou(anchors.boxes[static_cast<size_t>(a)], gt_boxes[static_cast<size_t>(g)]);
            if (v > best) {
                best = v;
                who = g;
            }
        }
        best_iou[static_cast<size_t>(a)] = best;
        best_gt[static_cast<size_t>(a)] = who;
    }
    for (int a = 0; a < a_count; ++a) {
        if (best_iou[static_cast<size_t>(a)] >= pos_iou) {
            out.label[static_cast<size_t>(a)] = AnchorLabel::positive;
            out.matched_gt[static_cast<size_t>(a)] = best_gt[static_cast<size_t>(a)];
        } else if (best_iou[static_cast<size_t>(a)] < neg_iou) {
            out.label[static_cast<size_t>(a)] = AnchorLabel::negative;
        } else {
            out.label[static_cast<size_t>(a)] = AnchorLabel::ignore;
        }
    }
    // Every GT with any overlap owns its argmax anchor (later GTs win ties on
    // a shared anchor; the argmax anchor tie-breaks to the lowest index).
    for (int g = 0; g < g_count; ++g) {
        double best = 0.0;
        int who = -1;
        for (int a = 0; a < a_count; ++a) {
            const double v = iou(anchors.boxes[static_cast<size_t>(a)], gt_boxes[static_cast<size_t>(g)]);
            if (v > best) {
                best = v;
                who = a;
            }
        }
        if (who >= 0) {
            out.label[static_cast<size_t>(who)] = AnchorLabel::positive;
            out.matched_gt[static_cast<size_t>(who)] = g;
        }
    }
    return out;
}

std::vector<int> sample_anchor_minibatch(const AnchorLabels& labels, int batch, double pos_fraction,
                                         core::Rng& rng) {
    check(pos_fraction > 0.0 && pos_fraction <= 1.0, "sample_anchor_minibatch: bad pos_fraction");
    check(batch > 0, "sample_anchor_minibatch: batch must be positive");
    std::vector<int> positives, negatives;
    for (size_t i = 0; i < labels.label.size(); ++i) {
        if (labels.label[i] == AnchorLabel::positive) positives.push_back(static_cast<int>(i));
        else if (labels.label[i] == AnchorLabel::negative) negatives.push_back(static_cast<int>(i));
    }
    rng.shuffle(positives);
    rng.shuffle(negatives);
    const int max_pos = static_cast<int>(batch * pos_fraction);
    const int n_pos = std::min<int>(static_cast<int>(positives.size()), max_pos);
    const int n_neg = std::min<int>(static_cast<int>(negatives.size()), batch - n_pos);
    std::vector<int> selected(positives.begin(), positives.begin() + n_pos);
    selected.insert(selected.end(), negatives.begin(), negatives.begin() + n_neg);
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<ScoredBox> propose(const std::vector<double>& objectness,
                               const std::vector<std::array<double, 4>>& deltas,
                               const AnchorSet& anchors, const ProposalConfig& cfg) {
    check(objectness.size() == anchors.size() && deltas.size() == anchors.size(),
          "propose: arrays must align with anchors");
    std::vector<ScoredBox> candidates;
    candidates.reserve(anchors.size());
    for (size_t i = 0; i < anchors.size(); ++i) {
        const std::array<double, 4> raw = {deltas[i][0] * cfg.delta_std[0],
                                           deltas[i][1] * cfg.delta_std[1],
                                           deltas[i][2] * cfg.delta_std[2],
                                           deltas[i][3] * cfg.delta_std[3]};
        Box b = clip_box(decode_box_deltas(anchors.boxes[i], raw), cfg.image_h, cfg.image_w);
        if (b.width() < cfg.min_size || b.height() < cfg.min_size) continue;
        candidates.push_back({b, objectness[i], static_cast<int>(i)});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    if (static_cast<int>(candidates.size()) > cfg.pre_nms_topk)
        candidates.resize(static_cast<size_t>(cfg.pre_nms_topk));

    std::vector<Box> boxes;
    std::vector<double> scores;
    for (const auto& c : candidates) {
        boxes.push_back(c.box);
        scores.push_back(c.score);
    }
    const std::vector<int> keep = nms(boxes, scores, cfg.nms_iou);
    std::vector<ScoredBox> out;
    for (int idx : keep) {
        out.push_back(candidates[static_cast<size_t>(idx)]);
        if (static_cast<int>(out.size()) >= cfg.post_nms_topk) break;
    }
    return out;
}

RpnHead::RpnHead(int in_channels, int mid_channels, int anchors_per_loc, core::Rng& rng,
                 nn::ParamRegistry& reg, const std::string& prefix)
    : anchors_per_loc_(anchors_per_loc) {
    conv_.build(prefix + ".conv", in_channels, mid_channels, 3, 1, 1, /*bias=*/true, rng, reg);
    // Prediction layers start near zero so early box gradients cannot blow
    // up the shared trunk.
    cls_.build(prefix + ".cls", mid_channels, 2 * anchors_per_loc, 1, 1, 0, /*bias=*/true, rng, reg,
               0.01);
    box_.build(prefix + ".box", mid_channels, 4 * anchors_per_loc, 1, 1, 0, /*bias=*/true, rng, reg,
               0.01);
}

RpnHead::Output RpnHead::forward(const std::vector<Tensor>& pyramid, Cache* cache) const {
    Output out;
    if (cache) cache->levels.resize(pyramid.size());
    for (size_t li = 0; li < pyramid.size(); ++li) {
        auto* lc = cache ? &cache->levels[li] : nullptr;
        Tensor t = conv_.forward(pyramid[li], lc ? &lc->conv : nullptr);
        if (lc) lc->pre_act = t;
        Tensor act;
        kernels::relu_forward(t, act);
        const Tensor cls_map = cls_.forward(act, lc ? &lc->cls : nullptr);
        const Tensor box_map = box_.forward(act, lc ? &lc->box : nullptr);
        const int h = cls_map.dim(2), w = cls_map.dim(3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int a = 0; a < anchors_per_loc_; ++a) {
                    out.cls_logits.push_back({static_cast<double>(cls_map.at4(0, a * 2 + 0, y, x)),
                                              static_cast<double>(cls_map.at4(0, a * 2 + 1, y, x))});
                    out.deltas.push_back({static_cast<double>(box_map.at4(0, a * 4 + 0, y, x)),
                                          static_cast<double>(box_map.at4(0, a * 4 + 1, y, x)),
                                          static_cast<double>(box_map.at4(0, a * 4 + 2, y, x)),
                                          static_cast<double>(box_map.at4(0, a * 4 + 3, y, x))});
                }
        out.cls_maps.push_back(cls_map);
        out.box_maps.push_back(box_map);
    }
    return out;
}

std::vector<Tensor> RpnHead::backward(const std::vector<std::array<double, 2>>& d_cls,
                                      const std::vector<std::array<double, 4>>& d_deltas,
                                      const Cache& cache) {
    std::vector<Tensor> d_pyramid;
    size_t offset = 0;
    for (size_t li = 0; li < cache.levels.size(); ++li) {
        const auto& lc = cache.levels[li];
        const int h = lc.pre_act.dim(2), w = lc.pre_act.dim(3);
        Tensor d_cls_map({1, 2 * anchors_per_loc_, h, w});
        Tensor d_box_map({1, 4 * anchors_per_loc_, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int a = 0; a < anchors_per_loc_; ++a) {
                    const size_t idx = offset + (static_cast<size_t>(y) * w + x) * anchors_per_loc_ + a;
                    d_cls_map.at4(0, a * 2 + 0, y, x) = static_cast<float>(d_cls[idx][0]);
                    d_cls_map.at4(0, a * 2 + 1, y, x) = static_cast<float>(d_cls[idx][1]);
                    for (int k = 0; k < 4; ++k)
                        d_box_map.at4(0, a * 4 + k, y, x) = static_cast<float>(d_deltas[idx][static_cast<size_t>(k)]);
                }
        offset += static_cast<size_t>(h) * w * anchors_per_loc_;

        Tensor d_act = cls_.backward(d_cls_map, lc.cls);
        {
            Tensor d_box_act = box_.backward(d_box_map, lc.box);
            for (std::int64_t k = 0; k < d_act.numel(); ++k) d_act[k] += d_box_act[k];
        }
        Tensor d_pre(lc.pre_act.shape());
        kernels::relu_backward(d_act, lc.pre_act, d_pre);
        d_pyramid.push_back(conv_.backward(d_pre, lc.conv));
    }
    return d_pyramid;
}

}  // namespace splicedet::rpn
