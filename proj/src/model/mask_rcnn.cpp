#include "splicedet/model/mask_rcnn.hpp"

#include <algorithm>
#include <cmath>

#include "splicedet/core/error.hpp"
#include "splicedet/kernels/elementwise.hpp"

namespace splicedet::model {

namespace {
constexpr std::array<int, 5> kStrides{4, 8, 16, 32, 64};

// Object probability from a 2-way logit pair, numerically stable.
double object_prob(const std::array<double, 2>& logits) {
    return 1.0 / (1.0 + std::exp(logits[0] - logits[1]));
}
}  // namespace

rpn::Box mask_bbox(const core::MaskU8& mask) {
    int min_x = mask.w, min_y = mask.h, max_x = -1, max_y = -1;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
    if (max_x < 0) return {0, 0, 0, 0};
    return {static_cast<double>(min_x), static_cast<double>(min_y), static_cast<double>(max_x + 1),
            static_cast<double>(max_y + 1)};
}

MaskRcnn::MaskRcnn(const config::RunConfig& cfg) : cfg_(cfg), init_rng_(cfg.seed ^ 0x5D1CEDE7ULL) {
    cfg_.validate();
    check(cfg_.backbone == "mobilenetv1", "model: only the mobilenetv1 backbone is implemented");

    backbone::BackboneConfig bb_cfg;
    bb_cfg.depth_multiplier = cfg_.depth_multiplier;
    backbone_ = std::make_unique<backbone::MobileNetV1>(bb_cfg, init_rng_, reg_);

    const std::array<int, 4> stage_channels = {backbone_->stage_channels(2), backbone_->stage_channels(3),
                                               backbone_->stage_channels(4), backbone_->stage_channels(5)};
    fpn_ = std::make_unique<backbone::Fpn>(stage_channels, cfg_.fpn_channels, init_rng_, reg_);
    rpn_head_ = std::make_unique<rpn::RpnHead>(cfg_.fpn_channels, cfg_.rpn_conv_channels,
                                               static_cast<int>(cfg_.rpn_anchor_ratios.size()),
                                               init_rng_, reg_);
    box_head_ = std::make_unique<roi::BoxHead>(cfg_.fpn_channels, 7, cfg_.box_head_dim,
                                               cfg_.num_classes, init_rng_, reg_);
    mask_head_ = std::make_unique<roi::MaskHead>(cfg_.fpn_channels, cfg_.mask_head_channels,
                                                 cfg_.num_classes, init_rng_, reg_);
    anchors_ = rpn::generate_anchors(level_shapes(), cfg_.rpn_anchor_scales, cfg_.rpn_anchor_ratios);
}

std::vector<rpn::LevelShape> MaskRcnn::level_shapes() const {
    const int s = cfg_.image_shape[0];
    std::vector<rpn::LevelShape> shapes;
    for (int stride : kStrides) shapes.push_back({s / stride, s / stride, stride});
    return shapes;
}

MaskRcnn::Features MaskRcnn::forward_features(const Tensor& image, bool training,
                                              backbone::MobileNetV1::Cache* bb_cache,
                                              backbone::Fpn::Cache* fpn_cache) const {
    check(image.ndim() == 3 && image.dim(0) == 3, "model: image tensor must be [3,S,S]");
    check(image.dim(1) == cfg_.image_shape[0] && image.dim(2) == cfg_.image_shape[1],
          "model: image size does not match IMAGE_SHAPE");
    Tensor x = image;
    x.reshape({1, 3, image.dim(1), image.dim(2)});
    Features f;
    // Training-mode BN mutates moving statistics, so the const_cast is limited
    // to the training path; inference is genuinely const.
    auto* self = const_cast<MaskRcnn*>(this);
    f.stages = training ? self->backbone_->forward(x, true, bb_cache, cfg_.train_bn_backbone)
                        : backbone_->forward(x, false, nullptr, cfg_.infer_bn_batch);
    const std::array<Tensor, 4> c_maps = {f.stages.c[1], f.stages.c[2], f.stages.c[3], f.stages.c[4]};
    f.pyramid = fpn_->forward(c_maps, fpn_cache);
    return f;
}

loss::LossBreakdown MaskRcnn::train_step(const TrainSample& sample, core::Rng& rng) {
    const int s = cfg_.image_shape[0];

    backbone::MobileNetV1::Cache bb_cache;
    backbone::Fpn::Cache fpn_cache;
    Features f = forward_features(sample.image, true, &bb_cache, &fpn_cache);

    rpn::RpnHead::Cache rpn_cache;
    const std::vector<Tensor> pyramid_vec(f.pyramid.p.begin(), f.pyramid.p.end());
    rpn::RpnHead::Output rpn_out = rpn_head_->forward(pyramid_vec, &rpn_cache);
    check(rpn_out.cls_logits.size() == anchors_.size(), "model: rpn output misaligned with anchors");

    // --- RPN losses over a sampled minibatch ---
    const rpn::AnchorLabels labels =
        rpn::match_anchors(anchors_, sample.gt_boxes, cfg_.rpn_pos_iou, cfg_.rpn_neg_iou);
    const std::vector<int> selected =
        rpn::sample_anchor_minibatch(labels, cfg_.rpn_batch, cfg_.rpn_pos_fraction, rng);

    std::vector<double> p_sel;
    std::vector<int> p_star;
    std::vector<std::array<double, 4>> t_sel, t_star;
    for (int idx : selected) {
        p_sel.push_back(object_prob(rpn_out.cls_logits[static_cast<size_t>(idx)]));
        const bool positive = labels.label[static_cast<size_t>(idx)] == rpn::AnchorLabel::positive;
        p_star.push_back(positive ? 1 : 0);
        t_sel.push_back(rpn_out.deltas[static_cast<size_t>(idx)]);
        if (positive) {
            const auto d = rpn::encode_box_deltas(anchors_.boxes[static_cast<size_t>(idx)],
                                                  sample.gt_boxes[static_cast<size_t>(
                                                      labels.matched_gt[static_cast<size_t>(idx)])]);
            t_star.push_back({d[0] / cfg_.delta_std[0], d[1] / cfg_.delta_std[1],
                              d[2] / cfg_.delta_std[2], d[3] / cfg_.delta_std[3]});
        } else {
            t_star.push_back({0, 0, 0, 0});
        }
    }
    loss::LossConfig loss_cfg;
    loss_cfg.lambda = cfg_.loss_lambda;
    loss_cfg.smooth_l1_beta = cfg_.smooth_l1_beta;
    const auto rl = loss::rpn_loss(p_sel, p_star, t_sel, t_star, loss_cfg);

    // Chain d(loss)/dp through the 2-way softmax into the logit pair.
    std::vector<std::array<double, 2>> d_cls(anchors_.size(), {0.0, 0.0});
    std::vector<std::array<double, 4>> d_deltas(anchors_.size(), {0.0, 0.0, 0.0, 0.0});
    for (size_t si = 0; si < selected.size(); ++si) {
        const size_t idx = static_cast<size_t>(selected[si]);
        const double p = p_sel[si];
        const double dp = rl.d_p[si] * p * (1.0 - p);
        d_cls[idx][0] = -dp;
        d_cls[idx][1] = dp;
        d_deltas[idx] = rl.d_t[si];
    }

    // --- Proposals (treated as constants for the gradient) ---
    std::vector<double> objectness(anchors_.size());
    for (size_t i = 0; i < anchors_.size(); ++i) objectness[i] = object_prob(rpn_out.cls_logits[i]);
    rpn::ProposalConfig pcfg;
    pcfg.pre_nms_topk = cfg_.pre_nms_topk_train;
    pcfg.post_nms_topk = cfg_.post_nms_topk_train;
    pcfg.nms_iou = cfg_.rpn_nms_iou;
    pcfg.image_h = s;
    pcfg.image_w = s;
    pcfg.delta_std = cfg_.delta_std;
    const auto proposals = rpn::propose(objectness, rpn_out.deltas, anchors_, pcfg);

    std::vector<rpn::Box> roi_boxes;
    for (const auto& p : proposals) roi_boxes.push_back(p.box);
    if (cfg_.train_add_gt_proposals)
        for (const auto& g : sample.gt_boxes) roi_boxes.push_back(g);

    roi::RoiSamplerConfig rcfg;
    rcfg.n = cfg_.roi_batch;
    rcfg.pos_fraction = cfg_.roi_pos_fraction;
    rcfg.fg_iou = cfg_.roi_fg_iou;
    rcfg.bg_iou_max = cfg_.roi_bg_iou_max;
    rcfg.mask_size = cfg_.mask_shape[0];
    rcfg.delta_std = cfg_.delta_std;
    const auto rois = roi::assign_and_sample_rois(roi_boxes, sample.gt_boxes, sample.gt_masks, rcfg, rng);

    double l_roi_cls = 0, l_roi_box = 0, l_mask = 0;
    std::array<Tensor, 5> d_pyramid;  // accumulated feature gradients

    if (!rois.empty()) {
        // --- Box head ---
        std::vector<rpn::Box> sampled_boxes;
        for (const auto& r : rois) sampled_boxes.push_back(r.proposal);
        roi::PyramidPool pooled7 = roi::roi_align_pyramid(f.pyramid.p, kStrides, sampled_boxes, 7,
                                                          cfg_.roi_sampling_ratio);
        roi::BoxHead::Cache bh_cache;
        roi::BoxHead::Output bh_out =
            box_head_->forward(pooled7.features, true, &bh_cache, cfg_.train_bn_heads);

        const int r_count = static_cast<int>(rois.size());
        const int k_classes = cfg_.num_classes;
        std::vector<std::vector<double>> logits(static_cast<size_t>(r_count));
        std::vector<int> targets(static_cast<size_t>(r_count));
        std::vector<std::vector<std::array<double, 4>>> deltas(static_cast<size_t>(r_count));
        std::vector<std::array<double, 4>> box_targets(static_cast<size_t>(r_count));
        for (int i = 0; i < r_count; ++i) {
            logits[static_cast<size_t>(i)].resize(static_cast<size_t>(k_classes));
            deltas[static_cast<size_t>(i)].resize(static_cast<size_t>(k_classes));
            for (int k = 0; k < k_classes; ++k) {
                logits[static_cast<size_t>(i)][static_cast<size_t>(k)] = bh_out.class_logits.at2(i, k);
                for (int j = 0; j < 4; ++j)
                    deltas[static_cast<size_t>(i)][static_cast<size_t>(k)][static_cast<size_t>(j)] =
                        bh_out.box_deltas.at2(i, k * 4 + j);
            }
            targets[static_cast<size_t>(i)] = rois[static_cast<size_t>(i)].label;
            box_targets[static_cast<size_t>(i)] = rois[static_cast<size_t>(i)].box_target;
        }
        const auto roi_l = loss::roi_losses(logits, targets, deltas, box_targets, cfg_.smooth_l1_beta);
        l_roi_cls = roi_l.l_cls;
        l_roi_box = roi_l.l_box;

        Tensor d_logits({r_count, k_classes});
        Tensor d_delta_t({r_count, k_classes * 4});
        for (int i = 0; i < r_count; ++i)
            for (int k = 0; k < k_classes; ++k) {
                d_logits.at2(i, k) = static_cast<float>(roi_l.d_logits[static_cast<size_t>(i)][static_cast<size_t>(k)]);
                for (int j = 0; j < 4; ++j)
                    d_delta_t.at2(i, k * 4 + j) = static_cast<float>(
                        roi_l.d_deltas[static_cast<size_t>(i)][static_cast<size_t>(k)][static_cast<size_t>(j)]);
            }
        Tensor d_pooled7 = box_head_->backward(d_logits, d_delta_t, bh_cache);
        roi::roi_align_pyramid_backward(d_pooled7, f.pyramid.p, kStrides, sampled_boxes,
                                        pooled7.level_of, cfg_.roi_sampling_ratio, d_pyramid);

        // --- Mask head over the foreground samples ---
        std::vector<rpn::Box> fg_boxes;
        std::vector<const roi::RoiSample*> fg_samples;
        for (const auto& r : rois)
            if (r.label == 1) {
                fg_boxes.push_back(r.proposal);
                fg_samples.push_back(&r);
            }
        if (!fg_boxes.empty()) {
            const int mask_s = cfg_.mask_shape[0];
            const int pooled_s = mask_s / 2;
            roi::PyramidPool pooled14 = roi::roi_align_pyramid(f.pyramid.p, kStrides, fg_boxes,
                                                               pooled_s, cfg_.roi_sampling_ratio);
            roi::MaskHead::Cache mh_cache;
            Tensor mask_logits =
                mask_head_->forward(pooled14.features, true, &mh_cache, cfg_.train_bn_heads);

            const int fg_count = static_cast<int>(fg_boxes.size());
            Tensor probs({fg_count, mask_s, mask_s});
            Tensor targets_t({fg_count, mask_s, mask_s});
            for (int i = 0; i < fg_count; ++i)
                for (int y = 0; y < mask_s; ++y)
                    for (int x = 0; x < mask_s; ++x) {
                        const float logit = mask_logits.at4(i, 1, y, x);  // spliced channel
                        probs.at3(i, y, x) = 1.0f / (1.0f + std::exp(-logit));
                        targets_t.at3(i, y, x) = fg_samples[static_cast<size_t>(i)]->mask_target.at2(y, x);
                    }
            const auto ml = loss::mask_loss(probs, targets_t);
            l_mask = ml.l_mask;

            Tensor d_mask_logits({fg_count, cfg_.num_classes, mask_s, mask_s});
            for (int i = 0; i < fg_count; ++i)
                for (int y = 0; y < mask_s; ++y)
                    for (int x = 0; x < mask_s; ++x) {
                        const float p = probs.at3(i, y, x);
                        d_mask_logits.at4(i, 1, y, x) = ml.d_probs.at3(i, y, x) * p * (1.0f - p);
                    }
            Tensor d_pooled14 = mask_head_->backward(d_mask_logits, mh_cache);
            roi::roi_align_pyramid_backward(d_pooled14, f.pyramid.p, kStrides, fg_boxes,
                                            pooled14.level_of, cfg_.roi_sampling_ratio, d_pyramid);
        }
    }

    // --- RPN head backward, merged with the ROI-branch feature gradients ---
    const std::vector<Tensor> d_rpn_pyramid = rpn_head_->backward(d_cls, d_deltas, rpn_cache);
    for (int li = 0; li < 5; ++li) {
        const Tensor& g = d_rpn_pyramid[static_cast<size_t>(li)];
        Tensor& acc = d_pyramid[static_cast<size_t>(li)];
        if (acc.empty()) acc = g;
        else
            for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
    }

    const std::array<Tensor, 4> d_c = fpn_->backward(d_pyramid, fpn_cache);
    backbone::StageOutputs d_stages;
    d_stages.c[1] = d_c[0];
    d_stages.c[2] = d_c[1];
    d_stages.c[3] = d_c[2];
    d_stages.c[4] = d_c[3];
    backbone_->backward(d_stages, bb_cache);

    return loss::total_loss(rl.l_cls, rl.l_box, l_roi_cls, l_roi_box, l_mask);
}

std::vector<roi::Detection> MaskRcnn::detect(const Tensor& image) const {
    const int s = cfg_.image_shape[0];
    Features f = forward_features(image, false, nullptr, nullptr);

    const std::vector<Tensor> pyramid_vec(f.pyramid.p.begin(), f.pyramid.p.end());
    rpn::RpnHead::Output rpn_out = rpn_head_->forward(pyramid_vec, nullptr);
    std::vector<double> objectness(anchors_.size());
    for (size_t i = 0; i < anchors_.size(); ++i) objectness[i] = object_prob(rpn_out.cls_logits[i]);

    rpn::ProposalConfig pcfg;
    pcfg.pre_nms_topk = cfg_.pre_nms_topk_eval;
    pcfg.post_nms_topk = cfg_.post_nms_topk_eval;
    pcfg.nms_iou = cfg_.rpn_nms_iou;
    pcfg.image_h = s;
    pcfg.image_w = s;
    pcfg.delta_std = cfg_.delta_std;
    const auto proposals = rpn::propose(objectness, rpn_out.deltas, anchors_, pcfg);
    if (proposals.empty()) return {};

    std::vector<rpn::Box> prop_boxes;
    for (const auto& p : proposals) prop_boxes.push_back(p.box);
    roi::PyramidPool pooled7 =
        roi::roi_align_pyramid(f.pyramid.p, kStrides, prop_boxes, 7, cfg_.roi_sampling_ratio);
    // Heads run with moving statistics at inference; the const_cast is safe.
    auto* box_head = const_cast<roi::BoxHead*>(box_head_.get());
    roi::BoxHead::Output bh_out = box_head->forward(pooled7.features, false, nullptr);

    struct Candidate {
        rpn::Box box;
        double score;
    };
    std::vector<Candidate> candidates;
    for (size_t i = 0; i < prop_boxes.size(); ++i) {
        // 2-class softmax; class 1 is "spliced".
        const double l0 = bh_out.class_logits.at2(static_cast<int>(i), 0);
        const double l1 = bh_out.class_logits.at2(static_cast<int>(i), 1);
        const double score = 1.0 / (1.0 + std::exp(l0 - l1));
        if (score < cfg_.detect_score_thresh) continue;
        std::array<double, 4> d;
        for (int j = 0; j < 4; ++j)
            d[static_cast<size_t>(j)] =
                bh_out.box_deltas.at2(static_cast<int>(i), 4 + j) * cfg_.delta_std[static_cast<size_t>(j)];
        rpn::Box refined = rpn::clip_box(rpn::decode_box_deltas(prop_boxes[i], d), s, s);
        if (refined.width() < 1.0 || refined.height() < 1.0) continue;
        candidates.push_back({refined, score});
    }
    if (candidates.empty()) return {};

    std::vector<rpn::Box> cand_boxes;
    std::vector<double> cand_scores;
    for (const auto& c : candidates) {
        cand_boxes.push_back(c.box);
        cand_scores.push_back(c.score);
    }
    const auto keep = rpn::nms(cand_boxes, cand_scores, cfg_.detect_nms_iou);

    std::vector<roi::Detection> detections;
    std::vector<rpn::Box> kept_boxes;
    for (int idx : keep) {
        if (static_cast<int>(detections.size()) >= cfg_.detect_max_dets) break;
        roi::Detection det;
        det.box = candidates[static_cast<size_t>(idx)].box;
        det.score = candidates[static_cast<size_t>(idx)].score;
        det.class_id = 1;
        detections.push_back(std::move(det));
        kept_boxes.push_back(candidates[static_cast<size_t>(idx)].box);
    }
    if (detections.empty()) return {};

    const int mask_s = cfg_.mask_shape[0];
    roi::PyramidPool pooled14 = roi::roi_align_pyramid(f.pyramid.p, kStrides, kept_boxes,
                                                       mask_s / 2, cfg_.roi_sampling_ratio);
    auto* mask_head = const_cast<roi::MaskHead*>(mask_head_.get());
    Tensor mask_logits = mask_head->forward(pooled14.features, false, nullptr);
    for (size_t i = 0; i < detections.size(); ++i) {
        Tensor m({mask_s, mask_s});
        for (int y = 0; y < mask_s; ++y)
            for (int x = 0; x < mask_s; ++x)
                m.at2(y, x) = 1.0f / (1.0f + std::exp(-mask_logits.at4(static_cast<int>(i), 1, y, x)));
        detections[i].image_mask = roi::paste_mask(m, detections[i].box, s, s, cfg_.mask_paste_thresh);
        detections[i].mask28 = std::move(m);
    }
    return detections;
}

}  // namespace splicedet::model
