#include "splicedet/roi/roi_heads.hpp"

#include <algorithm>
#include <cmath>

#include "splicedet/core/error.hpp"
#include "splicedet/kernels/roi_align.hpp"

namespace splicedet::roi {

int level_for_box(const rpn::Box& box, int canonical_level, double canonical_size) {
    const double size = std::sqrt(std::max(box.area(), 1e-9));
    const int k = static_cast<int>(
        std::floor(canonical_level + std::log2(size / canonical_size)));
    return std::clamp(k - 2, 0, 3);  // P2..P5 as indices 0..3
}

PyramidPool roi_align_pyramid(const std::array<Tensor, 5>& pyramid,
                              const std::array<int, 5>& strides, const std::vector<rpn::Box>& boxes,
                              int out_size, int sampling_ratio) {
    PyramidPool pool;
    const int r = static_cast<int>(boxes.size());
    const int c = pyramid[0].dim(1);
    pool.features = Tensor({r, c, out_size, out_size});
    pool.level_of.resize(boxes.size());
    for (size_t i = 0; i < boxes.size(); ++i) pool.level_of[i] = level_for_box(boxes[i]);

    for (int level = 0; level < 4; ++level) {
        std::vector<std::array<float, 4>> level_rois;
        std::vector<int> owners;
        for (size_t i = 0; i < boxes.size(); ++i) {
            if (pool.level_of[i] != level) continue;
            level_rois.push_back({static_cast<float>(boxes[i].x1), static_cast<float>(boxes[i].y1),
                                  static_cast<float>(boxes[i].x2), static_cast<float>(boxes[i].y2)});
            owners.push_back(static_cast<int>(i));
        }
        if (level_rois.empty()) continue;
        // Kernel wants [C,H,W]; pyramid maps are [1,C,H,W].
        Tensor feat = pyramid[static_cast<size_t>(level)];
        feat.reshape({feat.dim(1), feat.dim(2), feat.dim(3)});
        Tensor out;
        kernels::roi_align_forward(feat, level_rois, 1.0f / static_cast<float>(strides[static_cast<size_t>(level)]),
                                   out_size, out_size, sampling_ratio, out);
        for (size_t k = 0; k < owners.size(); ++k) {
            const std::int64_t dst = pool.features.idx4(owners[k], 0, 0, 0);
            const std::int64_t src = out.idx4(static_cast<int>(k), 0, 0, 0);
            const std::int64_t count = static_cast<std::int64_t>(c) * out_size * out_size;
            for (std::int64_t j = 0; j < count; ++j) pool.features[dst + j] = out[src + j];
        }
    }
    return pool;
}

void roi_align_pyramid_backward(const Tensor& d_pooled, const std::array<Tensor, 5>& pyramid,
                                const std::array<int, 5>& strides,
                                const std::vector<rpn::Box>& boxes,
                                const std::vector<int>& level_of, int sampling_ratio,
                                std::array<Tensor, 5>& d_pyramid) {
    const int c = pyramid[0].dim(1);
    const int out_size = d_pooled.dim(2);
    for (int level = 0; level < 4; ++level) {
        std::vector<std::array<float, 4>> level_rois;
        std::vector<int> owners;
        for (size_t i = 0; i < boxes.size(); ++i) {
            if (level_of[i] != level) continue;
            level_rois.push_back({static_cast<float>(boxes[i].x1), static_cast<float>(boxes[i].y1),
                                  static_cast<float>(boxes[i].x2), static_cast<float>(boxes[i].y2)});
            owners.push_back(static_cast<int>(i));
        }
        if (level_rois.empty()) continue;
        Tensor feat = pyramid[static_cast<size_t>(level)];
        feat.reshape({feat.dim(1), feat.dim(2), feat.dim(3)});
        Tensor d_out({static_cast<int>(owners.size()), c, out_size, out_size});
        for (size_t k = 0; k < owners.size(); ++k) {
            const std::int64_t src = d_pooled.idx4(owners[k], 0, 0, 0);
            const std::int64_t dst = d_out.idx4(static_cast<int>(k), 0, 0, 0);
            const std::int64_t count = static_cast<std::int64_t>(c) * out_size * out_size;
            for (std::int64_t j = 0; j < count; ++j) d_out[dst + j] = d_pooled[src + j];
        }
        if (d_pyramid[static_cast<size_t>(level)].empty())
            d_pyramid[static_cast<size_t>(level)] = Tensor(pyramid[static_cast<size_t>(level)].shape());
        Tensor d_feat = d_pyramid[static_cast<size_t>(level)];
        d_feat.reshape({c, feat.dim(1), feat.dim(2)});
        std::vector<std::array<float, 4>>* no_dboxes = nullptr;
        kernels::roi_align_backward(d_out, level_rois,
                                    1.0f / static_cast<float>(strides[static_cast<size_t>(level)]), out_size,
                                    out_size, sampling_ratio, feat, d_feat, no_dboxes);
        d_feat.reshape(pyramid[static_cast<size_t>(level)].shape());
        d_pyramid[static_cast<size_t>(level)] = std::move(d_feat);
    }
}

Tensor crop_mask_to_box(const core::MaskU8& mask, const rpn::Box& box, int size) {
    check(size >= 1, "crop_mask_to_box: bad size");
    check(!box.degenerate(), "crop_mask_to_box: degenerate box");
    Tensor out({size, size});
    const double bw = box.width(), bh = box.height();
    for (int i = 0; i < size; ++i) {
        const double fy = box.y1 + (i + 0.5) / size * bh;
        const int sy = std::clamp(static_cast<int>(std::floor(fy)), 0, mask.h - 1);
        for (int j = 0; j < size; ++j) {
            const double fx = box.x1 + (j + 0.5) / size * bw;
            const int sx = std::clamp(static_cast<int>(std::floor(fx)), 0, mask.w - 1);
            out.at2(i, j) = static_cast<float>(mask.at(sy, sx));
        }
    }
    return out;
}

std::vector<RoiSample> assign_and_sample_rois(const std::vector<rpn::Box>& proposals,
                                              const std::vector<rpn::Box>& gt_boxes,
                                              const std::vector<core::MaskU8>& gt_masks,
                                              const RoiSamplerConfig& cfg, core::Rng& rng) {
    check(cfg.n >= 4, "assign_and_sample_rois: n must be >= 4");
    check(gt_boxes.size() == gt_masks.size(), "assign_and_sample_rois: gt boxes/masks mismatch");
    if (proposals.empty()) return {};  // training step skipped upstream

    const double bg_ceiling = cfg.bg_iou_max < 0.0 ? cfg.fg_iou : std::min(cfg.bg_iou_max, cfg.fg_iou);
    std::vector<int> fg_idx, bg_idx;
    std::vector<int> matched(proposals.size(), -1);
    for (size_t i = 0; i < proposals.size(); ++i) {
        double best = 0.0;
        int who = -1;
        for (size_t g = 0; g < gt_boxes.size(); ++g) {
            const double v = rpn::iou(proposals[i], gt_boxes[g]);
            if (v > best) {
                best = v;
                who = static_cast<int>(g);
            }
        }
        if (who >= 0 && best >= cfg.fg_iou) {
            matched[i] = who;
            fg_idx.push_back(static_cast<int>(i));
        } else if (best < bg_ceiling) {
            bg_idx.push_back(static_cast<int>(i));
        }
    }
    rng.shuffle(fg_idx);
    rng.shuffle(bg_idx);
    const int max_fg = static_cast<int>(cfg.n * cfg.pos_fraction);
    const int n_fg = std::min<int>(static_cast<int>(fg_idx.size()), max_fg);
    const int n_bg = std::min<int>(static_cast<int>(bg_idx.size()), cfg.n - n_fg);

    std::vector<int> chosen(fg_idx.begin(), fg_idx.begin() + n_fg);
    chosen.insert(chosen.end(), bg_idx.begin(), bg_idx.begin() + n_bg);
    std::sort(chosen.begin(), chosen.end());

    std::vector<RoiSample> samples;
    samples.reserve(chosen.size());
    for (int idx : chosen) {
        RoiSample s;
        s.proposal = proposals[static_cast<size_t>(idx)];
        const int g = matched[static_cast<size_t>(idx)];
        if (g >= 0) {
            s.label = 1;
            s.matched_gt = g;
            const auto deltas = rpn::encode_box_deltas(s.proposal, gt_boxes[static_cast<size_t>(g)]);
            for (size_t k = 0; k < 4; ++k) s.box_target[k] = deltas[k] / cfg.delta_std[k];
            s.mask_target = crop_mask_to_box(gt_masks[static_cast<size_t>(g)], s.proposal, cfg.mask_size);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

BoxHead::BoxHead(int in_channels, int pool_size, int fc_dim, int num_classes, core::Rng& rng,
                 nn::ParamRegistry& reg, const std::string& prefix)
    : num_classes_(num_classes), fc_dim_(fc_dim) {
    fc1_.build(prefix + ".fc1", in_channels * pool_size * pool_size, fc_dim, rng, reg);
    bn1_.build(prefix + ".fc1", fc_dim, reg);
    fc2_.build(prefix + ".fc2", fc_dim, fc_dim, rng, reg);
    bn2_.build(prefix + ".fc2", fc_dim, reg);
    cls_.build(prefix + ".cls", fc_dim, num_classes, rng, reg, 0.01);
    box_.build(prefix + ".delta", fc_dim, num_classes * 4, rng, reg, 0.001);
}

BoxHead::Output BoxHead::forward(const Tensor& pooled, bool training, Cache* cache,
                                 bool bn_batch_stats) {
    check(pooled.ndim() == 4, "box head: pooled input must be [R,C,s,s]");
    const int r = pooled.dim(0);
    Tensor flat = pooled;
    flat.reshape({r, pooled.dim(1) * pooled.dim(2) * pooled.dim(3)});
    if (cache) {
        cache->pooled_shape = pooled.shape();
        cache->bn_batch_stats = bn_batch_stats;
    }
    const bool live_bn = training && bn_batch_stats;

    Tensor h = fc1_.forward(flat, cache ? &cache->fc1 : nullptr);
    h = live_bn ? bn1_.forward(h, r, fc_dim_, 1, true, cache ? &cache->bn1 : nullptr)
                : bn1_.forward_frozen(h, r, fc_dim_, 1, cache ? &cache->fbn1 : nullptr);
    if (cache) cache->pre1 = h;
    {
        Tensor act;
        kernels::relu_forward(h, act);
        h = std::move(act);
    }
    h = fc2_.forward(h, cache ? &cache->fc2 : nullptr);
    h = live_bn ? bn2_.forward(h, r, fc_dim_, 1, true, cache ? &cache->bn2 : nullptr)
                : bn2_.forward_frozen(h, r, fc_dim_, 1, cache ? &cache->fbn2 : nullptr);
    if (cache) cache->pre2 = h;
    {
        Tensor act;
        kernels::relu_forward(h, act);
        h = std::move(act);
    }
    Output out;
    out.class_logits = cls_.forward(h, cache ? &cache->cls : nullptr);
    out.box_deltas = box_.forward(h, cache ? &cache->box : nullptr);
    return out;
}

Tensor BoxHead::backward(const Tensor& d_logits, const Tensor& d_deltas, const Cache& cache) {
    Tensor dh = cls_.backward(d_logits, cache.cls);
    {
        Tensor dh2 = box_.backward(d_deltas, cache.box);
        for (std::int64_t i = 0; i < dh.numel(); ++i) dh[i] += dh2[i];
    }
    Tensor d_pre2(cache.pre2.shape());
    kernels::relu_backward(dh, cache.pre2, d_pre2);
    dh = cache.bn_batch_stats ? bn2_.backward(d_pre2, cache.bn2)
                              : bn2_.backward_frozen(d_pre2, cache.fbn2);
    dh = fc2_.backward(dh, cache.fc2);
    Tensor d_pre1(cache.pre1.shape());
    kernels::relu_backward(dh, cache.pre1, d_pre1);
    dh = cache.bn_batch_stats ? bn1_.backward(d_pre1, cache.bn1)
                              : bn1_.backward_frozen(d_pre1, cache.fbn1);
    dh = fc1_.backward(dh, cache.fc1);
    dh.reshape(cache.pooled_shape);
    return dh;
}

MaskHead::MaskHead(int in_channels, int mid_channels, int num_classes, core::Rng& rng,
                   nn::ParamRegistry& reg, const std::string& prefix)
    : num_classes_(num_classes) {
    int in_c = in_channels;
    for (int i = 0; i < 4; ++i) {
        const std::string name = prefix + ".conv" + std::to_string(i + 1);
        convs_[static_cast<size_t>(i)].build(name, in_c, mid_channels, 3, 1, 1, /*bias=*/true, rng, reg);
        bns_[static_cast<size_t>(i)].build(name, mid_channels, reg);
        in_c = mid_channels;
    }
    deconv_.build(prefix + ".deconv", mid_channels, mid_channels, 2, 2, rng, reg);
    out_.build(prefix + ".out", mid_channels, num_classes, 1, 1, 0, /*bias=*/true, rng, reg, 0.01);
}

Tensor MaskHead::forward(const Tensor& pooled, bool training, Cache* cache, bool bn_batch_stats) {
    check(pooled.ndim() == 4, "mask head: pooled input must be [R,C,s,s]");
    const int r = pooled.dim(0);
    const bool live_bn = training && bn_batch_stats;
    if (cache) cache->bn_batch_stats = bn_batch_stats;
    Tensor h = pooled;
    for (int i = 0; i < 4; ++i) {
        h = convs_[static_cast<size_t>(i)].forward(h, cache ? &cache->conv[static_cast<size_t>(i)] : nullptr);
        const int c = h.dim(1), s = h.dim(2) * h.dim(3);
        h = live_bn
                ? bns_[static_cast<size_t>(i)].forward(h, r, c, s, true, cache ? &cache->bn[static_cast<size_t>(i)] : nullptr)
                : bns_[static_cast<size_t>(i)].forward_frozen(h, r, c, s, cache ? &cache->fbn[static_cast<size_t>(i)] : nullptr);
        if (cache) cache->pre_act[static_cast<size_t>(i)] = h;
        Tensor act;
        kernels::relu_forward(h, act);
        h = std::move(act);
    }
    h = deconv_.forward(h, cache ? &cache->deconv : nullptr);
    if (cache) cache->pre_deconv_act = h;
    {
        Tensor act;
        kernels::relu_forward(h, act);
        h = std::move(act);
    }
    return out_.forward(h, cache ? &cache->out : nullptr);
}

Tensor MaskHead::backward(const Tensor& d_logits, const Cache& cache) {
    Tensor dh = out_.backward(d_logits, cache.out);
    Tensor d_pre(cache.pre_deconv_act.shape());
    kernels::relu_backward(dh, cache.pre_deconv_act, d_pre);
    dh = deconv_.backward(d_pre, cache.deconv);
    for (int i = 3; i >= 0; --i) {
        Tensor d_act(cache.pre_act[static_cast<size_t>(i)].shape());
        kernels::relu_backward(dh, cache.pre_act[static_cast<size_t>(i)], d_act);
        dh = cache.bn_batch_stats
                 ? bns_[static_cast<size_t>(i)].backward(d_act, cache.bn[static_cast<size_t>(i)])
                 : bns_[static_cast<size_t>(i)].backward_frozen(d_act, cache.fbn[static_cast<size_t>(i)]);
        dh = convs_[static_cast<size_t>(i)].backward(dh, cache.conv[static_cast<size_t>(i)]);
    }
    return dh;
}

core::MaskU8 paste_mask(const Tensor& mask_probs, const rpn::Box& box, int image_h, int image_w,
                        double threshold) {
    core::MaskU8 out(image_h, image_w);
    if (box.degenerate()) return out;  // empty mask for degenerate boxes
    const rpn::Box b = rpn::clip_box(box, image_h, image_w);
    const int ms_h = mask_probs.dim(0), ms_w = mask_probs.dim(1);
    const int x_start = std::max(0, static_cast<int>(std::floor(b.x1)));
    const int x_end = std::min(image_w - 1, static_cast<int>(std::ceil(b.x2)) - 1);
    const int y_start = std::max(0, static_cast<int>(std::floor(b.y1)));
    const int y_end = std::min(image_h - 1, static_cast<int>(std::ceil(b.y2)) - 1);
    const double bw = box.width(), bh = box.height();
    for (int y = y_start; y <= y_end; ++y) {
        // Map the pixel center into mask-grid coordinates.
        const double v = (y + 0.5 - box.y1) / bh * ms_h - 0.5;
        const int v0 = std::clamp(static_cast<int>(std::floor(v)), 0, ms_h - 1);
        const int v1 = std::min(v0 + 1, ms_h - 1);
        const double fv = std::clamp(v - v0, 0.0, 1.0);
        for (int x = x_start; x <= x_end; ++x) {
            const double u = (x + 0.5 - box.x1) / bw * ms_w - 0.5;
            const int u0 = std::clamp(static_cast<int>(std::floor(u)), 0, ms_w - 1);
            const int u1 = std::min(u0 + 1, ms_w - 1);
            const double fu = std::clamp(u - u0, 0.0, 1.0);
            const double p = (1 - fv) * ((1 - fu) * mask_probs.at2(v0, u0) + fu * mask_probs.at2(v0, u1)) +
                             fv * ((1 - fu) * mask_probs.at2(v1, u0) + fu * mask_probs.at2(v1, u1));
            if (p >= threshold) out.at(y, x) = 1;
        }
    }
    return out;
}

}  // namespace splicedet::roi
