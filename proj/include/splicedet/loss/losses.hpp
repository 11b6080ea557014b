#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "splicedet/core/error.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::loss {

/// The multi-task breakdown: total = rpn_cls + rpn_box + roi_cls + roi_box +
/// mask, i.e. the total loss with the classification and box terms split into
/// their RPN and ROI-head stages.
struct LossBreakdown {
    double l_total = 0, l_rpn_cls = 0, l_rpn_box = 0, l_roi_cls = 0, l_roi_box = 0, l_mask = 0;
};

enum class NormPolicy {
    kSampledCount,  // divide by the number of sampled anchors
    kFixed,         // divide by an explicit constant
};

struct LossConfig {
    double lambda = 1.0;  // balance on the box-regression term
    NormPolicy n_cls_norm = NormPolicy::kSampledCount;
    NormPolicy n_reg_norm = NormPolicy::kSampledCount;
    double n_cls_fixed = 1.0;
    double n_reg_fixed = 1.0;
    double smooth_l1_beta = 1.0;
};

template <typename T>
T smooth_l1(T x, T beta) {
    check(beta > T(0), "smooth_l1: beta must be positive");
    const T ax = std::abs(x);
    return ax < beta ? T(0.5) * x * x / beta : ax - T(0.5) * beta;
}

template <typename T>
T smooth_l1_grad(T x, T beta) {
    const T ax = std::abs(x);
    if (ax < beta) return x / beta;
    return x > T(0) ? T(1) : T(-1);
}

namespace detail {
template <typename T>
T safe_log(T p) {
    return std::log(std::max(p, T(1e-12)));
}
template <typename T>
void check_finite(T v, const char* what) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError(std::string(what) + " is not finite");
}
}  // namespace detail

template <typename T>
struct RpnLossResult {
    T l_cls = 0, l_box = 0;
    std::vector<T> d_p;                    // dl/dp per sampled anchor
    std::vector<std::array<T, 4>> d_t;     // dl/dt per sampled anchor
};

/// RPN loss over the sampled (non-ignore) anchors:
///   l_cls = 1/N_cls * sum CE(p_i, p*_i)
///   l_box = lambda / N_reg * sum p*_i * smoothL1(t_i - t*_i)
/// The regression term vanishes for negative anchors since p* = 0 there.
template <typename T>
RpnLossResult<T> rpn_loss(const std::vector<T>& p, const std::vector<int>& p_star,
                          const std::vector<std::array<T, 4>>& t,
                          const std::vector<std::array<T, 4>>& t_star, const LossConfig& cfg) {
    const size_t n = p.size();
    check(p_star.size() == n && t.size() == n && t_star.size() == n,
          "rpn_loss: arrays must align");
    for (size_t i = 0; i < n; ++i) {
        detail::check_finite(p[i], "rpn_loss: p");
        for (int k = 0; k < 4; ++k) {
            detail::check_finite(t[i][static_cast<size_t>(k)], "rpn_loss: t");
            detail::check_finite(t_star[i][static_cast<size_t>(k)], "rpn_loss: t_star");
        }
    }
    RpnLossResult<T> out;
    out.d_p.assign(n, T(0));
    out.d_t.assign(n, {T(0), T(0), T(0), T(0)});
    if (n == 0) return out;
    const T n_cls = cfg.n_cls_norm == NormPolicy::kSampledCount ? static_cast<T>(n)
                                                                : static_cast<T>(cfg.n_cls_fixed);
    const T n_reg = cfg.n_reg_norm == NormPolicy::kSampledCount ? static_cast<T>(n)
                                                                : static_cast<T>(cfg.n_reg_fixed);
    const T beta = static_cast<T>(cfg.smooth_l1_beta);
    const T lambda = static_cast<T>(cfg.lambda);
    T cls_sum = T(0), box_sum = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T pi = p[i];
        if (p_star[i] == 1) {
            cls_sum += -detail::safe_log(pi);
            out.d_p[i] = -T(1) / std::max(pi, T(1e-12)) / n_cls;
            for (size_t k = 0; k < 4; ++k) {
                const T diff = t[i][k] - t_star[i][k];
                box_sum += smooth_l1(diff, beta);
                out.d_t[i][k] = lambda * smooth_l1_grad(diff, beta) / n_reg;
            }
        } else {
            cls_sum += -detail::safe_log(T(1) - pi);
            out.d_p[i] = T(1) / std::max(T(1) - pi, T(1e-12)) / n_cls;
        }
    }
    out.l_cls = cls_sum / n_cls;
    out.l_box = lambda * box_sum / n_reg;
    return out;
}

template <typename T>
struct RoiLossResult {
    T l_cls = 0, l_box = 0;
    std::vector<std::vector<T>> d_logits;                 // [R][num_classes]
    std::vector<std::vector<std::array<T, 4>>> d_deltas;  // [R][num_classes][4]
};

/// ROI-head losses: softmax cross-entropy over classes averaged over all
/// sampled ROIs, smooth-L1 over the target-class deltas averaged over
/// foreground ROIs only (zero, not NaN, when there is no foreground).
template <typename T>
RoiLossResult<T> roi_losses(const std::vector<std::vector<T>>& class_logits,
                            const std::vector<int>& class_targets,
                            const std::vector<std::vector<std::array<T, 4>>>& box_deltas,
                            const std::vector<std::array<T, 4>>& box_targets,
                            T smooth_l1_beta = T(1)) {
    const size_t r = class_logits.size();
    check(class_targets.size() == r && box_deltas.size() == r && box_targets.size() == r,
          "roi_losses: arrays must align");
    RoiLossResult<T> out;
    out.d_logits.resize(r);
    out.d_deltas.resize(r);
    if (r == 0) return out;

    size_t n_fg = 0;
    for (size_t i = 0; i < r; ++i)
        if (class_targets[i] > 0) ++n_fg;

    T cls_sum = T(0), box_sum = T(0);
    for (size_t i = 0; i < r; ++i) {
        const auto& logits = class_logits[i];
        const size_t k_classes = logits.size();
        check(class_targets[i] >= 0 && static_cast<size_t>(class_targets[i]) < k_classes,
              "roi_losses: class target out of range");
        // Stable softmax.
        T max_logit = logits[0];
        for (T v : logits) max_logit = std::max(max_logit, v);
        T denom = T(0);
        std::vector<T> probs(k_classes);
        for (size_t k = 0; k < k_classes; ++k) {
            probs[k] = std::exp(logits[k] - max_logit);
            denom += probs[k];
        }
        for (auto& v : probs) v /= denom;
        cls_sum += -detail::safe_log(probs[static_cast<size_t>(class_targets[i])]);
        out.d_logits[i].assign(k_classes, T(0));
        for (size_t k = 0; k < k_classes; ++k)
            out.d_logits[i][k] =
                (probs[k] - (static_cast<int>(k) == class_targets[i] ? T(1) : T(0))) / static_cast<T>(r);

        out.d_deltas[i].assign(box_deltas[i].size(), {T(0), T(0), T(0), T(0)});
        if (class_targets[i] > 0) {
            const auto& pred = box_deltas[i][static_cast<size_t>(class_targets[i])];
            for (size_t k = 0; k < 4; ++k) {
                const T diff = pred[k] - box_targets[i][k];
                box_sum += smooth_l1(diff, smooth_l1_beta);
                out.d_deltas[i][static_cast<size_t>(class_targets[i])][k] =
                    smooth_l1_grad(diff, smooth_l1_beta) / static_cast<T>(std::max<size_t>(n_fg, 1));
            }
        }
    }
    out.l_cls = cls_sum / static_cast<T>(r);
    out.l_box = n_fg == 0 ? T(0) : box_sum / static_cast<T>(n_fg);
    return out;
}

template <typename T>
struct MaskLossResult {
    T l_mask = 0;
    core::TensorT<T> d_probs;  // same shape as probs
};

/// Per-pixel binary cross-entropy on the target-class mask channel, averaged
/// over pixels and over foreground ROIs. probs/targets: [R, H, W].
template <typename T>
MaskLossResult<T> mask_loss(const core::TensorT<T>& mask_probs, const core::TensorT<T>& mask_targets) {
    MaskLossResult<T> out;
    if (mask_probs.numel() == 0) {
        out.d_probs = core::TensorT<T>(mask_probs.shape());
        return out;
    }
    check(mask_probs.same_shape(mask_targets), "mask_loss: shape mismatch");
    check(mask_probs.ndim() == 3, "mask_loss: expected [R,H,W]");
    const std::int64_t r = mask_probs.dim(0);
    const std::int64_t per_roi = mask_probs.dim(1) * static_cast<std::int64_t>(mask_probs.dim(2));
    out.d_probs = core::TensorT<T>(mask_probs.shape());
    const T denom = static_cast<T>(r) * static_cast<T>(per_roi);
    T sum = T(0);
    for (std::int64_t i = 0; i < mask_probs.numel(); ++i) {
        const T p = mask_probs[i], t = mask_targets[i];
        detail::check_finite(p, "mask_loss: prob");
        sum += -(t * detail::safe_log(p) + (T(1) - t) * detail::safe_log(T(1) - p));
        out.d_probs[i] =
            (-t / std::max(p, T(1e-12)) + (T(1) - t) / std::max(T(1) - p, T(1e-12))) / denom;
    }
    out.l_mask = sum / denom;
    return out;
}

/// Total-loss composition; rejects non-finite components by name.
inline LossBreakdown total_loss(double l_rpn_cls, double l_rpn_box, double l_roi_cls,
                                double l_roi_box, double l_mask) {
    const std::array<std::pair<const char*, double>, 5> parts = {
        std::pair{"l_rpn_cls", l_rpn_cls}, std::pair{"l_rpn_box", l_rpn_box},
        std::pair{"l_roi_cls", l_roi_cls}, std::pair{"l_roi_box", l_roi_box},
        std::pair{"l_mask", l_mask}};
    for (const auto& [name, v] : parts)
        if (!std::isfinite(v)) throw NumericError(std::string("total_loss: ") + name + " is not finite");
    LossBreakdown b;
    b.l_rpn_cls = l_rpn_cls;
    b.l_rpn_box = l_rpn_box;
    b.l_roi_cls = l_roi_cls;
    b.l_roi_box = l_roi_box;
    b.l_mask = l_mask;
    b.l_total = l_rpn_cls + l_rpn_box + l_roi_cls + l_roi_box + l_mask;
    return b;
}

}  // namespace splicedet::loss
