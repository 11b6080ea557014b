#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

// ROIAlign. Box coordinates are divided by the feature stride with no
// rounding, each output bin averages sampling_ratio^2 bilinear samples at
// regularly spaced points, and samples outside the map read as zero.
// Boxes are (x1,y1,x2,y2) in image coordinates.

namespace detail {

template <typename T>
struct BilinearPoint {
    int yl = 0, yh = 0, xl = 0, xh = 0;
    T w1 = 0, w2 = 0, w3 = 0, w4 = 0;  // (yl,xl) (yl,xh) (yh,xl) (yh,xh)
    bool inside = false;
    bool clamped_x = false, clamped_y = false;
};

template <typename T>
BilinearPoint<T> bilinear_setup(T y, T x, int height, int width) {
    BilinearPoint<T> p;
    if (y < T(-1) || y > static_cast<T>(height) || x < T(-1) || x > static_cast<T>(width))
        return p;
    p.inside = true;
    if (y <= T(0)) { y = T(0); p.clamped_y = true; }
    if (x <= T(0)) { x = T(0); p.clamped_x = true; }
    p.yl = static_cast<int>(y);
    p.xl = static_cast<int>(x);
    if (p.yl >= height - 1) { p.yh = p.yl = height - 1; y = static_cast<T>(p.yl); p.clamped_y = true; }
    else p.yh = p.yl + 1;
    if (p.xl >= width - 1) { p.xh = p.xl = width - 1; x = static_cast<T>(p.xl); p.clamped_x = true; }
    else p.xh = p.xl + 1;
    const T ly = y - static_cast<T>(p.yl), lx = x - static_cast<T>(p.xl);
    p.w1 = (T(1) - ly) * (T(1) - lx);
    p.w2 = (T(1) - ly) * lx;
    p.w3 = ly * (T(1) - lx);
    p.w4 = ly * lx;
    return p;
}

}  // namespace detail

// feat: [C,H,W]; rois: R boxes in image coords -> out: [R,C,out_h,out_w]
template <typename T>
void roi_align_forward_impl(const TensorT<T>& feat, const std::vector<std::array<T, 4>>& rois,
                            T spatial_scale, int out_h, int out_w, int sampling_ratio,
                            TensorT<T>& out, bool parallel) {
    check(feat.ndim() == 3, "roi_align: feature map must be [C,H,W]");
    check(out_h >= 1 && out_w >= 1 && sampling_ratio >= 1, "roi_align: bad output spec");
    const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    const int r = static_cast<int>(rois.size());
    for (const auto& b : rois)
        if (b[2] <= b[0] || b[3] <= b[1]) throw ShapeError("roi_align: degenerate box");
    out = TensorT<T>({r, c, out_h, out_w});
    const int ns = sampling_ratio;
    const T inv_count = T(1) / (static_cast<T>(ns) * static_cast<T>(ns));
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int ri = 0; ri < r; ++ri)
        for (int ci = 0; ci < c; ++ci) {
            const auto& b = rois[static_cast<size_t>(ri)];
            const T x1 = b[0] * spatial_scale, y1 = b[1] * spatial_scale;
            T roi_w = b[2] * spatial_scale - x1, roi_h = b[3] * spatial_scale - y1;
            if (roi_w < T(1)) roi_w = T(1);
            if (roi_h < T(1)) roi_h = T(1);
            const T bin_w = roi_w / static_cast<T>(out_w), bin_h = roi_h / static_cast<T>(out_h);
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    T acc = T(0);
                    for (int sy = 0; sy < ns; ++sy) {
                        const T py = y1 + bin_h * (static_cast<T>(oy) +
                                                   (static_cast<T>(sy) + T(0.5)) / static_cast<T>(ns));
                        for (int sx = 0; sx < ns; ++sx) {
                            const T px = x1 + bin_w * (static_cast<T>(ox) +
                                                       (static_cast<T>(sx) + T(0.5)) / static_cast<T>(ns));
                            auto p = detail::bilinear_setup(py, px, h, w);
                            if (!p.inside) continue;
                            acc += p.w1 * feat.at3(ci, p.yl, p.xl) + p.w2 * feat.at3(ci, p.yl, p.xh) +
                                   p.w3 * feat.at3(ci, p.yh, p.xl) + p.w4 * feat.at3(ci, p.yh, p.xh);
                        }
                    }
                    out.at4(ri, ci, oy, ox) = acc * inv_count;
                }
        }
}

namespace serial {
template <typename T>
void roi_align_forward(const TensorT<T>& feat, const std::vector<std::array<T, 4>>& rois,
                       T spatial_scale, int out_h, int out_w, int sampling_ratio, TensorT<T>& out) {
    roi_align_forward_impl(feat, rois, spatial_scale, out_h, out_w, sampling_ratio, out, false);
}
}  // namespace serial

namespace par_impl {
template <typename T>
void roi_align_forward(const TensorT<T>& feat, const std::vector<std::array<T, 4>>& rois,
                       T spatial_scale, int out_h, int out_w, int sampling_ratio, TensorT<T>& out) {
    roi_align_forward_impl(feat, rois, spatial_scale, out_h, out_w, sampling_ratio, out, true);
}
}  // namespace par_impl

template <typename T>
void roi_align_forward(const TensorT<T>& feat, const std::vector<std::array<T, 4>>& rois,
                       T spatial_scale, int out_h, int out_w, int sampling_ratio, TensorT<T>& out) {
    roi_align_forward_impl(feat, rois, spatial_scale, out_h, out_w, sampling_ratio, out,
                           par::enabled());
}

// Gradients. dfeat accumulates; each channel of dfeat is written by exactly
// one thread (parallel over channels, ROIs processed in order inside), so the
// result is deterministic. dboxes, when requested, accumulates d(loss)/d(box
// coordinates) for every ROI; feature values are needed for that term.
template <typename T>
void roi_align_backward(const TensorT<T>& dout, const std::vector<std::array<T, 4>>& rois,
                        T spatial_scale, int out_h, int out_w, int sampling_ratio,
                        const TensorT<T>& feat, TensorT<T>& dfeat,
                        std::vector<std::array<T, 4>>* dboxes = nullptr) {
    const int c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    const int r = static_cast<int>(rois.size());
    if (!dfeat.same_shape(feat)) dfeat = TensorT<T>(feat.shape());
    const int ns = sampling_ratio;
    const T inv_count = T(1) / (static_cast<T>(ns) * static_cast<T>(ns));
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int ci = 0; ci < c; ++ci) {
        for (int ri = 0; ri < r; ++ri) {
            const auto& b = rois[static_cast<size_t>(ri)];
            const T x1 = b[0] * spatial_scale, y1 = b[1] * spatial_scale;
            T roi_w = b[2] * spatial_scale - x1, roi_h = b[3] * spatial_scale - y1;
            if (roi_w < T(1)) roi_w = T(1);
            if (roi_h < T(1)) roi_h = T(1);
            const T bin_w = roi_w / static_cast<T>(out_w), bin_h = roi_h / static_cast<T>(out_h);
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    const T g = dout.at4(ri, ci, oy, ox) * inv_count;
                    if (g == T(0)) continue;
                    for (int sy = 0; sy < ns; ++sy) {
                        const T py = y1 + bin_h * (static_cast<T>(oy) +
                                                   (static_cast<T>(sy) + T(0.5)) / static_cast<T>(ns));
                        for (int sx = 0; sx < ns; ++sx) {
                            const T px = x1 + bin_w * (static_cast<T>(ox) +
                                                       (static_cast<T>(sx) + T(0.5)) / static_cast<T>(ns));
                            auto p = detail::bilinear_setup(py, px, h, w);
                            if (!p.inside) continue;
                            dfeat.at3(ci, p.yl, p.xl) += g * p.w1;
                            dfeat.at3(ci, p.yl, p.xh) += g * p.w2;
                            dfeat.at3(ci, p.yh, p.xl) += g * p.w3;
                            dfeat.at3(ci, p.yh, p.xh) += g * p.w4;
                        }
                    }
                }
        }
    }
    if (!dboxes) return;
    // Box-coordinate gradients (used by the finite-difference checks).
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int ri = 0; ri < r; ++ri) {
        const auto& b = rois[static_cast<size_t>(ri)];
        const T x1 = b[0] * spatial_scale, y1 = b[1] * spatial_scale;
        T roi_w = b[2] * spatial_scale - x1, roi_h = b[3] * spatial_scale - y1;
        const bool clamp_w = roi_w < T(1), clamp_h = roi_h < T(1);
        if (clamp_w) roi_w = T(1);
        if (clamp_h) roi_h = T(1);
        const T bin_w = roi_w / static_cast<T>(out_w), bin_h = roi_h / static_cast<T>(out_h);
        std::array<T, 4> db{T(0), T(0), T(0), T(0)};
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < out_h; ++oy)
                for (int ox = 0; ox < out_w; ++ox) {
                    const T g = dout.at4(ri, ci, oy, ox) * inv_count;
                    if (g == T(0)) continue;
                    for (int sy = 0; sy < ns; ++sy) {
                        const T v = (static_cast<T>(oy) + (static_cast<T>(sy) + T(0.5)) / static_cast<T>(ns)) /
                                    static_cast<T>(out_h);
                        const T py = y1 + bin_h * static_cast<T>(out_h) * v;
                        for (int sx = 0; sx < ns; ++sx) {
                            const T u = (static_cast<T>(ox) + (static_cast<T>(sx) + T(0.5)) / static_cast<T>(ns)) /
                                        static_cast<T>(out_w);
                            const T px = x1 + bin_w * static_cast<T>(out_w) * u;
                            auto p = detail::bilinear_setup(py, px, h, w);
                            if (!p.inside) continue;
                            const T f_ll = feat.at3(ci, p.yl, p.xl), f_lh = feat.at3(ci, p.yl, p.xh);
                            const T f_hl = feat.at3(ci, p.yh, p.xl), f_hh = feat.at3(ci, p.yh, p.xh);
                            const T ly = p.w3 + p.w4;  // = ly
                            const T lx = p.w2 + p.w4;  // = lx
                            T dv_dx = p.clamped_x ? T(0)
                                                  : (T(1) - ly) * (f_lh - f_ll) + ly * (f_hh - f_hl);
                            T dv_dy = p.clamped_y ? T(0)
                                                  : (T(1) - lx) * (f_hl - f_ll) + lx * (f_hh - f_lh);
                            // px = x1s + roi_w * u; roi_w clamps drop the x2 term.
                            const T dpx_dx1 = spatial_scale * (clamp_w ? T(1) : (T(1) - u));
                            const T dpx_dx2 = spatial_scale * (clamp_w ? T(0) : u);
                            const T dpy_dy1 = spatial_scale * (clamp_h ? T(1) : (T(1) - v));
                            const T dpy_dy2 = spatial_scale * (clamp_h ? T(0) : v);
                            db[0] += g * dv_dx * dpx_dx1;
                            db[2] += g * dv_dx * dpx_dx2;
                            db[1] += g * dv_dy * dpy_dy1;
                            db[3] += g * dv_dy * dpy_dy2;
                        }
                    }
                }
        auto& out_db = (*dboxes)[static_cast<size_t>(ri)];
        for (int k = 0; k < 4; ++k) out_db[static_cast<size_t>(k)] += db[static_cast<size_t>(k)];
    }
}

}  // namespace splicedet::kernels
