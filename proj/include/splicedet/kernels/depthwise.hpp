#pragma once

#include <algorithm>

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"
#include "splicedet/kernels/conv2d.hpp"

namespace splicedet::kernels {

// Depthwise convolution: one k x k kernel per input channel, no channel
// mixing. x: [N,C,H,W], w: [C,kh,kw] -> y: [N,C,Ho,Wo]

namespace detail {

template <typename T>
void depthwise_forward_impl(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad,
                            TensorT<T>& y, bool parallel) {
    check(x.ndim() == 4 && w.ndim() == 3, "depthwise: expected 4-d input, 3-d weight");
    if (x.dim(1) != w.dim(0))
        throw ShapeError("depthwise: channel mismatch " + std::to_string(x.dim(1)) + " vs " +
                         std::to_string(w.dim(0)));
    const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int kh = w.dim(1), kw = w.dim(2);
    const int ho = conv_out_dim(h, kh, stride, pad), wo = conv_out_dim(wd, kw, stride, pad);
    y = TensorT<T>({n_batch, c, ho, wo});
    const T* xd = x.data();
    const T* wdt = w.data();
    T* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int ci = 0; ci < c; ++ci) {
            const T* xc = xd + (static_cast<std::int64_t>(n) * c + ci) * h * wd;
            const T* wc = wdt + static_cast<std::int64_t>(ci) * kh * kw;
            T* yc = yd + (static_cast<std::int64_t>(n) * c + ci) * ho * wo;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(ho) * wo; ++i) yc[i] = T(0);
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    const T wv = wc[static_cast<std::int64_t>(ky) * kw + kx];
                    const int ox_lo = ceil_div_nonneg(pad - kx, stride);
                    const int ox_hi = std::min(wo - 1, (wd - 1 + pad - kx) / stride);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* xr = xc + static_cast<std::int64_t>(iy) * wd - pad + kx;
                        T* yr = yc + static_cast<std::int64_t>(oy) * wo;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) yr[ox] += wv * xr[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                yr[ox] += wv * xr[static_cast<std::int64_t>(ox) * stride];
                        }
                    }
                }
        }
}

template <typename T>
void depthwise_backward_input_impl(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                                   const std::vector<int>& x_shape, TensorT<T>& dx, bool parallel) {
    const int n_batch = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3];
    const int kh = w.dim(1), kw = w.dim(2);
    const int ho = dy.dim(2), wo = dy.dim(3);
    if (dx.shape() != x_shape) dx = TensorT<T>(x_shape);
    const T* dyd = dy.data();
    const T* wdt = w.data();
    T* dxd = dx.data();
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int ci = 0; ci < c; ++ci) {
            const T* dyc = dyd + (static_cast<std::int64_t>(n) * c + ci) * ho * wo;
            const T* wc = wdt + static_cast<std::int64_t>(ci) * kh * kw;
            T* dxc = dxd + (static_cast<std::int64_t>(n) * c + ci) * h * wd;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    const T wv = wc[static_cast<std::int64_t>(ky) * kw + kx];
                    const int ox_lo = ceil_div_nonneg(pad - kx, stride);
                    const int ox_hi = std::min(wo - 1, (wd - 1 + pad - kx) / stride);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* dyr = dyc + static_cast<std::int64_t>(oy) * wo;
                        T* dxr = dxc + static_cast<std::int64_t>(iy) * wd - pad + kx;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) dxr[ox] += wv * dyr[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                dxr[static_cast<std::int64_t>(ox) * stride] += wv * dyr[ox];
                        }
                    }
                }
        }
}

template <typename T>
void depthwise_backward_params_impl(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                                    TensorT<T>& dw, bool parallel) {
    const int n_batch = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int kh = dw.dim(1), kw = dw.dim(2);
    const T* dyd = dy.data();
    const T* xd = x.data();
    T* dwd = dw.data();
#pragma omp parallel for schedule(static) if (parallel)
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                T acc = T(0);
                const int ox_lo = ceil_div_nonneg(pad - kx, stride);
                const int ox_hi = std::min(wo - 1, (wd - 1 + pad - kx) / stride);
                for (int n = 0; n < n_batch; ++n) {
                    const T* dyc = dyd + (static_cast<std::int64_t>(n) * c + ci) * ho * wo;
                    const T* xc = xd + (static_cast<std::int64_t>(n) * c + ci) * h * wd;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* dyr = dyc + static_cast<std::int64_t>(oy) * wo;
                        const T* xr = xc + static_cast<std::int64_t>(iy) * wd - pad + kx;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) acc += dyr[ox] * xr[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                acc += dyr[ox] * xr[static_cast<std::int64_t>(ox) * stride];
                        }
                    }
                }
                dwd[(static_cast<std::int64_t>(ci) * kh + ky) * kw + kx] += acc;
            }
}

}  // namespace detail

namespace serial {
template <typename T>
void depthwise_forward(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad, TensorT<T>& y) {
    detail::depthwise_forward_impl(x, w, stride, pad, y, false);
}
template <typename T>
void depthwise_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                              const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::depthwise_backward_input_impl(dy, w, stride, pad, x_shape, dx, false);
}
template <typename T>
void depthwise_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                               TensorT<T>& dw) {
    detail::depthwise_backward_params_impl(dy, x, stride, pad, dw, false);
}
}  // namespace serial

namespace par_impl {
template <typename T>
void depthwise_forward(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad, TensorT<T>& y) {
    detail::depthwise_forward_impl(x, w, stride, pad, y, true);
}
template <typename T>
void depthwise_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                              const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::depthwise_backward_input_impl(dy, w, stride, pad, x_shape, dx, true);
}
template <typename T>
void depthwise_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                               TensorT<T>& dw) {
    detail::depthwise_backward_params_impl(dy, x, stride, pad, dw, true);
}
}  // namespace par_impl

template <typename T>
void depthwise_forward(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad, TensorT<T>& y) {
    detail::depthwise_forward_impl(x, w, stride, pad, y, par::enabled());
}

template <typename T>
void depthwise_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                              const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::depthwise_backward_input_impl(dy, w, stride, pad, x_shape, dx, par::enabled());
}

template <typename T>
void depthwise_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                               TensorT<T>& dw) {
    detail::depthwise_backward_params_impl(dy, x, stride, pad, dw, par::enabled());
}

}  // namespace splicedet::kernels
