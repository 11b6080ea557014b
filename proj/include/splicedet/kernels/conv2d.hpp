#pragma once

#include <algorithm>

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline void check_conv_shapes(const std::vector<int>& x, const std::vector<int>& w) {
    check(x.size() == 4 && w.size() == 4, "conv2d: expected 4-d input and weight");
    if (x[1] != w[1])
        throw ShapeError("conv2d: input channels " + std::to_string(x[1]) +
                         " != weight channels " + std::to_string(w[1]));
}

namespace detail {

inline int ceil_div_nonneg(int a, int b) { return a <= 0 ? 0 : (a + b - 1) / b; }

// ---------------------------------------------------------------------------
// Row-vectorized direct convolution. Taps run in the outer loops and the
// output column in the inner loop, so each row is a sequence of saxpy/dot
// operations. The serial reference and the OpenMP flavor share these bodies
// (the pragma is the only difference), which keeps them bitwise identical;
// per output element the taps accumulate in a fixed (ci, ky, kx) order.
// ---------------------------------------------------------------------------

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout] or null -> y: [N,Cout,Ho,Wo]
template <typename T>
void conv2d_forward_impl(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias,
                         int stride, int pad, TensorT<T>& y, bool parallel) {
    check_conv_shapes(x.shape(), w.shape());
    const int n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = conv_out_dim(h, kh, stride, pad), wo = conv_out_dim(wd, kw, stride, pad);
    y = TensorT<T>({n_batch, cout, ho, wo});
    const T* xd = x.data();
    const T* wdt = w.data();
    T* yd = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int co = 0; co < cout; ++co) {
            const T* wbase = wdt + static_cast<std::int64_t>(co) * cin * kh * kw;
            T* ybase = yd + (static_cast<std::int64_t>(n) * cout + co) * ho * wo;
            const T b = bias ? (*bias)[co] : T(0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(ho) * wo; ++i) ybase[i] = b;
            for (int ci = 0; ci < cin; ++ci) {
                const T* xc = xd + (static_cast<std::int64_t>(n) * cin + ci) * h * wd;
                const T* wc = wbase + static_cast<std::int64_t>(ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wc[static_cast<std::int64_t>(ky) * kw + kx];
                        const int ox_lo = ceil_div_nonneg(pad - kx, stride);
                        const int ox_hi = std::min(wo - 1, (wd - 1 + pad - kx) / stride);
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            const T* xr = xc + static_cast<std::int64_t>(iy) * wd - pad + kx;
                            T* yr = ybase + static_cast<std::int64_t>(oy) * wo;
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
}

// Input gradient; accumulates into dx. Each (n, ci) slice is owned by one
// thread; within it, contributions arrive in (co, ky, kx, oy, ox) order.
template <typename T>
void conv2d_backward_input_impl(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                                const std::vector<int>& x_shape, TensorT<T>& dx, bool parallel) {
    const int n_batch = x_shape[0], cin = x_shape[1], h = x_shape[2], wd = x_shape[3];
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    if (dx.shape() != x_shape) dx = TensorT<T>(x_shape);
    const T* dyd = dy.data();
    const T* wdt = w.data();
    T* dxd = dx.data();
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int ci = 0; ci < cin; ++ci) {
            T* dxc = dxd + (static_cast<std::int64_t>(n) * cin + ci) * h * wd;
            for (int co = 0; co < cout; ++co) {
                const T* dyc = dyd + (static_cast<std::int64_t>(n) * cout + co) * ho * wo;
                const T* wc = wdt + (static_cast<std::int64_t>(co) * cin + ci) * kh * kw;
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
}

// Weight/bias gradients; accumulate into dw/db. Each co is owned by one
// thread; per weight the contributions arrive in (n, oy, ox) order.
template <typename T>
void conv2d_backward_params_impl(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                                 TensorT<T>& dw, TensorT<T>* db, bool parallel) {
    const int n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
    const int kh = dw.dim(2), kw = dw.dim(3);
    const T* dyd = dy.data();
    const T* xd = x.data();
    T* dwd = dw.data();
#pragma omp parallel for schedule(static) if (parallel)
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T acc = T(0);
                    const int ox_lo = ceil_div_nonneg(pad - kx, stride);
                    const int ox_hi = std::min(wo - 1, (wd - 1 + pad - kx) / stride);
                    for (int n = 0; n < n_batch; ++n) {
                        const T* dyc = dyd + (static_cast<std::int64_t>(n) * cout + co) * ho * wo;
                        const T* xc = xd + (static_cast<std::int64_t>(n) * cin + ci) * h * wd;
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
                    dwd[((static_cast<std::int64_t>(co) * cin + ci) * kh + ky) * kw + kx] += acc;
                }
        if (db) {
            T acc = T(0);
            for (int n = 0; n < n_batch; ++n) {
                const T* dyc = dyd + (static_cast<std::int64_t>(n) * cout + co) * ho * wo;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(ho) * wo; ++i) acc += dyc[i];
            }
            (*db)[co] += acc;
        }
    }
}

}  // namespace detail

namespace serial {
template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias, int stride,
                    int pad, TensorT<T>& y) {
    detail::conv2d_forward_impl(x, w, bias, stride, pad, y, false);
}
template <typename T>
void conv2d_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                           const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::conv2d_backward_input_impl(dy, w, stride, pad, x_shape, dx, false);
}
template <typename T>
void conv2d_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                            TensorT<T>& dw, TensorT<T>* db) {
    detail::conv2d_backward_params_impl(dy, x, stride, pad, dw, db, false);
}
}  // namespace serial

namespace par_impl {
template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias, int stride,
                    int pad, TensorT<T>& y) {
    detail::conv2d_forward_impl(x, w, bias, stride, pad, y, true);
}
template <typename T>
void conv2d_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                           const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::conv2d_backward_input_impl(dy, w, stride, pad, x_shape, dx, true);
}
template <typename T>
void conv2d_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                            TensorT<T>& dw, TensorT<T>* db) {
    detail::conv2d_backward_params_impl(dy, x, stride, pad, dw, db, true);
}
}  // namespace par_impl

template <typename T>
void conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias, int stride,
                    int pad, TensorT<T>& y) {
    detail::conv2d_forward_impl(x, w, bias, stride, pad, y, par::enabled());
}

template <typename T>
void conv2d_backward_input(const TensorT<T>& dy, const TensorT<T>& w, int stride, int pad,
                           const std::vector<int>& x_shape, TensorT<T>& dx) {
    detail::conv2d_backward_input_impl(dy, w, stride, pad, x_shape, dx, par::enabled());
}

template <typename T>
void conv2d_backward_params(const TensorT<T>& dy, const TensorT<T>& x, int stride, int pad,
                            TensorT<T>& dw, TensorT<T>* db) {
    detail::conv2d_backward_params_impl(dy, x, stride, pad, dw, db, par::enabled());
}

}  // namespace splicedet::kernels
