#pragma once

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

// Transposed convolution used by the mask head's 14 -> 28 upsampling step.
// x: [N,Cin,H,W], w: [Cin,Cout,k,k], stride s, no padding
// -> y: [N,Cout,(H-1)*s+k,(W-1)*s+k]
// Gather form: each output pixel sums the input pixels that map onto it, so
// the parallel flavor has one writer per element.

namespace detail {

template <typename T>
void conv_transpose2d_forward_impl(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                                   int stride, TensorT<T>& y, bool parallel) {
    check(x.ndim() == 4 && w.ndim() == 4, "conv_transpose2d: expected 4-d tensors");
    if (x.dim(1) != w.dim(0))
        throw ShapeError("conv_transpose2d: channel mismatch");
    const int n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h - 1) * stride + kh, wo = (wd - 1) * stride + kw;
    y = TensorT<T>({n_batch, cout, ho, wo});
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = b ? (*b)[co] : T(0);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int ny = oy - ky;
                        if (ny < 0 || ny % stride != 0) continue;
                        const int iy = ny / stride;
                        if (iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int nx = ox - kx;
                            if (nx < 0 || nx % stride != 0) continue;
                            const int ix = nx / stride;
                            if (ix >= wd) continue;
                            for (int ci = 0; ci < cin; ++ci)
                                acc += x.at4(n, ci, iy, ix) * w.at4(ci, co, ky, kx);
                        }
                    }
                    y.at4(n, co, oy, ox) = acc;
                }
}

template <typename T>
void conv_transpose2d_backward_impl(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w,
                                    int stride, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>* db,
                                    bool parallel) {
    const int n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    if (!dx.same_shape(x)) dx = TensorT<T>(x.shape());
    // dx: a transposed conv's input gradient is a plain convolution of dy.
#pragma omp parallel for collapse(2) schedule(static) if (parallel)
    for (int n = 0; n < n_batch; ++n)
        for (int ci = 0; ci < cin; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < wd; ++ix) {
                    T acc = T(0);
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int oy = iy * stride + ky, ox = ix * stride + kx;
                                if (oy >= ho || ox >= wo) continue;
                                acc += dy.at4(n, co, oy, ox) * w.at4(ci, co, ky, kx);
                            }
                    dx.at4(n, ci, iy, ix) += acc;
                }
#pragma omp parallel for schedule(static) if (parallel)
    for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T acc = T(0);
                    for (int n = 0; n < n_batch; ++n)
                        for (int iy = 0; iy < h; ++iy)
                            for (int ix = 0; ix < wd; ++ix) {
                                const int oy = iy * stride + ky, ox = ix * stride + kx;
                                if (oy >= ho || ox >= wo) continue;
                                acc += x.at4(n, ci, iy, ix) * dy.at4(n, co, oy, ox);
                            }
                    dw.at4(ci, co, ky, kx) += acc;
                }
    if (db)
        for (int co = 0; co < cout; ++co) {
            T acc = T(0);
            for (int n = 0; n < n_batch; ++n)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) acc += dy.at4(n, co, oy, ox);
            (*db)[co] += acc;
        }
}

}  // namespace detail

namespace serial {
template <typename T>
void conv_transpose2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                              int stride, TensorT<T>& y) {
    detail::conv_transpose2d_forward_impl(x, w, b, stride, y, false);
}
template <typename T>
void conv_transpose2d_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w,
                               int stride, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>* db) {
    detail::conv_transpose2d_backward_impl(dy, x, w, stride, dx, dw, db, false);
}
}  // namespace serial

namespace par_impl {
template <typename T>
void conv_transpose2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                              int stride, TensorT<T>& y) {
    detail::conv_transpose2d_forward_impl(x, w, b, stride, y, true);
}
template <typename T>
void conv_transpose2d_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w,
                               int stride, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>* db) {
    detail::conv_transpose2d_backward_impl(dy, x, w, stride, dx, dw, db, true);
}
}  // namespace par_impl

template <typename T>
void conv_transpose2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                              int stride, TensorT<T>& y) {
    detail::conv_transpose2d_forward_impl(x, w, b, stride, y, par::enabled());
}

template <typename T>
void conv_transpose2d_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w,
                               int stride, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>* db) {
    detail::conv_transpose2d_backward_impl(dy, x, w, stride, dx, dw, db, par::enabled());
}

}  // namespace splicedet::kernels
