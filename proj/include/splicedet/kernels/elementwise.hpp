#pragma once

#include <cmath>

#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

// Elementwise activations and the two spatial resampling steps used by the
// FPN. All of them touch each element exactly once.

template <typename T>
void relu6_forward(const TensorT<T>& x, TensorT<T>& y) {
    y = TensorT<T>(x.shape());
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (std::int64_t i = 0; i < n; ++i) {
        T v = x[i];
        y[i] = v < T(0) ? T(0) : (v > T(6) ? T(6) : v);
    }
}

template <typename T>
void relu6_backward(const TensorT<T>& dy, const TensorT<T>& x, TensorT<T>& dx) {
    if (!dx.same_shape(x)) dx = TensorT<T>(x.shape());
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (std::int64_t i = 0; i < n; ++i)
        dx[i] += (x[i] > T(0) && x[i] < T(6)) ? dy[i] : T(0);
}

template <typename T>
void relu_forward(const TensorT<T>& x, TensorT<T>& y) {
    y = TensorT<T>(x.shape());
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const TensorT<T>& dy, const TensorT<T>& x, TensorT<T>& dx) {
    if (!dx.same_shape(x)) dx = TensorT<T>(x.shape());
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (std::int64_t i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void sigmoid_forward(const TensorT<T>& x, TensorT<T>& y) {
    y = TensorT<T>(x.shape());
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (std::int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

// Nearest-neighbor 2x upsample of a [N,C,H,W] map.
template <typename T>
void upsample2x_forward(const TensorT<T>& x, TensorT<T>& y) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    y = TensorT<T>({n, c, h * 2, w * 2});
#pragma omp parallel for collapse(2) schedule(static) if (par::enabled())
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < h * 2; ++oy)
                for (int ox = 0; ox < w * 2; ++ox)
                    y.at4(ni, ci, oy, ox) = x.at4(ni, ci, oy / 2, ox / 2);
}

template <typename T>
void upsample2x_backward(const TensorT<T>& dy, const std::vector<int>& x_shape, TensorT<T>& dx) {
    const int n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
    if (!dx.same_shape(TensorT<T>(x_shape))) dx = TensorT<T>(x_shape);
#pragma omp parallel for collapse(2) schedule(static) if (par::enabled())
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    T acc = T(0);
                    for (int dyy = 0; dyy < 2; ++dyy)
                        for (int dxx = 0; dxx < 2; ++dxx)
                            acc += dy.at4(ni, ci, iy * 2 + dyy, ix * 2 + dxx);
                    dx.at4(ni, ci, iy, ix) += acc;
                }
}

// Stride-2 subsample (top-left corner of each 2x2 block); produces P6 from P5.
template <typename T>
void subsample2x_forward(const TensorT<T>& x, TensorT<T>& y) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = (h + 1) / 2, wo = (w + 1) / 2;
    y = TensorT<T>({n, c, ho, wo});
#pragma omp parallel for collapse(2) schedule(static) if (par::enabled())
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    y.at4(ni, ci, oy, ox) = x.at4(ni, ci, oy * 2, ox * 2);
}

template <typename T>
void subsample2x_backward(const TensorT<T>& dy, const std::vector<int>& x_shape, TensorT<T>& dx) {
    const int n = x_shape[0], c = x_shape[1];
    const int ho = dy.dim(2), wo = dy.dim(3);
    if (!dx.same_shape(TensorT<T>(x_shape))) dx = TensorT<T>(x_shape);
#pragma omp parallel for collapse(2) schedule(static) if (par::enabled())
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox)
                    dx.at4(ni, ci, oy * 2, ox * 2) += dy.at4(ni, ci, oy, ox);
}

}  // namespace splicedet::kernels
