#pragma once

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

// Fully connected layer. x: [N,Din], w: [Din,Dout], b: [Dout] -> y: [N,Dout]
// Inner loops run over contiguous rows; per-output accumulation order is
// fixed (k ascending for forward, j ascending for dx, i ascending for dw), so
// the serial and OpenMP flavors agree bitwise.

namespace detail {

template <typename T>
void dense_forward_impl(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b,
                        TensorT<T>& y, bool parallel) {
    check(x.ndim() == 2 && w.ndim() == 2, "dense: expected 2-d input and weight");
    if (x.dim(1) != w.dim(0))
        throw ShapeError("dense: inner dim mismatch " + std::to_string(x.dim(1)) + " vs " +
                         std::to_string(w.dim(0)));
    const int n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    y = TensorT<T>({n, dout});
    const T* xd = x.data();
    const T* wd = w.data();
    T* yd = y.data();
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
        T* yrow = yd + static_cast<std::int64_t>(i) * dout;
        if (b) {
            const T* bd = b->data();
            for (int j = 0; j < dout; ++j) yrow[j] = bd[j];
        } else {
            for (int j = 0; j < dout; ++j) yrow[j] = T(0);
        }
        const T* xrow = xd + static_cast<std::int64_t>(i) * din;
        for (int k = 0; k < din; ++k) {
            const T xv = xrow[k];
            const T* wrow = wd + static_cast<std::int64_t>(k) * dout;
            for (int j = 0; j < dout; ++j) yrow[j] += xv * wrow[j];
        }
    }
}

template <typename T>
void dense_backward_impl(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w,
                         TensorT<T>& dx, TensorT<T>& dw, TensorT<T>* db, bool parallel) {
    const int n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (!dx.same_shape(x)) dx = TensorT<T>(x.shape());
    const T* dyd = dy.data();
    const T* xd = x.data();
    const T* wd = w.data();
    T* dxd = dx.data();
    T* dwd = dw.data();
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
        const T* dyrow = dyd + static_cast<std::int64_t>(i) * dout;
        T* dxrow = dxd + static_cast<std::int64_t>(i) * din;
        for (int k = 0; k < din; ++k) {
            T acc = T(0);
            const T* wrow = wd + static_cast<std::int64_t>(k) * dout;
            for (int j = 0; j < dout; ++j) acc += dyrow[j] * wrow[j];
            dxrow[k] += acc;
        }
    }
    // dw[k][j] accumulates over i in ascending order; each k row is owned by
    // one thread.
#pragma omp parallel for schedule(static) if (parallel)
    for (int k = 0; k < din; ++k) {
        T* dwrow = dwd + static_cast<std::int64_t>(k) * dout;
        for (int i = 0; i < n; ++i) {
            const T xv = xd[static_cast<std::int64_t>(i) * din + k];
            const T* dyrow = dyd + static_cast<std::int64_t>(i) * dout;
            for (int j = 0; j < dout; ++j) dwrow[j] += xv * dyrow[j];
        }
    }
    if (db) {
        T* dbd = db->data();
        for (int i = 0; i < n; ++i) {
            const T* dyrow = dyd + static_cast<std::int64_t>(i) * dout;
            for (int j = 0; j < dout; ++j) dbd[j] += dyrow[j];
        }
    }
}

}  // namespace detail

namespace serial {
template <typename T>
void dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b, TensorT<T>& y) {
    detail::dense_forward_impl(x, w, b, y, false);
}
template <typename T>
void dense_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& dx,
                    TensorT<T>& dw, TensorT<T>* db) {
    detail::dense_backward_impl(dy, x, w, dx, dw, db, false);
}
}  // namespace serial

namespace par_impl {
template <typename T>
void dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b, TensorT<T>& y) {
    detail::dense_forward_impl(x, w, b, y, true);
}
template <typename T>
void dense_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& dx,
                    TensorT<T>& dw, TensorT<T>* db) {
    detail::dense_backward_impl(dy, x, w, dx, dw, db, true);
}
}  // namespace par_impl

template <typename T>
void dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b, TensorT<T>& y) {
    detail::dense_forward_impl(x, w, b, y, par::enabled());
}

template <typename T>
void dense_backward(const TensorT<T>& dy, const TensorT<T>& x, const TensorT<T>& w, TensorT<T>& dx,
                    TensorT<T>& dw, TensorT<T>* db) {
    detail::dense_backward_impl(dy, x, w, dx, dw, db, par::enabled());
}

}  // namespace splicedet::kernels
