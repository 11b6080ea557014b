#pragma once

#include <cmath>
#include <vector>

#include "splicedet/core/error.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/core/tensor.hpp"

namespace splicedet::kernels {

using core::TensorT;

// Batch normalization over a [N,C,S] view (S = spatial elements per channel;
// S = 1 for the fully connected heads). Normalization uses the biased batch
// variance; the running statistics store the same quantity.

template <typename T>
struct BnCache {
    TensorT<T> xhat;          // normalized input, same shape as x
    std::vector<T> inv_std;   // per channel
    std::vector<T> mean;      // per channel
    int n = 0, c = 0, s = 0;
};

template <typename T>
void bn_forward_train(const TensorT<T>& x, int n, int c, int s, const TensorT<T>& gamma,
                      const TensorT<T>& beta, T eps, TensorT<T>& y, BnCache<T>& cache,
                      std::vector<T>* batch_mean = nullptr, std::vector<T>* batch_var = nullptr) {
    check(x.numel() == static_cast<std::int64_t>(n) * c * s, "bn: bad view dims");
    y = TensorT<T>(x.shape());
    cache.xhat = TensorT<T>(x.shape());
    cache.inv_std.assign(static_cast<size_t>(c), T(0));
    cache.mean.assign(static_cast<size_t>(c), T(0));
    cache.n = n; cache.c = c; cache.s = s;
    if (batch_mean) batch_mean->assign(static_cast<size_t>(c), T(0));
    if (batch_var) batch_var->assign(static_cast<size_t>(c), T(0));
    const T m = static_cast<T>(n) * static_cast<T>(s);
    const T* xd = x.data();
    T* yd = y.data();
    T* xh = cache.xhat.data();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int ci = 0; ci < c; ++ci) {
        T sum = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si) sum += xd[base + si];
        }
        const T mean = sum / m;
        T var = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si) {
                const T d = xd[base + si] - mean;
                var += d * d;
            }
        }
        var /= m;
        const T inv_std = T(1) / std::sqrt(var + eps);
        cache.mean[static_cast<size_t>(ci)] = mean;
        cache.inv_std[static_cast<size_t>(ci)] = inv_std;
        if (batch_mean) (*batch_mean)[static_cast<size_t>(ci)] = mean;
        if (batch_var) (*batch_var)[static_cast<size_t>(ci)] = var;
        const T g = gamma[ci], b = beta[ci];
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si) {
                const T nx = (xd[base + si] - mean) * inv_std;
                xh[base + si] = nx;
                yd[base + si] = g * nx + b;
            }
        }
    }
}

template <typename T>
void bn_forward_infer(const TensorT<T>& x, int n, int c, int s, const TensorT<T>& gamma,
                      const TensorT<T>& beta, const TensorT<T>& run_mean, const TensorT<T>& run_var,
                      T eps, TensorT<T>& y) {
    check(x.numel() == static_cast<std::int64_t>(n) * c * s, "bn: bad view dims");
    y = TensorT<T>(x.shape());
    const T* xd = x.data();
    T* yd = y.data();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int ci = 0; ci < c; ++ci) {
        const T inv_std = T(1) / std::sqrt(run_var[ci] + eps);
        const T g = gamma[ci], b = beta[ci], mean = run_mean[ci];
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si) yd[base + si] = g * (xd[base + si] - mean) * inv_std + b;
        }
    }
}

// Gradient of training-mode BN; flows through the batch statistics.
template <typename T>
void bn_backward(const TensorT<T>& dy, const BnCache<T>& cache, const TensorT<T>& gamma,
                 TensorT<T>& dx, TensorT<T>& dgamma, TensorT<T>& dbeta) {
    const int n = cache.n, c = cache.c, s = cache.s;
    if (!dx.same_shape(dy)) dx = TensorT<T>(dy.shape());
    const T m = static_cast<T>(n) * static_cast<T>(s);
    const T* dyd = dy.data();
    const T* xh = cache.xhat.data();
    T* dxd = dx.data();
#pragma omp parallel for schedule(static) if (par::enabled())
    for (int ci = 0; ci < c; ++ci) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si) {
                sum_dy += dyd[base + si];
                sum_dy_xhat += dyd[base + si] * xh[base + si];
            }
        }
        dgamma[ci] += sum_dy_xhat;
        dbeta[ci] += sum_dy;
        const T g = gamma[ci], inv_std = cache.inv_std[static_cast<size_t>(ci)];
        const T k = g * inv_std / m;
        for (int ni = 0; ni < n; ++ni) {
            const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
            for (int si = 0; si < s; ++si)
                dxd[base + si] += k * (m * dyd[base + si] - sum_dy - xh[base + si] * sum_dy_xhat);
        }
    }
}

}  // namespace splicedet::kernels
