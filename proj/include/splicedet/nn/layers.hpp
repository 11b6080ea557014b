#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "splicedet/core/error.hpp"
#include "splicedet/core/rng.hpp"
#include "splicedet/core/tensor.hpp"
#include "splicedet/kernels/batchnorm.hpp"
#include "splicedet/kernels/conv2d.hpp"
#include "splicedet/kernels/conv_transpose.hpp"
#include "splicedet/kernels/dense.hpp"
#include "splicedet/kernels/depthwise.hpp"
#include "splicedet/kernels/elementwise.hpp"

namespace splicedet::nn {

using core::Rng;
using core::Tensor;

/// A learned tensor plus its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;     // moving BN statistics are not
    bool weight_decay = true;  // off for BN gamma/beta and all biases

    void init(std::string param_name, std::vector<int> shape, bool is_trainable, bool decays) {
        name = std::move(param_name);
        value = Tensor(std::move(shape));
        grad = Tensor::zeros_like(value);
        trainable = is_trainable;
        weight_decay = decays;
    }
    void zero_grad() { grad.zero(); }
    std::int64_t count() const { return value.numel(); }
};

/// Flat list of every parameter in deterministic construction order. The
/// optimizer, the checkpoint writer, and the parameter accounting all walk it.
class ParamRegistry {
public:
    void add(Param& p) { params_.push_back(&p); }
    const std::vector<Param*>& all() const { return params_; }
    std::vector<Param*>& all() { return params_; }

    Param* find(const std::string& name) {
        for (auto* p : params_)
            if (p->name == name) return p;
        return nullptr;
    }
    void zero_grads() {
        for (auto* p : params_) p->zero_grad();
    }

private:
    std::vector<Param*> params_;
};

inline void he_normal_init(Tensor& t, double fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------

struct Conv2d {
    Param w, b;
    int stride = 1, pad = 0;
    bool has_bias = true;

    // init_std > 0 selects a fixed-variance Gaussian (the prediction layers
    // use 0.01-scale weights); otherwise fan-in scaled init.
    void build(const std::string& name, int in_c, int out_c, int k, int stride_, int pad_,
               bool bias, Rng& rng, ParamRegistry& reg, double init_std = 0.0) {
        stride = stride_;
        pad = pad_;
        has_bias = bias;
        w.init(name + ".weight", {out_c, in_c, k, k}, true, true);
        if (init_std > 0.0)
            for (std::int64_t i = 0; i < w.value.numel(); ++i)
                w.value[i] = static_cast<float>(rng.normal(0.0, init_std));
        else
            he_normal_init(w.value, static_cast<double>(in_c) * k * k, rng);
        reg.add(w);
        if (bias) {
            b.init(name + ".bias", {out_c}, true, false);
            reg.add(b);
        }
    }

    struct Cache { Tensor x; };

    Tensor forward(const Tensor& x, Cache* cache) const {
        if (cache) cache->x = x;
        Tensor y;
        kernels::conv2d_forward(x, w.value, has_bias ? &b.value : nullptr, stride, pad, y);
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cache) {
        Tensor dx(cache.x.shape());
        kernels::conv2d_backward_input(dy, w.value, stride, pad, cache.x.shape(), dx);
        kernels::conv2d_backward_params(dy, cache.x, stride, pad, w.grad,
                                        has_bias ? &b.grad : nullptr);
        return dx;
    }
};

struct DepthwiseConv2d {
    Param w;
    int stride = 1, pad = 1;

    void build(const std::string& name, int channels, int k, int stride_, int pad_, Rng& rng,
               ParamRegistry& reg) {
        stride = stride_;
        pad = pad_;
        w.init(name + ".weight", {channels, k, k}, true, true);
        he_normal_init(w.value, static_cast<double>(k) * k, rng);
        reg.add(w);
    }

    struct Cache { Tensor x; };

    Tensor forward(const Tensor& x, Cache* cache) const {
        if (cache) cache->x = x;
        Tensor y;
        kernels::depthwise_forward(x, w.value, stride, pad, y);
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cache) {
        Tensor dx(cache.x.shape());
        kernels::depthwise_backward_input(dy, w.value, stride, pad, cache.x.shape(), dx);
        kernels::depthwise_backward_params(dy, cache.x, stride, pad, w.grad);
        return dx;
    }
};

struct ConvTranspose2d {
    Param w, b;
    int stride = 2;

    void build(const std::string& name, int in_c, int out_c, int k, int stride_, Rng& rng,
               ParamRegistry& reg) {
        stride = stride_;
        w.init(name + ".weight", {in_c, out_c, k, k}, true, true);
        he_normal_init(w.value, static_cast<double>(in_c) * k * k, rng);
        reg.add(w);
        b.init(name + ".bias", {out_c}, true, false);
        reg.add(b);
    }

    struct Cache { Tensor x; };

    Tensor forward(const Tensor& x, Cache* cache) const {
        if (cache) cache->x = x;
        Tensor y;
        kernels::conv_transpose2d_forward(x, w.value, &b.value, stride, y);
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cache) {
        Tensor dx(cache.x.shape());
        kernels::conv_transpose2d_backward(dy, cache.x, w.value, stride, dx, w.grad, &b.grad);
        return dx;
    }
};

struct Dense {
    Param w, b;

    void build(const std::string& name, int in_dim, int out_dim, Rng& rng, ParamRegistry& reg,
               double init_std = 0.0) {
        w.init(name + ".weight", {in_dim, out_dim}, true, true);
        if (init_std > 0.0)
            for (std::int64_t i = 0; i < w.value.numel(); ++i)
                w.value[i] = static_cast<float>(rng.normal(0.0, init_std));
        else
            he_normal_init(w.value, static_cast<double>(in_dim), rng);
        reg.add(w);
        b.init(name + ".bias", {out_dim}, true, false);
        reg.add(b);
    }

    struct Cache { Tensor x; };

    Tensor forward(const Tensor& x, Cache* cache) const {
        if (cache) cache->x = x;
        Tensor y;
        kernels::dense_forward(x, w.value, &b.value, y);
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cache) {
        Tensor dx(cache.x.shape());
        kernels::dense_backward(dy, cache.x, w.value, dx, w.grad, &b.grad);
        return dx;
    }
};

/// Batch normalization over [N,C,spatial]. Training mode normalizes with the
/// batch statistics and updates the moving averages (momentum 0.9); inference
/// uses the stored moving statistics and is const.
struct BatchNorm {
    Param gamma, beta, moving_mean, moving_var;
    float eps = 1e-5f;
    float momentum = 0.9f;

    void build(const std::string& name, int channels, ParamRegistry& reg) {
        gamma.init(name + ".bn_gamma", {channels}, true, false);
        gamma.value.fill(1.0f);
        beta.init(name + ".bn_beta", {channels}, true, false);
        moving_mean.init(name + ".bn_mean", {channels}, false, false);
        moving_var.init(name + ".bn_var", {channels}, false, false);
        moving_var.value.fill(1.0f);
        reg.add(gamma);
        reg.add(beta);
        reg.add(moving_mean);
        reg.add(moving_var);
    }

    struct Cache { kernels::BnCache<float> k; };
    /// Frozen-mode cache: moving statistics are used even in training, so the
    /// backward pass only needs the input and the constant normalizers.
    struct FrozenCache {
        Tensor x;
        int n = 0, c = 0, s = 0;
    };

    // x viewed as [n, c, s]; for [N,C,H,W] pass s = H*W, for [N,C] pass s = 1.
    Tensor forward(const Tensor& x, int n, int c, int s, bool training, Cache* cache) {
        Tensor y;
        if (training) {
            check(cache != nullptr, "batchnorm: training forward needs a cache");
            std::vector<float> mean, var;
            kernels::bn_forward_train(x, n, c, s, gamma.value, beta.value, eps, y, cache->k, &mean,
                                      &var);
            for (int ci = 0; ci < c; ++ci) {
                moving_mean.value[ci] = momentum * moving_mean.value[ci] + (1.0f - momentum) * mean[static_cast<size_t>(ci)];
                moving_var.value[ci] = momentum * moving_var.value[ci] + (1.0f - momentum) * var[static_cast<size_t>(ci)];
            }
        } else {
            kernels::bn_forward_infer(x, n, c, s, gamma.value, beta.value, moving_mean.value,
                                      moving_var.value, eps, y);
        }
        return y;
    }

    Tensor forward_infer(const Tensor& x, int n, int c, int s) const {
        Tensor y;
        kernels::bn_forward_infer(x, n, c, s, gamma.value, beta.value, moving_mean.value,
                                  moving_var.value, eps, y);
        return y;
    }

    /// Fresh batch statistics without touching the moving averages; used for
    /// batch-of-one inference where the moving averages would mix images.
    Tensor forward_eval_batch(const Tensor& x, int n, int c, int s) const {
        Tensor y;
        kernels::BnCache<float> scratch;
        auto* self = const_cast<BatchNorm*>(this);
        kernels::bn_forward_train(x, n, c, s, self->gamma.value, self->beta.value, eps, y, scratch);
        return y;
    }

    Tensor forward_frozen(const Tensor& x, int n, int c, int s, FrozenCache* cache) const {
        if (cache) {
            cache->x = x;
            cache->n = n;
            cache->c = c;
            cache->s = s;
        }
        return forward_infer(x, n, c, s);
    }

    /// Backward through frozen BN: the normalization is a per-channel affine
    /// constant, so no batch-statistic coupling terms appear.
    Tensor backward_frozen(const Tensor& dy, const FrozenCache& cache) {
        const int n = cache.n, c = cache.c, s = cache.s;
        Tensor dx(dy.shape());
        for (int ci = 0; ci < c; ++ci) {
            const float inv_std = 1.0f / std::sqrt(moving_var.value[ci] + eps);
            const float mean = moving_mean.value[ci];
            const float g = gamma.value[ci];
            float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
            for (int ni = 0; ni < n; ++ni) {
                const std::int64_t base = (static_cast<std::int64_t>(ni) * c + ci) * s;
                for (int si = 0; si < s; ++si) {
                    const float d = dy[base + si];
                    sum_dy += d;
                    sum_dy_xhat += d * (cache.x[base + si] - mean) * inv_std;
                    dx[base + si] = d * g * inv_std;
                }
            }
            gamma.grad[ci] += sum_dy_xhat;
            beta.grad[ci] += sum_dy;
        }
        return dx;
    }

    Tensor backward(const Tensor& dy, const Cache& cache) {
        Tensor dx(dy.shape());
        kernels::bn_backward(dy, cache.k, gamma.value, dx, gamma.grad, beta.grad);
        return dx;
    }
};

}  // namespace splicedet::nn
