#pragma once

#include <array>
#include <string>
#include <vector>

#include "splicedet/nn/layers.hpp"

namespace splicedet::backbone {

using core::Rng;
using core::Tensor;

struct StageRow {
    enum class Op { standard_conv, depthwise_separable };
    Op op = Op::depthwise_separable;
    int out_channels = 0;
    int repeat = 1;
    int stride = 1;
};

/// The MobileNet V1 stage table: an initial standard conv followed by 13
/// depthwise-separable rows, final output at stride 32 with 1024 channels.
std::vector<StageRow> default_stage_spec();

struct BackboneConfig {
    double depth_multiplier = 1.0;       // scales channel counts, (0,1]
    double resolution_multiplier = 1.0;  // scales input resolution, (0,1]
    std::vector<StageRow> stage_spec = default_stage_spec();

    void validate() const;
};

/// Channel count after the depth multiplier: nearest multiple of 8, never
/// below 8, so scaled widths stay hardware-friendly and never error out.
int round_channels(int channels, double multiplier);

/// One depthwise-separable application: exactly one k x k kernel per input
/// channel (no cross-channel mixing), then a 1x1 pointwise fusion.
/// x: [N,C,H,W], dw_kernel: [C,k,k], pw_kernel: [Cout,C] -> [N,Cout,Ho,Wo]
template <typename T>
core::TensorT<T> depthwise_separable_forward(const core::TensorT<T>& x,
                                             const core::TensorT<T>& dw_kernel,
                                             const core::TensorT<T>& pw_kernel, int stride) {
    check(dw_kernel.ndim() == 3 && pw_kernel.ndim() == 2, "dsc: bad kernel shapes");
    check(x.dim(1) == dw_kernel.dim(0), "dsc: channel mismatch between input and depthwise kernel");
    check(pw_kernel.dim(1) == x.dim(1), "dsc: pointwise kernel must fuse the input channels");
    const int pad = dw_kernel.dim(1) / 2;
    core::TensorT<T> mid;
    kernels::depthwise_forward(x, dw_kernel, stride, pad, mid);
    core::TensorT<T> w1x1 = pw_kernel;
    w1x1.reshape({pw_kernel.dim(0), pw_kernel.dim(1), 1, 1});
    core::TensorT<T> out;
    kernels::conv2d_forward(mid, w1x1, static_cast<const core::TensorT<T>*>(nullptr), 1, 0, out);
    return out;
}

/// Five stride-doubling stage outputs (C1 at stride 2 ... C5 at stride 32).
struct StageOutputs {
    std::array<Tensor, 5> c;  // c[0] = C1 ... c[4] = C5
};

class MobileNetV1 {
public:
    MobileNetV1(const BackboneConfig& config, Rng& rng, nn::ParamRegistry& reg,
                const std::string& prefix = "backbone");

    struct BlockCache {
        nn::DepthwiseConv2d::Cache dw;
        nn::BatchNorm::Cache bn1;
        nn::BatchNorm::FrozenCache fbn1;
        Tensor pre_act1;
        nn::Conv2d::Cache pw;
        nn::BatchNorm::Cache bn2;
        nn::BatchNorm::FrozenCache fbn2;
        Tensor pre_act2;
    };
    struct Cache {
        nn::Conv2d::Cache stem;
        nn::BatchNorm::Cache stem_bn;
        nn::BatchNorm::FrozenCache stem_fbn;
        Tensor stem_pre_act;
        std::vector<BlockCache> blocks;
        bool bn_batch_stats = true;
    };

    /// x: [1,3,H,W] with H,W divisible by 32. Cache may be null in inference.
    /// bn_batch_stats = false keeps the moving statistics fixed (frozen BN).
    /// In inference (training = false, cache null) bn_batch_stats = true
    /// normalizes with the statistics of the image itself, without updating
    /// the moving averages.
    StageOutputs forward(const Tensor& x, bool training, Cache* cache, bool bn_batch_stats = true);

    /// Accumulates parameter gradients from the per-stage output gradients.
    /// d_stages entries may be empty tensors (treated as zero).
    void backward(const StageOutputs& d_stages, const Cache& cache);

    int stage_channels(int stage_1based) const { return stage_channels_.at(static_cast<size_t>(stage_1based - 1)); }

private:
    struct Block {
        nn::DepthwiseConv2d dw;
        nn::BatchNorm bn1;
        nn::Conv2d pw;
        nn::BatchNorm bn2;
        int out_channels = 0;
    };

    nn::Conv2d stem_;
    nn::BatchNorm stem_bn_;
    std::vector<Block> blocks_;
    std::array<int, 5> stage_block_;  // block index (0 = stem) ending each stage
    std::array<int, 5> stage_channels_;
};

}  // namespace splicedet::backbone
