#pragma once

#include <array>
#include <string>

#include "splicedet/nn/layers.hpp"

namespace splicedet::backbone {

/// Feature pyramid over C2..C5: 1x1 laterals, top-down nearest upsampling,
/// 3x3 smoothing, and P6 as a stride-2 subsample of P5. All levels share
/// out_channels. Levels P2..P6 live at strides 4, 8, 16, 32, 64.
class Fpn {
public:
    Fpn(const std::array<int, 4>& in_channels /*C2..C5*/, int out_channels, core::Rng& rng,
        nn::ParamRegistry& reg, const std::string& prefix = "fpn");

    struct Pyramid {
        std::array<core::Tensor, 5> p;  // p[0] = P2 ... p[4] = P6
        static constexpr std::array<int, 5> strides{4, 8, 16, 32, 64};
    };

    struct Cache {
        std::array<nn::Conv2d::Cache, 4> lateral;
        std::array<nn::Conv2d::Cache, 4> smooth;
        std::array<core::Tensor, 4> merged;  // m2..m5 (inputs to the smoothing convs)
    };

    Pyramid forward(const std::array<core::Tensor, 4>& c /*C2..C5*/, Cache* cache) const;

    /// d_p: gradients for P2..P6 (empty = zero). Returns gradients for C2..C5.
    std::array<core::Tensor, 4> backward(const std::array<core::Tensor, 5>& d_p, const Cache& cache);

    int out_channels() const { return out_channels_; }

private:
    std::array<nn::Conv2d, 4> lateral_;
    std::array<nn::Conv2d, 4> smooth_;
    int out_channels_ = 0;
};

}  // namespace splicedet::backbone
