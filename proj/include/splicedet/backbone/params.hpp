#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splicedet/nn/layers.hpp"

namespace splicedet::backbone {

struct ParameterReport {
    struct Row {
        std::string name;
        std::int64_t count = 0;
        bool trainable = true;
    };
    std::int64_t total = 0;
    std::int64_t trainable = 0;
    std::int64_t non_trainable = 0;
    std::vector<Row> per_layer;
};

/// Counts every learned tensor in the registry. Batch-norm moving statistics
/// are the non-trainable share; total = trainable + non_trainable.
ParameterReport count_parameters(const nn::ParamRegistry& reg);

// Multiply-accumulate cost model for depthwise-separable vs standard conv.

/// Relative MAC cost of a depthwise-separable layer against a standard
/// convolution of the same shape: 1/N + 1/Dk^2.
double dsc_cost_ratio(int kernel_size, int out_channels);

/// MACs counted by walking the loop nest (zero-padded taps included, so the
/// count reflects the arithmetic the layer performs, not the formula).
std::int64_t measure_standard_conv_macs(int h, int w, int in_c, int out_c, int k);
std::int64_t measure_dsc_macs(int h, int w, int in_c, int out_c, int k);

}  // namespace splicedet::backbone
