#include "splicedet/backbone/params.hpp"

#include "splicedet/core/error.hpp"

namespace splicedet::backbone {

ParameterReport count_parameters(const nn::ParamRegistry& reg) {
    ParameterReport report;
    for (const auto* p : reg.all()) {
        ParameterReport::Row row;
        row.name = p->name;
        row.count = p->count();
        row.trainable = p->trainable;
        report.per_layer.push_back(row);
        report.total += row.count;
        if (p->trainable) report.trainable += row.count;
        else report.non_trainable += row.count;
    }
    return report;
}

double dsc_cost_ratio(int kernel_size, int out_channels) {
    check(kernel_size >= 1 && out_channels >= 1, "dsc_cost_ratio: arguments must be >= 1");
    return 1.0 / out_channels + 1.0 / (static_cast<double>(kernel_size) * kernel_size);
}

std::int64_t measure_standard_conv_macs(int h, int w, int in_c, int out_c, int k) {
    std::int64_t macs = 0;
    for (int co = 0; co < out_c; ++co)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < in_c; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) ++macs;
    return macs;
}

std::int64_t measure_dsc_macs(int h, int w, int in_c, int out_c, int k) {
    std::int64_t macs = 0;
    // Depthwise pass: one k x k kernel per input channel.
    for (int ci = 0; ci < in_c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) ++macs;
    // Pointwise pass: 1x1 channel fusion.
    for (int co = 0; co < out_c; ++co)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < in_c; ++ci) ++macs;
    return macs;
}

}  // namespace splicedet::backbone
