#include "splicedet/backbone/fpn.hpp"

#include "splicedet/core/error.hpp"

namespace splicedet::backbone {

using core::Tensor;

Fpn::Fpn(const std::array<int, 4>& in_channels, int out_channels, core::Rng& rng,
         nn::ParamRegistry& reg, const std::string& prefix)
    : out_channels_(out_channels) {
    for (int i = 0; i < 4; ++i) {
        const std::string level = std::to_string(i + 2);
        lateral_[static_cast<size_t>(i)].build(prefix + ".lateral" + level, in_channels[static_cast<size_t>(i)],
                                               out_channels, 1, 1, 0, /*bias=*/true, rng, reg);
        smooth_[static_cast<size_t>(i)].build(prefix + ".smooth" + level, out_channels, out_channels, 3, 1,
                                              1, /*bias=*/true, rng, reg);
    }
}

Fpn::Pyramid Fpn::forward(const std::array<Tensor, 4>& c, Cache* cache) const {
    for (int i = 0; i < 3; ++i)
        check(c[static_cast<size_t>(i)].dim(2) == 2 * c[static_cast<size_t>(i) + 1].dim(2) &&
                  c[static_cast<size_t>(i)].dim(3) == 2 * c[static_cast<size_t>(i) + 1].dim(3),
              "fpn: stage spatial sizes must halve from C2 to C5");

    std::array<Tensor, 4> merged;
    for (int i = 3; i >= 0; --i) {
        Tensor lat = lateral_[static_cast<size_t>(i)].forward(c[static_cast<size_t>(i)],
                                                              cache ? &cache->lateral[static_cast<size_t>(i)] : nullptr);
        if (i < 3) {
            Tensor up;
            kernels::upsample2x_forward(merged[static_cast<size_t>(i) + 1], up);
            check(up.same_shape(lat), "fpn: upsample shape mismatch");
            for (std::int64_t k = 0; k < lat.numel(); ++k) lat[k] += up[k];
        }
        merged[static_cast<size_t>(i)] = std::move(lat);
    }
    Pyramid out;
    for (int i = 0; i < 4; ++i) {
        if (cache) cache->merged[static_cast<size_t>(i)] = merged[static_cast<size_t>(i)];
        out.p[static_cast<size_t>(i)] = smooth_[static_cast<size_t>(i)].forward(
            merged[static_cast<size_t>(i)], cache ? &cache->smooth[static_cast<size_t>(i)] : nullptr);
    }
    kernels::subsample2x_forward(out.p[3], out.p[4]);
    return out;
}

std::array<Tensor, 4> Fpn::backward(const std::array<Tensor, 5>& d_p, const Cache& cache) {
    // Fold the P6 gradient back onto P5.
    std::array<Tensor, 4> dp;  // gradients on P2..P5
    for (int i = 0; i < 4; ++i) {
        const auto& g = d_p[static_cast<size_t>(i)];
        dp[static_cast<size_t>(i)] =
            g.empty() ? Tensor({1, out_channels_, cache.merged[static_cast<size_t>(i)].dim(2),
                                cache.merged[static_cast<size_t>(i)].dim(3)})
                      : g;
    }
    if (!d_p[4].empty()) {
        kernels::subsample2x_backward(d_p[4], dp[3].shape(), dp[3]);
    }

    // Merged-map gradients flow bottom-up: each m feeds its smoothing conv and
    // the upsample into the level below.
    std::array<Tensor, 4> dm;
    std::array<Tensor, 4> dc;
    for (int i = 0; i < 4; ++i) {
        dm[static_cast<size_t>(i)] = smooth_[static_cast<size_t>(i)].backward(dp[static_cast<size_t>(i)],
                                                                              cache.smooth[static_cast<size_t>(i)]);
        if (i > 0) {
            kernels::upsample2x_backward(dm[static_cast<size_t>(i) - 1],
                                         cache.merged[static_cast<size_t>(i)].shape(), dm[static_cast<size_t>(i)]);
        }
        dc[static_cast<size_t>(i)] = lateral_[static_cast<size_t>(i)].backward(dm[static_cast<size_t>(i)],
                                                                               cache.lateral[static_cast<size_t>(i)]);
    }
    return dc;
}

}  // namespace splicedet::backbone
