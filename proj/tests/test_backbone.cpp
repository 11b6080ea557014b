#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "splicedet/backbone/fpn.hpp"
#include "splicedet/backbone/mobilenet.hpp"
#include "splicedet/backbone/params.hpp"
#include "splicedet/config/run_config.hpp"
#include "splicedet/core/rng.hpp"
#include "splicedet/model/mask_rcnn.hpp"

using namespace splicedet;
using backbone::BackboneConfig;
using backbone::MobileNetV1;
using core::Rng;
using core::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

}  // namespace

TEST_CASE("stage table shapes for a 224x224x3 input") {
    Rng rng(1);
    nn::ParamRegistry reg;
    MobileNetV1 net(BackboneConfig{}, rng, reg);
    Tensor x({1, 3, 224, 224});
    x.fill(0.5f);
    const auto stages = net.forward(x, false, nullptr);
    // C1 at stride 2 with 64 channels ... C5 at stride 32 with 1024 channels.
    const int expect_hw[5] = {112, 56, 28, 14, 7};
    const int expect_c[5] = {64, 128, 256, 512, 1024};
    for (int s = 0; s < 5; ++s) {
        CHECK(stages.c[static_cast<size_t>(s)].dim(1) == expect_c[s]);
        CHECK(stages.c[static_cast<size_t>(s)].dim(2) == expect_hw[s]);
        CHECK(stages.c[static_cast<size_t>(s)].dim(3) == expect_hw[s]);
    }
}

TEST_CASE("shape invariant: ceil-division rule for inputs divisible by 32") {
    Rng rng(2);
    nn::ParamRegistry reg;
    BackboneConfig cfg;
    cfg.depth_multiplier = 0.25;  // small for speed
    MobileNetV1 net(cfg, rng, reg);
    for (const int size : {64, 96, 160}) {
        Tensor x({1, 3, size, size});
        const auto stages = net.forward(x, false, nullptr);
        for (int s = 0; s < 5; ++s) {
            const int expected = size >> (s + 1);  // ceil(size / 2^(s+1)) for divisible sizes
            CHECK(stages.c[static_cast<size_t>(s)].dim(2) == expected);
        }
    }
}

TEST_CASE("the 512-channel row repeats five times at stride 1") {
    const auto spec = backbone::default_stage_spec();
    bool found = false;
    for (const auto& row : spec)
        if (row.out_channels == 512 && row.repeat == 5) {
            CHECK(row.stride == 1);
            found = true;
        }
    CHECK(found);
}

TEST_CASE("ReLU6 invariant: every stage activation lies in [0,6]") {
    Rng rng(3);
    nn::ParamRegistry reg;
    BackboneConfig cfg;
    cfg.depth_multiplier = 0.25;
    MobileNetV1 net(cfg, rng, reg);
    const Tensor x = random_tensor({1, 3, 64, 64}, rng, 3.0);
    const auto stages = net.forward(x, false, nullptr);
    for (const auto& stage : stages.c)
        for (std::int64_t i = 0; i < stage.numel(); ++i) {
            CHECK(stage[i] >= 0.0f);
            CHECK(stage[i] <= 6.0f);
        }
}

TEST_CASE("channel rounding after the depth multiplier") {
    CHECK(backbone::round_channels(32, 1.0) == 32);
    CHECK(backbone::round_channels(32, 0.25) == 8);
    CHECK(backbone::round_channels(64, 0.75) == 48);
    CHECK(backbone::round_channels(1024, 0.5) == 512);
    CHECK(backbone::round_channels(32, 0.1) == 8);  // floor at 8, never an error
    CHECK(backbone::round_channels(100, 0.5) == 48);  // 50 -> nearest multiple of 8
}

TEST_CASE("depthwise separable: identity kernels reproduce the input") {
    Rng rng(4);
    const int c = 3;
    const Tensor x = random_tensor({1, c, 6, 7}, rng);
    Tensor dw({c, 3, 3});
    for (int ci = 0; ci < c; ++ci) dw.at3(ci, 1, 1) = 1.0f;  // centered delta
    Tensor pw({c, c});
    for (int ci = 0; ci < c; ++ci) pw.at2(ci, ci) = 1.0f;  // identity fusion
    const Tensor y = backbone::depthwise_separable_forward(x, dw, pw, 1);
    REQUIRE(y.same_shape(x));
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-6));
}

TEST_CASE("depthwise separable: constant input in the interior follows the closed form") {
    Rng rng(5);
    const int cin = 2, cout = 3;
    Tensor x({1, cin, 6, 6});
    const float v = 1.7f;
    x.fill(v);
    const Tensor dw = random_tensor({cin, 3, 3}, rng);
    const Tensor pw = random_tensor({cout, cin}, rng);
    const Tensor y = backbone::depthwise_separable_forward(x, dw, pw, 1);
    // Interior output = sum over input channels of (sum of dw kernel) * pw.
    for (int co = 0; co < cout; ++co) {
        double expected = 0;
        for (int ci = 0; ci < cin; ++ci) {
            double ksum = 0;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) ksum += dw.at3(ci, ky, kx);
            expected += ksum * pw.at2(co, ci) * v;
        }
        for (int yy = 1; yy < 5; ++yy)
            for (int xx = 1; xx < 5; ++xx)
                CHECK(y.at4(0, co, yy, xx) == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("depthwise separable matches a dense-convolution oracle on random input") {
    Rng rng(6);
    const int cin = 4, cout = 5, h = 8, w = 8;
    core::DTensor x({1, cin, h, w}), dw({cin, 3, 3}), pw({cout, cin});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal(0, 1);
    for (std::int64_t i = 0; i < dw.numel(); ++i) dw[i] = rng.normal(0, 1);
    for (std::int64_t i = 0; i < pw.numel(); ++i) pw[i] = rng.normal(0, 1);
    const core::DTensor y = backbone::depthwise_separable_forward(x, dw, pw, 1);

    // Equivalent dense convolution: W[co][ci][ky][kx] = pw[co][ci] * dw[ci][ky][kx].
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < h; ++oy)
            for (int ox = 0; ox < w; ++ox) {
                double acc = 0;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += static_cast<double>(x.at4(0, ci, iy, ix)) * dw.at3(ci, ky, kx) *
                                   pw.at2(co, ci);
                        }
                const double got = y.at4(0, co, oy, ox);
                CHECK(std::abs(got - acc) / std::max({std::abs(acc), std::abs(got), 1e-6}) < 1e-6);
            }
}

TEST_CASE("dsc_cost_ratio formula values") {
    CHECK(backbone::dsc_cost_ratio(3, 64) == doctest::Approx(0.12674).epsilon(1e-4));
    CHECK(backbone::dsc_cost_ratio(3, 100000) == doctest::Approx(1.0 / 9.0).epsilon(1e-3));
    CHECK(backbone::dsc_cost_ratio(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("measured MAC counts match the cost formula exactly") {
    for (const auto& [n_out, k] : {std::pair{64, 3}, std::pair{128, 3}, std::pair{32, 5}}) {
        const int h = 16, w = 16, cin = 32;
        const std::int64_t std_macs = backbone::measure_standard_conv_macs(h, w, cin, n_out, k);
        const std::int64_t dsc_macs = backbone::measure_dsc_macs(h, w, cin, n_out, k);
        // ratio == 1/N + 1/k^2 exactly: cross-multiplied integer identity
        // dsc * N * k^2 == std * (k^2 + N).
        CHECK(dsc_macs * static_cast<std::int64_t>(n_out) * k * k ==
              std_macs * static_cast<std::int64_t>(k * k + n_out));
        // The reduction factor lands in the expected 8-to-9x window for 3x3/64+.
        if (k == 3 && n_out >= 64) {
            const double reduction = static_cast<double>(std_macs) / static_cast<double>(dsc_macs);
            CHECK(reduction >= 7.5);
            CHECK(reduction <= 9.0);
        }
        CHECK(static_cast<double>(dsc_macs) / static_cast<double>(std_macs) ==
              doctest::Approx(backbone::dsc_cost_ratio(k, n_out)).epsilon(1e-12));
    }
}

TEST_CASE("FPN: pyramid sizes for a 512 input and constant propagation") {
    Rng rng(7);
    nn::ParamRegistry reg;
    backbone::Fpn fpn({32, 64, 96, 128}, 48, rng, reg);
    std::array<Tensor, 4> c;
    c[0] = Tensor({1, 32, 128, 128});
    c[1] = Tensor({1, 64, 64, 64});
    c[2] = Tensor({1, 96, 32, 32});
    c[3] = Tensor({1, 128, 16, 16});
    for (auto& t : c) t.fill(1.0f);
    const auto pyr = fpn.forward(c, nullptr);
    const int expected[5] = {128, 64, 32, 16, 8};
    for (int i = 0; i < 5; ++i) {
        CHECK(pyr.p[static_cast<size_t>(i)].dim(1) == 48);
        CHECK(pyr.p[static_cast<size_t>(i)].dim(2) == expected[i]);
        CHECK(pyr.p[static_cast<size_t>(i)].dim(3) == expected[i]);
    }
    // Constant stages stay spatially constant through laterals + smoothing
    // (away from the border where zero padding enters the 3x3 conv).
    for (int i = 0; i < 4; ++i) {
        const auto& p = pyr.p[static_cast<size_t>(i)];
        const float ref = p.at4(0, 7, p.dim(2) / 2, p.dim(3) / 2);
        for (int y = 2; y < p.dim(2) - 2; ++y)
            CHECK(p.at4(0, 7, y, p.dim(3) / 2) == doctest::Approx(ref).epsilon(1e-5));
    }
}

TEST_CASE("FPN rejects non-halving stage inputs") {
    Rng rng(8);
    nn::ParamRegistry reg;
    backbone::Fpn fpn({8, 8, 8, 8}, 8, rng, reg);
    std::array<Tensor, 4> c;
    c[0] = Tensor({1, 8, 61, 61});  // not 2x of the next level
    c[1] = Tensor({1, 8, 32, 32});
    c[2] = Tensor({1, 8, 16, 16});
    c[3] = Tensor({1, 8, 8, 8});
    CHECK_THROWS_AS(fpn.forward(c, nullptr), Error);
}

TEST_CASE("count_parameters: hand-counted single conv + batch norm") {
    Rng rng(9);
    nn::ParamRegistry reg;
    nn::Conv2d conv;
    conv.build("probe", 3, 32, 3, 2, 1, /*bias=*/false, rng, reg);
    nn::BatchNorm bn;
    bn.build("probe", 32, reg);
    const auto report = backbone::count_parameters(reg);
    CHECK(report.trainable == 864 + 64);      // weights + gamma/beta
    CHECK(report.non_trainable == 64);        // moving mean + var
    CHECK(report.total == report.trainable + report.non_trainable);
}

TEST_CASE("count_parameters: empty registry reports zeros") {
    nn::ParamRegistry reg;
    const auto report = backbone::count_parameters(reg);
    CHECK(report.total == 0);
    CHECK(report.trainable == 0);
    CHECK(report.non_trainable == 0);
}

namespace {

// Independent analytic layer-by-layer count of the full model at width 1.
struct AnalyticCount {
    std::int64_t trainable = 0;
    std::int64_t non_trainable = 0;
};

AnalyticCount analytic_full_model_count(int num_classes, int ratios, int fpn_c, int rpn_c,
                                        int box_dim, int mask_c) {
    AnalyticCount a;
    auto bn = [&](int c) {
        a.trainable += 2 * c;      // gamma, beta
        a.non_trainable += 2 * c;  // moving mean, var
    };
    // Stem.
    a.trainable += 3 * 32 * 9;
    bn(32);
    // Depthwise-separable blocks (out_c, stride) expanded from the table.
    const int outs[] = {64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512, 1024, 1024};
    int in_c = 32;
    for (int out_c : outs) {
        a.trainable += in_c * 9;  // depthwise 3x3
        bn(in_c);
        a.trainable += in_c * out_c;  // pointwise
        bn(out_c);
        in_c = out_c;
    }
    // FPN laterals + smoothing (bias, no BN).
    const int c_stage[] = {128, 256, 512, 1024};
    for (int cs : c_stage) a.trainable += cs * fpn_c + fpn_c;
    for (int i = 0; i < 4; ++i) a.trainable += fpn_c * fpn_c * 9 + fpn_c;
    // RPN head.
    a.trainable += fpn_c * rpn_c * 9 + rpn_c;
    a.trainable += rpn_c * 2 * ratios + 2 * ratios;
    a.trainable += rpn_c * 4 * ratios + 4 * ratios;
    // Box head: two FC (+BN) and the two output layers.
    a.trainable += fpn_c * 7 * 7 * box_dim + box_dim;
    a.trainable += 2 * box_dim;
    a.non_trainable += 2 * box_dim;
    a.trainable += box_dim * box_dim + box_dim;
    a.trainable += 2 * box_dim;
    a.non_trainable += 2 * box_dim;
    a.trainable += box_dim * num_classes + num_classes;
    a.trainable += box_dim * num_classes * 4 + num_classes * 4;
    // Mask head: four 3x3 convs with bias + BN, deconv, 1x1 output.
    int mc_in = fpn_c;
    for (int i = 0; i < 4; ++i) {
        a.trainable += mc_in * mask_c * 9 + mask_c;
        a.trainable += 2 * mask_c;
        a.non_trainable += 2 * mask_c;
        mc_in = mask_c;
    }
    a.trainable += mask_c * mask_c * 4 + mask_c;  // 2x2 deconv
    a.trainable += mask_c * num_classes + num_classes;
    return a;
}

}  // namespace

TEST_CASE("full model parameter accounting matches the analytic count exactly") {
    config::RunConfig cfg;
    model::MaskRcnn model(cfg);
    const auto report = backbone::count_parameters(model.params());
    const AnalyticCount a = analytic_full_model_count(2, 3, 256, 512, 1024, 256);

    CHECK(report.trainable == a.trainable);
    CHECK(report.non_trainable == a.non_trainable);
    CHECK(report.total == report.trainable + report.non_trainable);

    // Reference totals for this architecture.
    const std::int64_t reference_total = 23812574;
    const std::int64_t reference_non_trainable = 28032;
    CHECK(std::abs(report.total - reference_total) <=
          static_cast<std::int64_t>(0.02 * reference_total));
    CHECK(std::abs(report.non_trainable - reference_non_trainable) <=
          static_cast<std::int64_t>(0.05 * reference_non_trainable));
}

TEST_CASE("parameter report is reproducible across reconstruction") {
    config::RunConfig cfg;
    cfg.depth_multiplier = 1.0;
    model::MaskRcnn m1(cfg);
    model::MaskRcnn m2(cfg);
    CHECK(backbone::count_parameters(m1.params()).total ==
          backbone::count_parameters(m2.params()).total);
}
