#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "splicedet/core/rng.hpp"
#include "splicedet/eval/metrics.hpp"
#include "splicedet/roi/roi_heads.hpp"

using namespace splicedet;
using namespace splicedet::roi;
using core::MaskU8;
using core::Rng;
using core::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

double tensor_max_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
    return worst;
}

}  // namespace

TEST_CASE("level_for_box maps area to pyramid levels") {
    // 224^2 at canonical settings lands on P4 (index 2).
    CHECK(level_for_box({0, 0, 224, 224}) == 2);
    CHECK(level_for_box({0, 0, 32, 32}) == 0);     // small boxes on P2
    CHECK(level_for_box({0, 0, 900, 900}) == 3);   // huge boxes clamp at P5
}

TEST_CASE("assign_and_sample_rois: proposals equal to GT are foreground with zero deltas") {
    Rng rng(3);
    std::vector<rpn::Box> gt = {{10, 10, 40, 40}, {50, 20, 90, 70}};
    std::vector<MaskU8> gt_masks;
    for (const auto& b : gt) {
        MaskU8 m(100, 100);
        for (int y = static_cast<int>(b.y1); y < static_cast<int>(b.y2); ++y)
            for (int x = static_cast<int>(b.x1); x < static_cast<int>(b.x2); ++x) m.at(y, x) = 1;
        gt_masks.push_back(m);
    }
    RoiSamplerConfig cfg;
    cfg.n = 8;
    const auto samples = assign_and_sample_rois(gt, gt, gt_masks, cfg, rng);
    REQUIRE(samples.size() == 2);
    for (const auto& s : samples) {
        CHECK(s.label == 1);
        for (double d : s.box_target) CHECK(std::abs(d) < 1e-9);
        CHECK(s.mask_target.numel() == 28 * 28);
    }
}

TEST_CASE("assign_and_sample_rois: 512 budget at 1:3 gives 128 fg / 384 bg") {
    Rng rng(11);
    std::vector<rpn::Box> gt = {{100, 100, 200, 200}};
    MaskU8 gm(512, 512);
    for (int y = 100; y < 200; ++y)
        for (int x = 100; x < 200; ++x) gm.at(y, x) = 1;

    std::vector<rpn::Box> proposals;
    for (int i = 0; i < 400; ++i) {
        // jittered copies of the GT: all IoU >= 0.5
        const double dx = rng.uniform(-8, 8), dy = rng.uniform(-8, 8);
        proposals.push_back({100 + dx, 100 + dy, 200 + dx, 200 + dy});
    }
    for (int i = 0; i < 800; ++i) {
        const double x1 = rng.uniform(250, 450), y1 = rng.uniform(250, 450);
        proposals.push_back({x1, y1, x1 + 30, y1 + 30});  // far from GT
    }
    RoiSamplerConfig cfg;
    cfg.n = 512;
    cfg.pos_fraction = 0.25;
    const auto samples = assign_and_sample_rois(proposals, gt, {gm}, cfg, rng);
    int fg = 0, bg = 0;
    for (const auto& s : samples) (s.label == 1 ? fg : bg)++;
    CHECK(fg == 128);
    CHECK(bg == 384);
}

TEST_CASE("assign_and_sample_rois: empty proposals mean an empty sample") {
    Rng rng(5);
    RoiSamplerConfig cfg;
    CHECK(assign_and_sample_rois({}, {}, {}, cfg, rng).empty());
}

TEST_CASE("mask target: crop of a covering proposal round-trips with IoU >= 0.9") {
    // GT region: a 60x80 rectangle inside a 128x128 image.
    MaskU8 gt(128, 128);
    for (int y = 30; y < 90; ++y)
        for (int x = 20; x < 100; ++x) gt.at(y, x) = 1;
    const rpn::Box proposal{16, 24, 104, 96};  // covers the GT region entirely
    const Tensor target = crop_mask_to_box(gt, proposal, 28);

    // Upsample the 28x28 target back into the proposal and compare.
    const MaskU8 pasted = paste_mask(target, proposal, 128, 128, 0.5);
    CHECK(eval::mask_iou(pasted, gt) >= 0.9);
}

TEST_CASE("box head: output shapes and uniform softmax at zero weights") {
    Rng rng(7);
    nn::ParamRegistry reg;
    BoxHead head(8, 7, 32, 2, rng, reg);
    const Tensor pooled = random_tensor({5, 8, 7, 7}, rng);
    auto out = head.forward(pooled, false, nullptr);
    CHECK(out.class_logits.shape() == std::vector<int>{5, 2});
    CHECK(out.box_deltas.shape() == std::vector<int>{5, 8});

    // Zero the classifier: logits collapse and softmax is uniform.
    reg.find("roi.box.cls.weight")->value.zero();
    reg.find("roi.box.cls.bias")->value.zero();
    out = head.forward(pooled, false, nullptr);
    for (int r = 0; r < 5; ++r) {
        CHECK(out.class_logits.at2(r, 0) == 0.0f);
        CHECK(out.class_logits.at2(r, 1) == 0.0f);
    }
}

TEST_CASE("box head: batched forward equals concatenated per-ROI forwards") {
    Rng rng(13);
    nn::ParamRegistry reg;
    BoxHead head(4, 7, 16, 2, rng, reg);
    const Tensor pooled = random_tensor({6, 4, 7, 7}, rng);
    const auto batched = head.forward(pooled, false, nullptr);

    for (int r = 0; r < 6; ++r) {
        Tensor single({1, 4, 7, 7});
        for (std::int64_t i = 0; i < single.numel(); ++i)
            single[i] = pooled[pooled.idx4(r, 0, 0, 0) + i];
        const auto one = head.forward(single, false, nullptr);
        for (int k = 0; k < 2; ++k)
            CHECK(std::abs(one.class_logits.at2(0, k) - batched.class_logits.at2(r, k)) < 1e-6);
        for (int k = 0; k < 8; ++k)
            CHECK(std::abs(one.box_deltas.at2(0, k) - batched.box_deltas.at2(r, k)) < 1e-6);
    }
}

TEST_CASE("mask head: 28x28 output in [0,1] after sigmoid, 0.5 at zero weights") {
    Rng rng(17);
    nn::ParamRegistry reg;
    MaskHead head(4, 8, 2, rng, reg);
    const Tensor pooled = random_tensor({3, 4, 14, 14}, rng);
    Tensor logits = head.forward(pooled, false, nullptr);
    CHECK(logits.shape() == std::vector<int>{3, 2, 28, 28});

    // Sigmoid probabilities live in [0,1].
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
        const float p = 1.0f / (1.0f + std::exp(-logits[i]));
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }

    // All-zero final layer: probabilities are exactly 0.5.
    reg.find("roi.mask.out.weight")->value.zero();
    reg.find("roi.mask.out.bias")->value.zero();
    logits = head.forward(pooled, false, nullptr);
    for (std::int64_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0f);
}

TEST_CASE("mask head: batched forward equals per-ROI forwards") {
    Rng rng(19);
    nn::ParamRegistry reg;
    MaskHead head(4, 8, 2, rng, reg);
    const Tensor pooled = random_tensor({4, 4, 14, 14}, rng);
    const Tensor batched = head.forward(pooled, false, nullptr);
    for (int r = 0; r < 4; ++r) {
        Tensor single({1, 4, 14, 14});
        for (std::int64_t i = 0; i < single.numel(); ++i)
            single[i] = pooled[pooled.idx4(r, 0, 0, 0) + i];
        const Tensor one = head.forward(single, false, nullptr);
        double worst = 0;
        for (std::int64_t i = 0; i < one.numel(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(one[i]) - batched[batched.idx4(r, 0, 0, 0) + i]));
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("paste_mask: full coverage, area consistency, outside-box zeros") {
    Tensor ones({28, 28});
    ones.fill(1.0f);
    const MaskU8 full = paste_mask(ones, {0, 0, 64, 64}, 64, 64, 0.5);
    CHECK(full.area() == 64 * 64);

    const rpn::Box box{10.3, 6.7, 47.9, 40.2};
    const MaskU8 pasted = paste_mask(ones, box, 64, 64, 0.5);
    const double box_area = box.area();
    const double perimeter = 2 * (box.width() + box.height());
    CHECK(std::abs(static_cast<double>(pasted.area()) - box_area) <= perimeter);

    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (x + 1.0 < box.x1 || x > box.x2 || y + 1.0 < box.y1 || y > box.y2)
                CHECK(pasted.at(y, x) == 0);
}

TEST_CASE("paste_mask: degenerate box produces an empty mask") {
    Tensor ones({28, 28});
    ones.fill(1.0f);
    const MaskU8 empty = paste_mask(ones, {10, 10, 10, 20}, 64, 64, 0.5);
    CHECK(empty.area() == 0);
}

TEST_CASE("roi_align_pyramid routes boxes to levels and pools features") {
    Rng rng(23);
    std::array<Tensor, 5> pyramid;
    const int sizes[5] = {32, 16, 8, 4, 2};
    for (int i = 0; i < 5; ++i) {
        pyramid[static_cast<size_t>(i)] = Tensor({1, 6, sizes[i], sizes[i]});
        pyramid[static_cast<size_t>(i)].fill(static_cast<float>(i + 1));
    }
    const std::vector<rpn::Box> boxes = {{4, 4, 36, 36}, {0, 0, 120, 120}};
    const auto pooled = roi_align_pyramid(pyramid, {4, 8, 16, 32, 64}, boxes, 7, 2);
    CHECK(pooled.features.shape() == std::vector<int>{2, 6, 7, 7});
    // Constant maps pool to their constant on whichever level was chosen.
    for (size_t r = 0; r < 2; ++r) {
        const float expected = static_cast<float>(pooled.level_of[r] + 1);
        CHECK(pooled.features[pooled.features.idx4(static_cast<int>(r), 0, 3, 3)] ==
              doctest::Approx(expected));
    }
}
