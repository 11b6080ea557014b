#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "splicedet/core/rng.hpp"
#include "splicedet/core/error.hpp"
#include "splicedet/eval/metrics.hpp"

using namespace splicedet;
using namespace splicedet::eval;
using core::MaskU8;
using core::Rng;

namespace {

MaskU8 rect_mask(int h, int w, int y1, int x1, int y2, int x2) {
    MaskU8 m(h, w);
    for (int y = y1; y < y2; ++y)
        for (int x = x1; x < x2; ++x) m.at(y, x) = 1;
    return m;
}

PredRegion pred_of(const MaskU8& mask, double score) {
    PredRegion r;
    r.mask = mask;
    r.score = score;
    int min_x = mask.w, min_y = mask.h, max_x = -1, max_y = -1;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
    r.box = {static_cast<double>(min_x), static_cast<double>(min_y),
             static_cast<double>(max_x + 1), static_cast<double>(max_y + 1)};
    return r;
}

GtRegion gt_of(const MaskU8& mask) {
    const PredRegion p = pred_of(mask, 1.0);
    GtRegion g;
    g.mask = p.mask;
    g.box = p.box;
    return g;
}

}  // namespace

TEST_CASE("mask_iou: identical, disjoint, half-overlapping, mismatched") {
    const MaskU8 a = rect_mask(20, 20, 0, 0, 10, 10);
    CHECK(mask_iou(a, a) == doctest::Approx(1.0));
    const MaskU8 b = rect_mask(20, 20, 10, 10, 20, 20);
    CHECK(mask_iou(a, b) == 0.0);

    // Equal areas of 100, overlapping by 50 -> 50 / 150.
    const MaskU8 c = rect_mask(20, 20, 0, 0, 10, 10);
    const MaskU8 d = rect_mask(20, 20, 0, 5, 10, 15);
    CHECK(mask_iou(c, d) == doctest::Approx(1.0 / 3.0));

    const MaskU8 wrong(10, 10);
    CHECK_THROWS_AS(mask_iou(a, wrong), ShapeError);
}

TEST_CASE("match_detections: exact hit, duplicate penalty") {
    const MaskU8 gt_mask = rect_mask(32, 32, 4, 4, 20, 20);
    const std::vector<GtRegion> gts = {gt_of(gt_mask)};
    {
        const auto m = match_detections({pred_of(gt_mask, 0.9)}, gts, 0.5, IouKind::kMask);
        CHECK(m.tp == 1);
        CHECK(m.fp == 0);
        CHECK(m.fn == 0);
    }
    {
        const auto m = match_detections({pred_of(gt_mask, 0.9), pred_of(gt_mask, 0.8)}, gts, 0.5,
                                        IouKind::kMask);
        CHECK(m.tp == 1);  // one-to-one
        CHECK(m.fp == 1);
    }
}

TEST_CASE("match_detections: random instance equals the exhaustive greedy oracle") {
    Rng rng(31);
    const int image = 48;
    std::vector<GtRegion> gts;
    for (int g = 0; g < 5; ++g) {
        const int x1 = static_cast<int>(rng.randint(28)), y1 = static_cast<int>(rng.randint(28));
        gts.push_back(gt_of(rect_mask(image, image, y1, x1, y1 + 12, x1 + 12)));
    }
    std::vector<PredRegion> preds;
    for (int p = 0; p < 20; ++p) {
        const int x1 = static_cast<int>(rng.randint(30)), y1 = static_cast<int>(rng.randint(30));
        preds.push_back(pred_of(rect_mask(image, image, y1, x1, y1 + 12, x1 + 12), rng.uniform()));
    }
    const auto got = match_detections(preds, gts, 0.3, IouKind::kMask);

    // Oracle: identical greedy rule, written against raw IoUs.
    std::vector<int> order(preds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return preds[static_cast<size_t>(a)].score > preds[static_cast<size_t>(b)].score; });
    std::vector<char> taken(gts.size(), 0);
    std::int64_t tp = 0;
    for (int pi : order) {
        double best = 0;
        int who = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = mask_iou(preds[static_cast<size_t>(pi)].mask, gts[g].mask);
            if (v > best) { best = v; who = static_cast<int>(g); }
        }
        if (who >= 0 && best >= 0.3) {
            taken[static_cast<size_t>(who)] = 1;
            ++tp;
        }
    }
    CHECK(got.tp == tp);
    CHECK(got.fp == static_cast<std::int64_t>(preds.size()) - tp);
    CHECK(got.fn == static_cast<std::int64_t>(gts.size()) - tp);
    CHECK(got.tp <= static_cast<std::int64_t>(std::min(preds.size(), gts.size())));
}

TEST_CASE("precision_recall_f1: perfect, paper relationship, degenerate") {
    const Prf perfect = precision_recall_f1(5, 0, 0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    // Counts engineered to P = 0.73, R = 0.62; F1 must land on 0.67.
    const Prf paper = precision_recall_f1(4526, 1674, 2774);
    CHECK(paper.precision == doctest::Approx(0.73));
    CHECK(paper.recall == doctest::Approx(0.62));
    CHECK(std::abs(paper.f1 - 0.67) <= 0.005);

    const Prf zero = precision_recall_f1(0, 0, 0);
    CHECK(zero.precision == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.f1 == 0.0);
}

TEST_CASE("average_precision: single correct detection scores AP 1") {
    const MaskU8 m = rect_mask(32, 32, 5, 5, 25, 25);
    ImagePredictions p;
    p.image_id = "a";
    p.height = p.width = 32;
    p.regions = {pred_of(m, 0.9)};
    ImageGroundTruth g;
    g.image_id = "a";
    g.height = g.width = 32;
    g.regions = {gt_of(m)};
    const auto ap = average_precision({p}, {g}, 0.5, IouKind::kMask);
    REQUIRE(ap.has_value());
    CHECK(*ap == doctest::Approx(1.0));
}

TEST_CASE("average_precision: hand-built PR curve for the 3-detection case") {
    // Two GT regions; detections: correct at 0.9, wrong at 0.8, correct at 0.7.
    const MaskU8 gt1 = rect_mask(64, 64, 2, 2, 18, 18);
    const MaskU8 gt2 = rect_mask(64, 64, 30, 30, 46, 46);
    const MaskU8 wrong = rect_mask(64, 64, 2, 40, 18, 56);
    ImagePredictions p;
    p.image_id = "a";
    p.height = p.width = 64;
    p.regions = {pred_of(gt1, 0.9), pred_of(wrong, 0.8), pred_of(gt2, 0.7)};
    ImageGroundTruth g;
    g.image_id = "a";
    g.height = g.width = 64;
    g.regions = {gt_of(gt1), gt_of(gt2)};

    const auto ap = average_precision({p}, {g}, 0.5, IouKind::kMask);
    REQUIRE(ap.has_value());
    // Hand-built 101-point curve: precision 1 for r <= 0.5 (51 points),
    // 2/3 beyond (50 points).
    const double expected = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101.0;
    CHECK(*ap == doctest::Approx(expected).epsilon(1e-12));

    // Exact PR integration for reference: (1.0 + 2/3) / 2 = 5/6; the
    // 101-point value sits within a point of it.
    CHECK(std::abs(*ap - 5.0 / 6.0) < 0.01);

    // Rank invariance: strictly monotone score rescaling changes nothing.
    ImagePredictions rescaled = p;
    for (auto& r : rescaled.regions) r.score = 0.1 + 0.5 * r.score * r.score;
    const auto ap2 = average_precision({rescaled}, {g}, 0.5, IouKind::kMask);
    CHECK(*ap2 == doctest::Approx(*ap).epsilon(1e-12));

    // AP is monotone non-increasing in the IoU threshold.
    double prev = 1.0;
    for (const double thr : {0.3, 0.5, 0.7, 0.9}) {
        const auto v = average_precision({p}, {g}, thr, IouKind::kMask);
        REQUIRE(v.has_value());
        CHECK(*v <= prev + 1e-12);
        prev = *v;
    }
}

TEST_CASE("average_precision: undefined without ground truth") {
    ImagePredictions p;
    p.image_id = "a";
    p.height = p.width = 16;
    ImageGroundTruth g;
    g.image_id = "a";
    g.height = g.width = 16;
    const auto ap = average_precision({p}, {g}, 0.5, IouKind::kMask);
    CHECK(!ap.has_value());
}

TEST_CASE("forged_percentage: full, half, overlapping-union, zero-area error") {
    const int h = 512, w = 512;
    MaskU8 full(h, w, 1);
    CHECK(forged_percentage({full}, h, w).total == doctest::Approx(100.0));

    MaskU8 half(h, w);
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w; ++x) half.at(y, x) = 1;
    CHECK(forged_percentage({half}, h, w).total == doctest::Approx(50.0));

    // Areas 3000 and 2000 overlapping by 1000: union 4000 of 262144 pixels.
    MaskU8 a = rect_mask(h, w, 0, 0, 30, 100);   // 3000 px
    MaskU8 b = rect_mask(h, w, 0, 50, 20, 150);  // 2000 px; overlap rows [0,20) cols [50,100)
    const auto fp = forged_percentage({a, b}, h, w);
    CHECK(fp.total == doctest::Approx(100.0 * 4000.0 / 262144.0).epsilon(1e-9));
    CHECK(fp.total == doctest::Approx(1.52587890625).epsilon(1e-6));
    CHECK(fp.per_region[0] == doctest::Approx(100.0 * 3000.0 / 262144.0));

    CHECK_THROWS_AS(forged_percentage({}, 0, 10), Error);
}

TEST_CASE("evaluate: ground truth against itself is perfect") {
    std::vector<ImagePredictions> preds;
    std::vector<ImageGroundTruth> gts;
    Rng rng(37);
    for (int i = 0; i < 4; ++i) {
        ImagePredictions p;
        ImageGroundTruth g;
        p.image_id = g.image_id = "img" + std::to_string(i);
        p.height = g.height = 48;
        p.width = g.width = 48;
        for (int k = 0; k < 3; ++k) {
            const int x1 = static_cast<int>(rng.randint(30)), y1 = static_cast<int>(rng.randint(30));
            const MaskU8 m = rect_mask(48, 48, y1, x1, y1 + 10, x1 + 10);
            p.regions.push_back(pred_of(m, 1.0));
            g.regions.push_back(gt_of(m));
        }
        preds.push_back(p);
        gts.push_back(g);
    }
    const MetricsReport report = evaluate(preds, gts, {});
    CHECK(report.precision == doctest::Approx(1.0));
    CHECK(report.recall == doctest::Approx(1.0));
    CHECK(report.f1 == doctest::Approx(1.0));
    REQUIRE(report.ap.has_value());
    CHECK(*report.ap == doctest::Approx(1.0));
    CHECK(*report.ap50 == doctest::Approx(1.0));
    CHECK(*report.ap75 == doctest::Approx(1.0));
}

TEST_CASE("evaluate: empty predictions give zero with full fn") {
    ImagePredictions p;
    p.image_id = "x";
    p.height = p.width = 32;
    ImageGroundTruth g;
    g.image_id = "x";
    g.height = g.width = 32;
    g.regions = {gt_of(rect_mask(32, 32, 0, 0, 10, 10)), gt_of(rect_mask(32, 32, 15, 15, 30, 30))};
    const MetricsReport report = evaluate({p}, {g}, {});
    CHECK(report.precision == 0.0);
    CHECK(report.recall == 0.0);
    CHECK(report.f1 == 0.0);
    CHECK(report.fn == 2);
}

TEST_CASE("evaluate: id mismatch raises with the missing id") {
    ImagePredictions p;
    p.image_id = "present";
    p.height = p.width = 8;
    ImageGroundTruth g;
    g.image_id = "missing";
    g.height = g.width = 8;
    try {
        evaluate({p}, {g}, {});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
}

TEST_CASE("evaluate: randomized benchmark matches an independent reimplementation") {
    Rng rng(41);
    std::vector<ImagePredictions> preds;
    std::vector<ImageGroundTruth> gts;
    const int image = 40;
    for (int i = 0; i < 12; ++i) {
        ImagePredictions p;
        ImageGroundTruth g;
        p.image_id = g.image_id = "im" + std::to_string(i);
        p.height = g.height = image;
        p.width = g.width = image;
        const int n_gt = 1 + static_cast<int>(rng.randint(3));
        for (int k = 0; k < n_gt; ++k) {
            const int x1 = static_cast<int>(rng.randint(25)), y1 = static_cast<int>(rng.randint(25));
            g.regions.push_back(gt_of(rect_mask(image, image, y1, x1, y1 + 10, x1 + 10)));
        }
        const int n_pred = static_cast<int>(rng.randint(5));
        for (int k = 0; k < n_pred; ++k) {
            const int x1 = static_cast<int>(rng.randint(27)), y1 = static_cast<int>(rng.randint(27));
            p.regions.push_back(pred_of(rect_mask(image, image, y1, x1, y1 + 10, x1 + 10), rng.uniform()));
        }
        preds.push_back(p);
        gts.push_back(g);
    }
    const MetricsReport report = evaluate(preds, gts, {});

    // Independent pass: per-image greedy matching + aggregate P/R/F1.
    std::int64_t tp = 0, fp = 0, fn = 0;
    double forged_sum = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        std::vector<int> order(preds[i].regions.size());
        for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return preds[i].regions[static_cast<size_t>(a)].score > preds[i].regions[static_cast<size_t>(b)].score;
        });
        std::vector<char> taken(gts[i].regions.size(), 0);
        for (int pi : order) {
            double best = 0;
            int who = -1;
            for (size_t g = 0; g < gts[i].regions.size(); ++g) {
                if (taken[g]) continue;
                const double v = mask_iou(preds[i].regions[static_cast<size_t>(pi)].mask, gts[i].regions[g].mask);
                if (v > best) { best = v; who = static_cast<int>(g); }
            }
            if (who >= 0 && best >= 0.5) { taken[static_cast<size_t>(who)] = 1; ++tp; }
            else ++fp;
        }
        for (char t : taken)
            if (!t) ++fn;
        MaskU8 uni(image, image);
        for (const auto& r : preds[i].regions)
            for (size_t px = 0; px < r.mask.px.size(); ++px)
                if (r.mask.px[px]) uni.px[px] = 1;
        forged_sum += 100.0 * static_cast<double>(uni.area()) / (image * image);
    }
    CHECK(report.tp == tp);
    CHECK(report.fp == fp);
    CHECK(report.fn == fn);
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    CHECK(report.precision == doctest::Approx(precision));
    CHECK(report.recall == doctest::Approx(recall));
    if (precision + recall > 0)
        CHECK(report.f1 == doctest::Approx(2 * precision * recall / (precision + recall)));
    CHECK(report.mean_forged_percentage == doctest::Approx(forged_sum / 12.0));
}

TEST_CASE("RLE round trip and predictions JSON round trip") {
    Rng rng(43);
    MaskU8 mask(17, 23);
    for (auto& px : mask.px) px = rng.uniform() < 0.4 ? 1 : 0;
    const auto counts = rle_encode(mask);
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    CHECK(total == 17 * 23);
    const MaskU8 back = rle_decode(17, 23, counts);
    CHECK(back.px == mask.px);

    ImagePredictions p;
    p.image_id = "roundtrip";
    p.height = 17;
    p.width = 23;
    PredRegion r;
    r.box = {1.25, 2.5, 20.75, 15.125};
    r.score = 0.8125;
    r.mask = mask;
    p.regions.push_back(r);
    const std::string text = predictions_to_json({p});
    const auto parsed = predictions_from_json(text);
    REQUIRE(parsed.size() == 1);
    REQUIRE(parsed[0].regions.size() == 1);
    CHECK(parsed[0].image_id == "roundtrip");
    CHECK(parsed[0].regions[0].box.x1 == 1.25);
    CHECK(parsed[0].regions[0].box.y2 == 15.125);
    CHECK(parsed[0].regions[0].score == 0.8125);
    CHECK(parsed[0].regions[0].mask.px == mask.px);
}

TEST_CASE("metrics serialization carries nulls for undefined AP") {
    MetricsReport report;
    report.f1 = 0.5;
    const std::string json = metrics_to_json(report);
    CHECK(json.find("\"ap\": null") != std::string::npos);
    const std::string csv = metrics_to_csv(report);
    CHECK(csv.find("F1-Score") == 0);
}
