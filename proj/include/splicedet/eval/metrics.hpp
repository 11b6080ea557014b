#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "splicedet/core/image.hpp"
#include "splicedet/rpn/box_ops.hpp"

namespace splicedet::eval {

using core::MaskU8;

double mask_iou(const MaskU8& a, const MaskU8& b);

enum class IouKind { kBox, kMask };

struct PredRegion {
    rpn::Box box;
    MaskU8 mask;
    double score = 0;
};

struct GtRegion {
    rpn::Box box;
    MaskU8 mask;
};

struct ImagePredictions {
    std::string image_id;
    int height = 0, width = 0;
    std::vector<PredRegion> regions;
};

struct ImageGroundTruth {
    std::string image_id;
    int height = 0, width = 0;
    std::vector<GtRegion> regions;
};

struct MatchResult {
    std::int64_t tp = 0, fp = 0, fn = 0;
    std::vector<std::pair<int, int>> pairs;  // (prediction index, gt index)
};

/// Greedy one-to-one matching: predictions by descending score, each taking
/// the unmatched GT with the highest IoU >= threshold.
MatchResult match_detections(const std::vector<PredRegion>& preds,
                             const std::vector<GtRegion>& gts, double iou_threshold, IouKind kind);

struct Prf {
    double precision = 0, recall = 0, f1 = 0;
};

/// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); zero (not NaN) when a
/// denominator vanishes.
Prf precision_recall_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn);

/// Dataset-wide average precision with 101-point interpolation. Returns
/// nullopt (an explicit "undefined", never silently 0) when there is no GT.
std::optional<double> average_precision(const std::vector<ImagePredictions>& preds,
                                        const std::vector<ImageGroundTruth>& gts,
                                        double iou_threshold, IouKind kind);

struct ApSummary {
    std::optional<double> ap, ap50, ap75;  // headline AP is AP at IoU 0.5
};

ApSummary ap_summary(const std::vector<ImagePredictions>& preds,
                     const std::vector<ImageGroundTruth>& gts, IouKind kind);

struct ForgedPercent {
    double total = 0;                  // 100 * |union| / (H*W)
    std::vector<double> per_region;    // one per mask
};

ForgedPercent forged_percentage(const std::vector<MaskU8>& masks, int height, int width);

struct EvalConfig {
    double matching_iou = 0.5;
    IouKind iou_kind = IouKind::kMask;
};

struct MetricsReport {
    double precision = 0, recall = 0, f1 = 0;
    std::optional<double> ap, ap50, ap75;
    double mean_forged_percentage = 0;
    double matching_iou = 0.5;
    std::int64_t tp = 0, fp = 0, fn = 0;
};

/// Composes matching, P/R/F1 at cfg.matching_iou, the AP summary, and the
/// mean forged percentage. Prediction and GT image-id sets must align.
MetricsReport evaluate(const std::vector<ImagePredictions>& preds,
                       const std::vector<ImageGroundTruth>& gts, const EvalConfig& cfg);

// --- serialization -------------------------------------------------------

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_to_csv(const MetricsReport& report);

/// Row-major RLE: alternating run lengths starting with the zero run;
/// the run lengths sum to height * width.
std::vector<std::int64_t> rle_encode(const MaskU8& mask);
MaskU8 rle_decode(int height, int width, const std::vector<std::int64_t>& counts);

std::string predictions_to_json(const std::vector<ImagePredictions>& preds);
std::vector<ImagePredictions> predictions_from_json(const std::string& text);

}  // namespace splicedet::eval
