#include "splicedet/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "splicedet/core/error.hpp"

namespace splicedet::eval {

using nlohmann::ordered_json;

double mask_iou(const MaskU8& a, const MaskU8& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError("mask_iou: shape mismatch " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                         " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
    std::int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        const bool pa = a.px[i] != 0, pb = b.px[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

double region_iou(const PredRegion& p, const GtRegion& g, IouKind kind) {
    return kind == IouKind::kBox ? rpn::iou(p.box, g.box) : mask_iou(p.mask, g.mask);
}

}  // namespace

MatchResult match_detections(const std::vector<PredRegion>& preds, const std::vector<GtRegion>& gts,
                             double iou_threshold, IouKind kind) {
    check(iou_threshold > 0.0 && iou_threshold < 1.0, "match_detections: threshold must be in (0,1)");
    std::vector<int> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return preds[static_cast<size_t>(a)].score > preds[static_cast<size_t>(b)].score;
    });
    std::vector<char> gt_taken(gts.size(), 0);
    MatchResult out;
    for (int pi : order) {
        double best = 0.0;
        int who = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (gt_taken[g]) continue;
            const double v = region_iou(preds[static_cast<size_t>(pi)], gts[g], kind);
            if (v > best) {
                best = v;
                who = static_cast<int>(g);
            }
        }
        if (who >= 0 && best >= iou_threshold) {
            gt_taken[static_cast<size_t>(who)] = 1;
            ++out.tp;
            out.pairs.emplace_back(pi, who);
        } else {
            ++out.fp;
        }
    }
    out.fn = static_cast<std::int64_t>(gts.size()) - out.tp;
    return out;
}

Prf precision_recall_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    check(tp >= 0 && fp >= 0 && fn >= 0, "precision_recall_f1: negative count");
    Prf out;
    out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::optional<double> average_precision(const std::vector<ImagePredictions>& preds,
                                        const std::vector<ImageGroundTruth>& gts,
                                        double iou_threshold, IouKind kind) {
    std::map<std::string, const ImageGroundTruth*> gt_of;
    std::int64_t total_gt = 0;
    for (const auto& g : gts) {
        gt_of[g.image_id] = &g;
        total_gt += static_cast<std::int64_t>(g.regions.size());
    }
    if (total_gt == 0) return std::nullopt;  // AP undefined without GT

    struct Entry {
        double score;
        const ImagePredictions* image;
        int index;
    };
    std::vector<Entry> entries;
    for (const auto& p : preds)
        for (size_t i = 0; i < p.regions.size(); ++i)
            entries.push_back({p.regions[i].score, &p, static_cast<int>(i)});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image->image_id != b.image->image_id) return a.image->image_id < b.image->image_id;
        return a.index < b.index;
    });

    std::map<std::string, std::vector<char>> taken;
    for (const auto& g : gts) taken[g.image_id].assign(g.regions.size(), 0);

    std::vector<double> precision, recall;
    std::int64_t tp = 0, fp = 0;
    for (const auto& e : entries) {
        const auto it = gt_of.find(e.image->image_id);
        bool matched = false;
        if (it != gt_of.end()) {
            const auto& regions = it->second->regions;
            auto& flags = taken[e.image->image_id];
            double best = 0.0;
            int who = -1;
            for (size_t g = 0; g < regions.size(); ++g) {
                if (flags[g]) continue;
                const double v = region_iou(e.image->regions[static_cast<size_t>(e.index)], regions[g], kind);
                if (v > best) {
                    best = v;
                    who = static_cast<int>(g);
                }
            }
            if (who >= 0 && best >= iou_threshold) {
                flags[static_cast<size_t>(who)] = 1;
                matched = true;
            }
        }
        matched ? ++tp : ++fp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    }

    // 101-point interpolation: precision at recall r is the max precision at
    // any recall >= r.
    double ap = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double best = 0.0;
        for (size_t i = 0; i < precision.size(); ++i)
            if (recall[i] >= r) best = std::max(best, precision[i]);
        ap += best;
    }
    return ap / 101.0;
}

ApSummary ap_summary(const std::vector<ImagePredictions>& preds,
                     const std::vector<ImageGroundTruth>& gts, IouKind kind) {
    ApSummary out;
    out.ap50 = average_precision(preds, gts, 0.5, kind);
    out.ap75 = average_precision(preds, gts, 0.75, kind);
    out.ap = out.ap50;  // headline AP reported at IoU 0.5
    return out;
}

ForgedPercent forged_percentage(const std::vector<MaskU8>& masks, int height, int width) {
    check(height > 0 && width > 0, "forged_percentage: zero-area image");
    const double image_area = static_cast<double>(height) * width;
    ForgedPercent out;
    MaskU8 uni(height, width);
    for (const auto& m : masks) {
        check(m.h == height && m.w == width, "forged_percentage: mask shape mismatch");
        out.per_region.push_back(100.0 * static_cast<double>(m.area()) / image_area);
        for (size_t i = 0; i < m.px.size(); ++i)
            if (m.px[i]) uni.px[i] = 1;
    }
    out.total = 100.0 * static_cast<double>(uni.area()) / image_area;
    return out;
}

MetricsReport evaluate(const std::vector<ImagePredictions>& preds,
                       const std::vector<ImageGroundTruth>& gts, const EvalConfig& cfg) {
    std::set<std::string> pred_ids, gt_ids;
    for (const auto& p : preds) pred_ids.insert(p.image_id);
    for (const auto& g : gts) gt_ids.insert(g.image_id);
    if (pred_ids != gt_ids) {
        std::string missing;
        for (const auto& id : gt_ids)
            if (!pred_ids.count(id)) missing += " " + id;
        for (const auto& id : pred_ids)
            if (!gt_ids.count(id)) missing += " " + id;
        throw DataError("evaluate: image id sets differ:" + missing);
    }

    std::map<std::string, const ImageGroundTruth*> gt_of;
    for (const auto& g : gts) gt_of[g.image_id] = &g;

    MetricsReport report;
    report.matching_iou = cfg.matching_iou;
    double forged_sum = 0.0;
    for (const auto& p : preds) {
        const auto& gt = *gt_of.at(p.image_id);
        const MatchResult m = match_detections(p.regions, gt.regions, cfg.matching_iou, cfg.iou_kind);
        report.tp += m.tp;
        report.fp += m.fp;
        report.fn += m.fn;
        std::vector<MaskU8> masks;
        for (const auto& r : p.regions) masks.push_back(r.mask);
        forged_sum += forged_percentage(masks, p.height, p.width).total;
    }
    const Prf prf = precision_recall_f1(report.tp, report.fp, report.fn);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    const ApSummary ap = ap_summary(preds, gts, cfg.iou_kind);
    report.ap = ap.ap;
    report.ap50 = ap.ap50;
    report.ap75 = ap.ap75;
    report.mean_forged_percentage = preds.empty() ? 0.0 : forged_sum / static_cast<double>(preds.size());
    return report;
}

namespace {
ordered_json opt_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}
}  // namespace

std::string metrics_to_json(const MetricsReport& report) {
    ordered_json doc;
    doc["f1"] = report.f1;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["ap"] = opt_to_json(report.ap);
    doc["ap50"] = opt_to_json(report.ap50);
    doc["ap75"] = opt_to_json(report.ap75);
    doc["mean_forged_percentage"] = report.mean_forged_percentage;
    doc["matching_iou"] = report.matching_iou;
    doc["tp"] = report.tp;
    doc["fp"] = report.fp;
    doc["fn"] = report.fn;
    return doc.dump(1) + "\n";
}

std::string metrics_to_csv(const MetricsReport& report) {
    std::string out = "F1-Score,Precision,Recall,AP,AP0.5,AP0.75,MeanForgedPercent,TP,FP,FN\n";
    out += fmt(report.f1) + "," + fmt(report.precision) + "," + fmt(report.recall) + ",";
    out += (report.ap ? fmt(*report.ap) : "") + std::string(",");
    out += (report.ap50 ? fmt(*report.ap50) : "") + std::string(",");
    out += (report.ap75 ? fmt(*report.ap75) : "") + std::string(",");
    out += fmt(report.mean_forged_percentage) + "," + std::to_string(report.tp) + "," +
           std::to_string(report.fp) + "," + std::to_string(report.fn) + "\n";
    return out;
}

std::vector<std::int64_t> rle_encode(const MaskU8& mask) {
    std::vector<std::int64_t> counts;
    std::uint8_t current = 0;  // runs start with zeros
    std::int64_t run = 0;
    for (auto v : mask.px) {
        const std::uint8_t bit = v ? 1 : 0;
        if (bit == current) {
            ++run;
        } else {
            counts.push_back(run);
            current = bit;
            run = 1;
        }
    }
    counts.push_back(run);
    return counts;
}

MaskU8 rle_decode(int height, int width, const std::vector<std::int64_t>& counts) {
    MaskU8 mask(height, width);
    std::int64_t pos = 0;
    std::uint8_t bit = 0;
    for (auto run : counts) {
        check(run >= 0, "rle_decode: negative run");
        for (std::int64_t i = 0; i < run; ++i) {
            check(pos < static_cast<std::int64_t>(mask.px.size()), "rle_decode: runs exceed mask size");
            mask.px[static_cast<size_t>(pos++)] = bit;
        }
        bit = bit ? 0 : 1;
    }
    check(pos == static_cast<std::int64_t>(mask.px.size()), "rle_decode: runs do not cover mask");
    return mask;
}

std::string predictions_to_json(const std::vector<ImagePredictions>& preds) {
    ordered_json images = ordered_json::array();
    for (const auto& p : preds) {
        ordered_json detections = ordered_json::array();
        for (const auto& r : p.regions) {
            ordered_json det;
            det["box"] = {r.box.x1, r.box.y1, r.box.x2, r.box.y2};
            det["score"] = r.score;
            det["rle"] = rle_encode(r.mask);
            detections.push_back(det);
        }
        ordered_json img;
        img["image_id"] = p.image_id;
        img["height"] = p.height;
        img["width"] = p.width;
        img["detections"] = detections;
        images.push_back(img);
    }
    ordered_json doc;
    doc["format"] = "splicedet-predictions-v1";
    doc["images"] = images;
    return doc.dump(1) + "\n";
}

std::vector<ImagePredictions> predictions_from_json(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("predictions parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.contains("images") || !doc["images"].is_array())
        throw DataError("predictions: missing images array");
    std::vector<ImagePredictions> out;
    for (const auto& img : doc["images"]) {
        ImagePredictions p;
        p.image_id = img.value("image_id", "");
        p.height = img.value("height", 0);
        p.width = img.value("width", 0);
        if (p.height <= 0 || p.width <= 0)
            throw DataError("predictions: image " + p.image_id + ": bad dimensions");
        if (img.contains("detections"))
            for (const auto& det : img["detections"]) {
                PredRegion r;
                const auto& b = det.at("box");
                r.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                         b.at(3).get<double>()};
                r.score = det.at("score").get<double>();
                std::vector<std::int64_t> counts;
                for (const auto& c : det.at("rle")) counts.push_back(c.get<std::int64_t>());
                r.mask = rle_decode(p.height, p.width, counts);
                p.regions.push_back(std::move(r));
            }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace splicedet::eval
