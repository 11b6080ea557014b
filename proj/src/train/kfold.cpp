#include "splicedet/train/kfold.hpp"

#include "splicedet/core/error.hpp"
#include "splicedet/core/rng.hpp"

namespace splicedet::train {

FoldPlan kfold(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
    if (k < 2) throw Error("kfold: k must be at least 2");
    check(static_cast<int>(ids.size()) >= k, "kfold: fewer samples than folds");
    std::vector<std::string> shuffled = ids;
    core::Rng rng(seed);
    rng.shuffle(shuffled);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    const size_t n = shuffled.size();
    // First (n % k) folds take one extra id, keeping sizes within 1.
    size_t cursor = 0;
    for (int f = 0; f < k; ++f) {
        const size_t size = n / static_cast<size_t>(k) + (static_cast<size_t>(f) < n % static_cast<size_t>(k) ? 1 : 0);
        FoldPlan::Fold fold;
        fold.val_ids.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(cursor),
                            shuffled.begin() + static_cast<std::ptrdiff_t>(cursor + size));
        fold.train_ids.reserve(n - size);
        for (size_t i = 0; i < n; ++i)
            if (i < cursor || i >= cursor + size) fold.train_ids.push_back(shuffled[i]);
        plan.folds.push_back(std::move(fold));
        cursor += size;
    }
    return plan;
}

eval::MetricsReport mean_metrics(const std::vector<eval::MetricsReport>& reports) {
    check(!reports.empty(), "mean_metrics: no reports");
    eval::MetricsReport mean;
    const double n = static_cast<double>(reports.size());
    double ap_sum = 0, ap50_sum = 0, ap75_sum = 0;
    int ap_n = 0, ap50_n = 0, ap75_n = 0;
    for (const auto& r : reports) {
        mean.precision += r.precision / n;
        mean.recall += r.recall / n;
        mean.f1 += r.f1 / n;
        mean.mean_forged_percentage += r.mean_forged_percentage / n;
        mean.tp += r.tp;
        mean.fp += r.fp;
        mean.fn += r.fn;
        if (r.ap) { ap_sum += *r.ap; ++ap_n; }
        if (r.ap50) { ap50_sum += *r.ap50; ++ap50_n; }
        if (r.ap75) { ap75_sum += *r.ap75; ++ap75_n; }
    }
    if (ap_n > 0) mean.ap = ap_sum / ap_n;
    if (ap50_n > 0) mean.ap50 = ap50_sum / ap50_n;
    if (ap75_n > 0) mean.ap75 = ap75_sum / ap75_n;
    mean.matching_iou = reports.front().matching_iou;
    return mean;
}

KfoldResult run_kfold(const FoldPlan& plan, const FoldRunner& runner) {
    KfoldResult result;
    for (size_t f = 0; f < plan.folds.size(); ++f)
        result.per_fold.push_back(runner(plan.folds[f], static_cast<int>(f)));
    result.mean = mean_metrics(result.per_fold);
    return result;
}

}  // namespace splicedet::train
