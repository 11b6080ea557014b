#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splicedet/eval/metrics.hpp"

namespace splicedet::train {

/// K folds: validation sets are pairwise disjoint, exhaust the id list, and
/// differ in size by at most one; each id validates exactly once.
struct FoldPlan {
    int k = 5;
    std::uint64_t seed = 0;
    struct Fold {
        std::vector<std::string> train_ids;
        std::vector<std::string> val_ids;
    };
    std::vector<Fold> folds;
};

FoldPlan kfold(const std::vector<std::string>& ids, int k, std::uint64_t seed);

/// Runs a user-supplied trainer/evaluator per fold and returns per-fold
/// reports plus their arithmetic mean (undefined AP values are skipped; the
/// mean is undefined only when every fold is undefined).
using FoldRunner = std::function<eval::MetricsReport(const FoldPlan::Fold&, int fold_index)>;

struct KfoldResult {
    std::vector<eval::MetricsReport> per_fold;
    eval::MetricsReport mean;
};

KfoldResult run_kfold(const FoldPlan& plan, const FoldRunner& runner);

eval::MetricsReport mean_metrics(const std::vector<eval::MetricsReport>& reports);

}  // namespace splicedet::train
