#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "splicedet/loss/losses.hpp"
#include "splicedet/model/mask_rcnn.hpp"
#include "splicedet/nn/layers.hpp"

namespace splicedet::train {

struct TrainConfig {
    double base_lr = 0.01;
    std::vector<std::pair<int, double>> lr_drops{{120, 0.003}, {240, 0.001}};
    int total_epochs = 360;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    int steps_per_epoch = 50;
    std::uint64_t seed = 0;
    double grad_clip_norm = 10.0;   // <= 0 disables
    int checkpoint_every = 10;      // epochs; <= 0 disables
    int total_steps_override = -1;  // literal iteration count when > 0
};

/// Piecewise-constant schedule; drops take effect AT the stated epoch.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

/// One SGD step on a single tensor:
///   g' = g + wd * p;  v' = momentum * v + g';  p' = p - lr * v'
void sgd_step(core::Tensor& param, const core::Tensor& grad, core::Tensor& velocity, double lr,
              double momentum, double weight_decay);

/// Momentum buffers per registry parameter, in registry order.
class SgdOptimizer {
public:
    explicit SgdOptimizer(nn::ParamRegistry& reg);

    /// Applies sgd_step to every trainable parameter. Weight decay is skipped
    /// for parameters flagged weight_decay = false (BN gamma/beta, biases).
    void step(double lr, double momentum, double weight_decay);

    /// Global-norm gradient clipping over trainable parameters; returns the
    /// pre-clip norm.
    double clip_gradients(double max_norm);

    std::vector<std::pair<std::string, core::Tensor>> state() const;
    void load_state(const std::vector<std::pair<std::string, core::Tensor>>& state);

private:
    nn::ParamRegistry* reg_;
    std::vector<core::Tensor> velocity_;
};

struct TrainLogRow {
    int iter = 0;   // 1-based
    int epoch = 0;  // 0-based
    double lr = 0;
    loss::LossBreakdown loss;
};

std::string log_csv_header();
std::string log_csv_row(const TrainLogRow& row);

struct TrainHooks {
    // Called after each epoch that hits the checkpoint cadence, at the end of
    // training, and once more before an abort so the last state is preserved.
    std::function<void(int epoch, int iter, const SgdOptimizer& optimizer)> save_checkpoint;
    std::function<void(const TrainLogRow&)> on_row;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    bool aborted = false;
    std::string abort_reason;
};

/// Deterministic single-threaded loop: per-epoch shuffled order, one image per
/// step, total multi-task loss, backward, SGD at lr_at_epoch. Non-finite losses abort
/// with the log retained.
TrainResult train(model::MaskRcnn& model, const std::vector<model::TrainSample>& samples,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace splicedet::train
