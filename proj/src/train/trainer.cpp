#include "splicedet/train/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "splicedet/core/error.hpp"

namespace splicedet::train {

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw Error("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                    std::to_string(cfg.total_epochs) + ")");
    double lr = cfg.base_lr;
    for (const auto& [at, value] : cfg.lr_drops)
        if (epoch >= at) lr = value;
    return lr;
}

void sgd_step(core::Tensor& param, const core::Tensor& grad, core::Tensor& velocity, double lr,
              double momentum, double weight_decay) {
    check(param.numel() == grad.numel() && param.numel() == velocity.numel(),
          "sgd_step: shape mismatch");
    for (std::int64_t i = 0; i < param.numel(); ++i) {
        const float g = grad[i] + static_cast<float>(weight_decay) * param[i];
        velocity[i] = static_cast<float>(momentum) * velocity[i] + g;
        param[i] -= static_cast<float>(lr) * velocity[i];
    }
}

SgdOptimizer::SgdOptimizer(nn::ParamRegistry& reg) : reg_(&reg) {
    for (const auto* p : reg.all()) velocity_.push_back(core::Tensor(p->value.shape()));
}

void SgdOptimizer::step(double lr, double momentum, double weight_decay) {
    auto& params = reg_->all();
    for (size_t i = 0; i < params.size(); ++i) {
        auto* p = params[i];
        if (!p->trainable) continue;
        for (std::int64_t k = 0; k < p->grad.numel(); ++k)
            if (!std::isfinite(p->grad[k]))
                throw NumericError("sgd: non-finite gradient in " + p->name);
        sgd_step(p->value, p->grad, velocity_[i], lr, momentum,
                 p->weight_decay ? weight_decay : 0.0);
    }
}

double SgdOptimizer::clip_gradients(double max_norm) {
    double sum_sq = 0.0;
    for (const auto* p : reg_->all()) {
        if (!p->trainable) continue;
        for (std::int64_t k = 0; k < p->grad.numel(); ++k)
            sum_sq += static_cast<double>(p->grad[k]) * p->grad[k];
    }
    const double norm = std::sqrt(sum_sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const float scale = static_cast<float>(max_norm / norm);
        for (auto* p : reg_->all()) {
            if (!p->trainable) continue;
            for (std::int64_t k = 0; k < p->grad.numel(); ++k) p->grad[k] *= scale;
        }
    }
    return norm;
}

std::vector<std::pair<std::string, core::Tensor>> SgdOptimizer::state() const {
    std::vector<std::pair<std::string, core::Tensor>> out;
    const auto& params = reg_->all();
    for (size_t i = 0; i < params.size(); ++i)
        out.emplace_back("optim.velocity/" + params[i]->name, velocity_[i]);
    return out;
}

void SgdOptimizer::load_state(const std::vector<std::pair<std::string, core::Tensor>>& state) {
    const auto& params = reg_->all();
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string key = "optim.velocity/" + params[i]->name;
        for (const auto& [name, tensor] : state)
            if (name == key) {
                check(tensor.numel() == velocity_[i].numel(), "optimizer state shape mismatch: " + key);
                velocity_[i] = tensor;
            }
    }
}

std::string log_csv_header() {
    return "iter,epoch,lr,l_total,l_rpn_cls,l_rpn_box,l_roi_cls,l_roi_box,l_mask";
}

std::string log_csv_row(const TrainLogRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", row.iter, row.epoch,
                  row.lr, row.loss.l_total, row.loss.l_rpn_cls, row.loss.l_rpn_box,
                  row.loss.l_roi_cls, row.loss.l_roi_box, row.loss.l_mask);
    return buf;
}

TrainResult train(model::MaskRcnn& model, const std::vector<model::TrainSample>& samples,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
    check(!samples.empty(), "train: empty training set");
    TrainResult result;
    SgdOptimizer optimizer(model.params());
    core::Rng sampler_rng(cfg.seed ^ 0xA5A5A5A5ULL);
    core::Rng order_rng(cfg.seed ^ 0x0F0F0F0FULL);

    const int total_steps = cfg.total_steps_override > 0
                                ? cfg.total_steps_override
                                : cfg.total_epochs * cfg.steps_per_epoch;
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) order[i] = static_cast<int>(i);

    int cursor = 0;
    order_rng.shuffle(order);
    for (int step = 0; step < total_steps; ++step) {
        const int epoch = std::min(step / cfg.steps_per_epoch, cfg.total_epochs - 1);
        const double lr = lr_at_epoch(epoch, cfg);
        if (cursor == static_cast<int>(order.size())) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        const auto& sample = samples[static_cast<size_t>(order[static_cast<size_t>(cursor++)])];

        TrainLogRow row;
        row.iter = step + 1;
        row.epoch = epoch;
        row.lr = lr;
        try {
            model.params().zero_grads();
            row.loss = model.train_step(sample, sampler_rng);
            if (cfg.grad_clip_norm > 0.0) optimizer.clip_gradients(cfg.grad_clip_norm);
            optimizer.step(lr, cfg.momentum, cfg.weight_decay);
        } catch (const NumericError& e) {
            result.aborted = true;
            result.abort_reason = e.what();
            if (hooks.save_checkpoint) hooks.save_checkpoint(epoch, step, optimizer);
            return result;
        }
        result.log.push_back(row);
        if (hooks.on_row) hooks.on_row(row);

        const bool epoch_end = (step + 1) % cfg.steps_per_epoch == 0;
        if (epoch_end && hooks.save_checkpoint && cfg.checkpoint_every > 0 &&
            ((epoch + 1) % cfg.checkpoint_every == 0 || step + 1 == total_steps))
            hooks.save_checkpoint(epoch, step + 1, optimizer);
    }
    if (hooks.save_checkpoint) hooks.save_checkpoint(cfg.total_epochs - 1, total_steps, optimizer);
    return result;
}

}  // namespace splicedet::train
