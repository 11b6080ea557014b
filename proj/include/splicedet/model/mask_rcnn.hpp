#pragma once

#include <array>
#include <memory>
#include <vector>

#include "splicedet/backbone/fpn.hpp"
#include "splicedet/backbone/mobilenet.hpp"
#include "splicedet/config/run_config.hpp"
#include "splicedet/loss/losses.hpp"
#include "splicedet/roi/roi_heads.hpp"
#include "splicedet/rpn/rpn.hpp"

namespace splicedet::model {

using core::Tensor;

/// One training example in network space: a padded square image plus its
/// ground-truth boxes and masks in that space.
struct TrainSample {
    Tensor image;  // [3, S, S], values in [0,1]
    std::vector<rpn::Box> gt_boxes;
    std::vector<core::MaskU8> gt_masks;
};

rpn::Box mask_bbox(const core::MaskU8& mask);

/// Mask R-CNN with the MobileNet V1 + FPN backbone: builds the whole stack
/// from a RunConfig, runs single-image training steps (forward, multi-task
/// loss, backward) and batched inference.
class MaskRcnn {
public:
    explicit MaskRcnn(const config::RunConfig& cfg);

    nn::ParamRegistry& params() { return reg_; }
    const nn::ParamRegistry& params() const { return reg_; }
    const config::RunConfig& cfg() const { return cfg_; }
    const rpn::AnchorSet& anchors() const { return anchors_; }

    /// Forward + backward for one sample; gradients accumulate into the
    /// registry (caller zeroes them). rng drives the anchor and ROI samplers.
    loss::LossBreakdown train_step(const TrainSample& sample, core::Rng& rng);

    /// Inference on a padded square image tensor [3,S,S].
    std::vector<roi::Detection> detect(const Tensor& image) const;

private:
    struct Features {
        backbone::StageOutputs stages;
        backbone::Fpn::Pyramid pyramid;
    };
    Features forward_features(const Tensor& image, bool training,
                              backbone::MobileNetV1::Cache* bb_cache,
                              backbone::Fpn::Cache* fpn_cache) const;

    std::vector<rpn::LevelShape> level_shapes() const;

    config::RunConfig cfg_;
    nn::ParamRegistry reg_;
    core::Rng init_rng_;
    std::unique_ptr<backbone::MobileNetV1> backbone_;
    std::unique_ptr<backbone::Fpn> fpn_;
    std::unique_ptr<rpn::RpnHead> rpn_head_;
    std::unique_ptr<roi::BoxHead> box_head_;
    std::unique_ptr<roi::MaskHead> mask_head_;
    rpn::AnchorSet anchors_;
};

}  // namespace splicedet::model
