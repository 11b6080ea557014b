#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "splicedet/core/image.hpp"
#include "splicedet/core/rng.hpp"
#include "splicedet/nn/layers.hpp"
#include "splicedet/rpn/box_ops.hpp"

namespace splicedet::roi {

using core::Tensor;

/// FPN level for a box: floor(canonical_level + log2(sqrt(area)/canonical_size)),
/// clamped to P2..P5 (indices 0..3).
int level_for_box(const rpn::Box& box, int canonical_level = 4, double canonical_size = 224.0);

struct PyramidPool {
    Tensor features;            // [R, C, out, out], original ROI order
    std::vector<int> level_of;  // chosen pyramid level per ROI (0 = P2)
};

/// ROIAlign over the P2..P5 pyramid levels with per-box level assignment.
PyramidPool roi_align_pyramid(const std::array<Tensor, 5>& pyramid,
                              const std::array<int, 5>& strides, const std::vector<rpn::Box>& boxes,
                              int out_size, int sampling_ratio);

/// Scatters pooled-feature gradients back into per-level feature gradients
/// (accumulating; d_pyramid tensors are created on demand).
void roi_align_pyramid_backward(const Tensor& d_pooled, const std::array<Tensor, 5>& pyramid,
                                const std::array<int, 5>& strides,
                                const std::vector<rpn::Box>& boxes,
                                const std::vector<int>& level_of, int sampling_ratio,
                                std::array<Tensor, 5>& d_pyramid);

/// One sampled ROI with its training targets.
struct RoiSample {
    rpn::Box proposal;
    int label = 0;        // 0 = background, 1 = foreground (spliced)
    int matched_gt = -1;  // foreground only
    std::array<double, 4> box_target{};  // normalized deltas, foreground only
    core::Tensor mask_target;            // [mask_size, mask_size] binary, foreground only
};

struct RoiSamplerConfig {
    int n = 512;
    double pos_fraction = 0.25;  // 1:3 foreground:background
    double fg_iou = 0.5;
    // Background ceiling: proposals with max IoU in [bg_iou_max, fg_iou) are
    // skipped entirely. Defaults to fg_iou, i.e. everything below the
    // foreground threshold is background.
    double bg_iou_max = -1.0;
    int mask_size = 28;
    std::array<double, 4> delta_std{0.1, 0.1, 0.2, 0.2};
};

/// Matches proposals to ground truth by IoU, samples at most cfg.n ROIs with
/// the foreground count capped at n * pos_fraction, and attaches box-delta and
/// mask targets to the foreground samples.
std::vector<RoiSample> assign_and_sample_rois(const std::vector<rpn::Box>& proposals,
                                              const std::vector<rpn::Box>& gt_boxes,
                                              const std::vector<core::MaskU8>& gt_masks,
                                              const RoiSamplerConfig& cfg, core::Rng& rng);

/// Crops a ground-truth mask to a box and resamples it to size x size
/// (nearest neighbor at bin centers).
Tensor crop_mask_to_box(const core::MaskU8& mask, const rpn::Box& box, int size);

/// Two shared fully connected layers (with batch norm) feeding parallel
/// classification and per-class box-regression outputs.
class BoxHead {
public:
    BoxHead(int in_channels, int pool_size, int fc_dim, int num_classes, core::Rng& rng,
            nn::ParamRegistry& reg, const std::string& prefix = "roi.box");

    struct Cache {
        Tensor flat_in;
        nn::Dense::Cache fc1, fc2, cls, box;
        nn::BatchNorm::Cache bn1, bn2;
        nn::BatchNorm::FrozenCache fbn1, fbn2;
        Tensor pre1, pre2;  // pre-ReLU activations
        std::vector<int> pooled_shape;
        bool bn_batch_stats = true;
    };
    struct Output {
        Tensor class_logits;  // [R, num_classes]
        Tensor box_deltas;    // [R, num_classes * 4]
    };

    Output forward(const Tensor& pooled, bool training, Cache* cache, bool bn_batch_stats = true);
    /// Returns d_pooled with the pooled input's shape.
    Tensor backward(const Tensor& d_logits, const Tensor& d_deltas, const Cache& cache);

    int num_classes() const { return num_classes_; }

private:
    nn::Dense fc1_, fc2_, cls_, box_;
    nn::BatchNorm bn1_, bn2_;
    int num_classes_ = 2;
    int fc_dim_ = 1024;
};

/// Four 3x3 convs (batch norm + ReLU), a stride-2 transposed conv doubling
/// 14 -> 28, and a 1x1 conv to per-class mask logits.
class MaskHead {
public:
    MaskHead(int in_channels, int mid_channels, int num_classes, core::Rng& rng,
             nn::ParamRegistry& reg, const std::string& prefix = "roi.mask");

    struct Cache {
        std::array<nn::Conv2d::Cache, 4> conv;
        std::array<nn::BatchNorm::Cache, 4> bn;
        std::array<nn::BatchNorm::FrozenCache, 4> fbn;
        std::array<Tensor, 4> pre_act;
        nn::ConvTranspose2d::Cache deconv;
        Tensor pre_deconv_act;
        nn::Conv2d::Cache out;
        bool bn_batch_stats = true;
    };

    /// pooled: [R, C, s, s] -> logits [R, num_classes, 2s, 2s] (pre-sigmoid).
    Tensor forward(const Tensor& pooled, bool training, Cache* cache, bool bn_batch_stats = true);
    Tensor backward(const Tensor& d_logits, const Cache& cache);

    int num_classes() const { return num_classes_; }

private:
    std::array<nn::Conv2d, 4> convs_;
    std::array<nn::BatchNorm, 4> bns_;
    nn::ConvTranspose2d deconv_;
    nn::Conv2d out_;
    int num_classes_ = 2;
};

/// Final per-image detection.
struct Detection {
    rpn::Box box;
    int class_id = 1;
    double score = 0;
    Tensor mask28;             // [s,s] foreground-class probabilities
    core::MaskU8 image_mask;   // pasted + thresholded
};

/// Bilinear-resamples mask probabilities into the box extent, thresholds at
/// `threshold`, zero outside the (clipped) box.
core::MaskU8 paste_mask(const Tensor& mask_probs, const rpn::Box& box, int image_h, int image_w,
                        double threshold = 0.5);

}  // namespace splicedet::roi
