#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace splicedet::config {

/// Every pipeline knob. The config file is flat "KEY VALUE" text whose key
/// names mirror the model-configuration table verbatim (spaces or underscores
/// both accepted), so that table is directly usable as a config file.
struct RunConfig {
    // Core configuration keys.
    std::string backbone = "mobilenetv1";
    int image_max_dim = 512;
    int image_min_dim = 800;    // recorded; the resize policy follows IMAGE_SHAPE
    int image_meta_size = 15;   // recorded for config-echo compatibility
    std::array<int, 3> image_shape{512, 512, 3};
    double learning_rate = 0.01;
    std::array<int, 2> mask_shape{28, 28};
    std::vector<double> rpn_anchor_scales{8, 16, 32, 64, 128};
    int steps_per_epoch = 50;
    double weight_decay = 0.0001;

    // Anchoring / RPN.
    std::vector<double> rpn_anchor_ratios{0.5, 1.0, 2.0};
    double rpn_pos_iou = 0.7;
    double rpn_neg_iou = 0.3;
    int rpn_batch = 256;
    double rpn_pos_fraction = 0.5;
    int pre_nms_topk_train = 2000;
    int pre_nms_topk_eval = 1000;
    int post_nms_topk_train = 512;
    int post_nms_topk_eval = 256;
    double rpn_nms_iou = 0.7;

    // ROI heads.
    int roi_batch = 512;
    double roi_pos_fraction = 0.25;  // 1:3 foreground:background
    double roi_fg_iou = 0.5;
    double roi_bg_iou_max = -1.0;  // < 0: background is everything below ROI_FG_IOU
    int roi_sampling_ratio = 2;
    double detect_score_thresh = 0.5;
    double detect_nms_iou = 0.3;
    int detect_max_dets = 100;
    double mask_paste_thresh = 0.5;

    // Losses.
    double loss_lambda = 1.0;
    double smooth_l1_beta = 1.0;
    std::array<double, 4> delta_std{0.1, 0.1, 0.2, 0.2};

    // Schedule / optimizer.
    int total_epochs = 360;
    std::vector<std::pair<int, double>> lr_drops{{120, 0.003}, {240, 0.001}};
    double momentum = 0.9;
    double grad_clip_norm = 10.0;  // <= 0 disables clipping
    int checkpoint_every = 10;     // epochs
    int total_steps_override = -1;  // literal "360 iterations" reading when > 0

    // Architecture widths.
    double depth_multiplier = 1.0;
    int fpn_channels = 256;
    int rpn_conv_channels = 512;
    int box_head_dim = 1024;
    int mask_head_channels = 256;
    int num_classes = 2;  // background + spliced

    // Training data handling.
    bool train_bn_heads = true;     // false freezes box/mask-head BN at moving stats
    bool train_bn_backbone = true;  // false freezes backbone BN (no train/test stat gap)
    bool infer_bn_batch = false;    // true: backbone inference normalizes per image
    bool train_add_gt_proposals = true;
    bool authentic_in_train = true;
    std::uint64_t seed = 0;

    // Execution.
    bool parallel_kernels = true;
    int threads = 0;  // 0 = library default

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    /// "KEY=VALUE" command-line override; unknown keys are rejected.
    void apply_override(const std::string& assignment);
    void apply_key_value(const std::string& key, const std::string& value);
    /// Canonical echo of every key; written into each output directory.
    std::string to_text() const;
    void validate() const;
};

}  // namespace splicedet::config
