#include "splicedet/config/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "splicedet/core/error.hpp"

namespace splicedet::config {

namespace {

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) out.push_back(t);
    return out;
}

std::vector<double> parse_number_list(const std::string& value) {
    std::string cleaned;
    for (char c : value)
        cleaned += (c == '[' || c == ']' || c == '(' || c == ')' || c == ',') ? ' ' : c;
    std::vector<double> out;
    std::istringstream ss(cleaned);
    double v;
    while (ss >> v) out.push_back(v);
    return out;
}

double parse_double(const std::string& value) {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    while (pos < value.size() && std::isspace(static_cast<unsigned char>(value[pos]))) ++pos;
    check(pos == value.size(), "config: bad numeric value '" + value + "'");
    return v;
}

int parse_int(const std::string& value) {
    const double v = parse_double(value);
    check(std::abs(v - std::lround(v)) < 1e-9, "config: expected integer, got '" + value + "'");
    return static_cast<int>(std::lround(v));
}

bool parse_bool(const std::string& value) {
    const std::string v = upper(value);
    if (v == "1" || v == "TRUE" || v == "ON" || v == "YES") return true;
    if (v == "0" || v == "FALSE" || v == "OFF" || v == "NO") return false;
    throw Error("config: bad boolean value '" + value + "'");
}

std::vector<std::pair<int, double>> parse_lr_drops(const std::string& value) {
    // "120:0.003 240:0.001" (commas also accepted)
    std::string cleaned;
    for (char c : value) cleaned += (c == ',' || c == '[' || c == ']') ? ' ' : c;
    std::vector<std::pair<int, double>> out;
    std::istringstream ss(cleaned);
    std::string item;
    while (ss >> item) {
        const auto colon = item.find(':');
        check(colon != std::string::npos, "config: LR_DROPS entries are EPOCH:LR, got '" + item + "'");
        out.emplace_back(parse_int(item.substr(0, colon)), parse_double(item.substr(colon + 1)));
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void RunConfig::apply_key_value(const std::string& raw_key, const std::string& value) {
    std::string key = upper(raw_key);
    std::replace(key.begin(), key.end(), ' ', '_');

    using Setter = std::function<void(RunConfig&, const std::string&)>;
    static const std::map<std::string, Setter> kSetters = {
        {"BACKBONE", [](RunConfig& c, const std::string& v) { c.backbone = v; }},
        {"IMAGE_MAX_DIM", [](RunConfig& c, const std::string& v) { c.image_max_dim = parse_int(v); }},
        {"IMAGE_MIN_DIM", [](RunConfig& c, const std::string& v) { c.image_min_dim = parse_int(v); }},
        {"IMAGE_META_SIZE", [](RunConfig& c, const std::string& v) { c.image_meta_size = parse_int(v); }},
        {"IMAGE_SHAPE",
         [](RunConfig& c, const std::string& v) {
             const auto nums = parse_number_list(v);
             check(nums.size() == 3, "config: IMAGE_SHAPE needs 3 values");
             c.image_shape = {static_cast<int>(nums[0]), static_cast<int>(nums[1]),
                              static_cast<int>(nums[2])};
         }},
        {"LEARNING_RATE", [](RunConfig& c, const std::string& v) { c.learning_rate = parse_double(v); }},
        {"MASK_SHAPE",
         [](RunConfig& c, const std::string& v) {
             const auto nums = parse_number_list(v);
             check(nums.size() == 2, "config: MASK_SHAPE needs 2 values");
             c.mask_shape = {static_cast<int>(nums[0]), static_cast<int>(nums[1])};
         }},
        {"RPN_ANCHOR_SCALES",
         [](RunConfig& c, const std::string& v) { c.rpn_anchor_scales = parse_number_list(v); }},
        {"STEPS_PER_EPOCH", [](RunConfig& c, const std::string& v) { c.steps_per_epoch = parse_int(v); }},
        {"WEIGHT_DECAY", [](RunConfig& c, const std::string& v) { c.weight_decay = parse_double(v); }},
        {"RPN_ANCHOR_RATIOS",
         [](RunConfig& c, const std::string& v) { c.rpn_anchor_ratios = parse_number_list(v); }},
        {"RPN_POS_IOU", [](RunConfig& c, const std::string& v) { c.rpn_pos_iou = parse_double(v); }},
        {"RPN_NEG_IOU", [](RunConfig& c, const std::string& v) { c.rpn_neg_iou = parse_double(v); }},
        {"RPN_BATCH", [](RunConfig& c, const std::string& v) { c.rpn_batch = parse_int(v); }},
        {"RPN_POS_FRACTION",
         [](RunConfig& c, const std::string& v) { c.rpn_pos_fraction = parse_double(v); }},
        {"PRE_NMS_TOPK_TRAIN",
         [](RunConfig& c, const std::string& v) { c.pre_nms_topk_train = parse_int(v); }},
        {"PRE_NMS_TOPK_EVAL",
         [](RunConfig& c, const std::string& v) { c.pre_nms_topk_eval = parse_int(v); }},
        {"POST_NMS_TOPK_TRAIN",
         [](RunConfig& c, const std::string& v) { c.post_nms_topk_train = parse_int(v); }},
        {"POST_NMS_TOPK_EVAL",
         [](RunConfig& c, const std::string& v) { c.post_nms_topk_eval = parse_int(v); }},
        {"RPN_NMS_IOU", [](RunConfig& c, const std::string& v) { c.rpn_nms_iou = parse_double(v); }},
        {"ROI_BATCH", [](RunConfig& c, const std::string& v) { c.roi_batch = parse_int(v); }},
        {"ROI_POS_FRACTION",
         [](RunConfig& c, const std::string& v) { c.roi_pos_fraction = parse_double(v); }},
        {"ROI_FG_IOU", [](RunConfig& c, const std::string& v) { c.roi_fg_iou = parse_double(v); }},
        {"ROI_BG_IOU_MAX",
         [](RunConfig& c, const std::string& v) { c.roi_bg_iou_max = parse_double(v); }},
        {"ROI_SAMPLING_RATIO",
         [](RunConfig& c, const std::string& v) { c.roi_sampling_ratio = parse_int(v); }},
        {"DETECT_SCORE_THRESH",
         [](RunConfig& c, const std::string& v) { c.detect_score_thresh = parse_double(v); }},
        {"DETECT_NMS_IOU",
         [](RunConfig& c, const std::string& v) { c.detect_nms_iou = parse_double(v); }},
        {"DETECT_MAX_DETS", [](RunConfig& c, const std::string& v) { c.detect_max_dets = parse_int(v); }},
        {"MASK_PASTE_THRESH",
         [](RunConfig& c, const std::string& v) { c.mask_paste_thresh = parse_double(v); }},
        {"LOSS_LAMBDA", [](RunConfig& c, const std::string& v) { c.loss_lambda = parse_double(v); }},
        {"SMOOTH_L1_BETA",
         [](RunConfig& c, const std::string& v) { c.smooth_l1_beta = parse_double(v); }},
        {"DELTA_STD",
         [](RunConfig& c, const std::string& v) {
             const auto nums = parse_number_list(v);
             check(nums.size() == 4, "config: DELTA_STD needs 4 values");
             c.delta_std = {nums[0], nums[1], nums[2], nums[3]};
         }},
        {"TOTAL_EPOCHS", [](RunConfig& c, const std::string& v) { c.total_epochs = parse_int(v); }},
        {"LR_DROPS", [](RunConfig& c, const std::string& v) { c.lr_drops = parse_lr_drops(v); }},
        {"MOMENTUM", [](RunConfig& c, const std::string& v) { c.momentum = parse_double(v); }},
        {"GRAD_CLIP_NORM",
         [](RunConfig& c, const std::string& v) { c.grad_clip_norm = parse_double(v); }},
        {"CHECKPOINT_EVERY",
         [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_int(v); }},
        {"TOTAL_STEPS_OVERRIDE",
         [](RunConfig& c, const std::string& v) { c.total_steps_override = parse_int(v); }},
        {"DEPTH_MULTIPLIER",
         [](RunConfig& c, const std::string& v) { c.depth_multiplier = parse_double(v); }},
        {"FPN_CHANNELS", [](RunConfig& c, const std::string& v) { c.fpn_channels = parse_int(v); }},
        {"RPN_CONV_CHANNELS",
         [](RunConfig& c, const std::string& v) { c.rpn_conv_channels = parse_int(v); }},
        {"BOX_HEAD_DIM", [](RunConfig& c, const std::string& v) { c.box_head_dim = parse_int(v); }},
        {"MASK_HEAD_CHANNELS",
         [](RunConfig& c, const std::string& v) { c.mask_head_channels = parse_int(v); }},
        {"NUM_CLASSES", [](RunConfig& c, const std::string& v) { c.num_classes = parse_int(v); }},
        {"INFER_BN_BATCH",
         [](RunConfig& c, const std::string& v) { c.infer_bn_batch = parse_bool(v); }},
        {"TRAIN_BN_BACKBONE",
         [](RunConfig& c, const std::string& v) { c.train_bn_backbone = parse_bool(v); }},
        {"TRAIN_BN_HEADS",
         [](RunConfig& c, const std::string& v) { c.train_bn_heads = parse_bool(v); }},
        {"TRAIN_ADD_GT_PROPOSALS",
         [](RunConfig& c, const std::string& v) { c.train_add_gt_proposals = parse_bool(v); }},
        {"AUTHENTIC_IN_TRAIN",
         [](RunConfig& c, const std::string& v) { c.authentic_in_train = parse_bool(v); }},
        {"SEED",
         [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(std::stoull(v)); }},
        {"PARALLEL_KERNELS",
         [](RunConfig& c, const std::string& v) { c.parallel_kernels = parse_bool(v); }},
        {"THREADS", [](RunConfig& c, const std::string& v) { c.threads = parse_int(v); }},
    };

    const auto it = kSetters.find(key);
    if (it == kSetters.end()) throw Error("config: unknown key '" + raw_key + "'");
    it->second(*this, value);
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto toks = tokens_of(line);
        if (toks.empty()) continue;
        // Keys may contain spaces (table style); greedily match the longest
        // known key from the front of the line.
        bool applied = false;
        for (size_t k = toks.size() - 1; k >= 1; --k) {
            std::string key = toks[0];
            for (size_t i = 1; i < k; ++i) key += "_" + toks[i];
            std::string value;
            for (size_t i = k; i < toks.size(); ++i) value += (i > k ? " " : "") + toks[i];
            try {
                cfg.apply_key_value(key, value);
                applied = true;
                break;
            } catch (const Error& e) {
                const std::string what = e.what();
                if (what.find("unknown key") == std::string::npos) throw;  // bad value: real error
            }
        }
        if (!applied)
            throw Error("config: line " + std::to_string(line_no) + ": unknown key in '" + line + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_text(text);
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    check(eq != std::string::npos, "override must be KEY=VALUE, got '" + assignment + "'");
    apply_key_value(assignment.substr(0, eq), assignment.substr(eq + 1));
    // Callers validate once after the full override set is applied, so
    // interdependent keys may arrive in any order.
}

void RunConfig::validate() const {
    check(image_shape[0] == image_shape[1], "config: IMAGE_SHAPE must be square");
    check(image_shape[0] % 64 == 0, "config: IMAGE_SHAPE side must be divisible by 64");
    check(image_shape[2] == 3, "config: IMAGE_SHAPE must have 3 channels");
    check(rpn_anchor_scales.size() == 5, "config: RPN_ANCHOR_SCALES needs 5 values (P2..P6)");
    check(!rpn_anchor_ratios.empty(), "config: RPN_ANCHOR_RATIOS must be nonempty");
    check(mask_shape[0] == mask_shape[1] && mask_shape[0] % 2 == 0,
          "config: MASK_SHAPE must be square and even");
    check(num_classes == 2, "config: NUM_CLASSES must be 2 (background + spliced)");
    check(rpn_pos_iou > rpn_neg_iou, "config: RPN_POS_IOU must exceed RPN_NEG_IOU");
    check(learning_rate > 0 && total_epochs > 0 && steps_per_epoch > 0, "config: bad schedule");
    double last_lr = learning_rate;
    int last_epoch = -1;
    for (const auto& [epoch, lr] : lr_drops) {
        check(epoch > last_epoch && epoch < total_epochs, "config: LR_DROPS epochs must increase and stay below TOTAL_EPOCHS");
        check(lr < last_lr, "config: LR_DROPS values must strictly decrease");
        last_epoch = epoch;
        last_lr = lr;
    }
    check(depth_multiplier > 0.0 && depth_multiplier <= 1.0, "config: DEPTH_MULTIPLIER in (0,1]");
    check(roi_batch >= 4, "config: ROI_BATCH must be >= 4");
}

std::string RunConfig::to_text() const {
    std::string out;
    auto kv = [&out](const std::string& k, const std::string& v) { out += k + " " + v + "\n"; };
    kv("BACKBONE", backbone);
    kv("IMAGE_MAX_DIM", std::to_string(image_max_dim));
    kv("IMAGE_META_SIZE", std::to_string(image_meta_size));
    kv("IMAGE_MIN_DIM", std::to_string(image_min_dim));
    kv("IMAGE_SHAPE", "[" + std::to_string(image_shape[0]) + " " + std::to_string(image_shape[1]) +
                          " " + std::to_string(image_shape[2]) + "]");
    kv("LEARNING_RATE", fmt(learning_rate));
    kv("MASK_SHAPE", "[" + std::to_string(mask_shape[0]) + "," + std::to_string(mask_shape[1]) + "]");
    {
        std::string v = "(";
        for (size_t i = 0; i < rpn_anchor_scales.size(); ++i)
            v += (i ? ", " : "") + fmt(rpn_anchor_scales[i]);
        kv("RPN_ANCHOR_SCALES", v + ")");
    }
    kv("STEPS_PER_EPOCH", std::to_string(steps_per_epoch));
    kv("WEIGHT_DECAY", fmt(weight_decay));
    {
        std::string v = "(";
        for (size_t i = 0; i < rpn_anchor_ratios.size(); ++i)
            v += (i ? ", " : "") + fmt(rpn_anchor_ratios[i]);
        kv("RPN_ANCHOR_RATIOS", v + ")");
    }
    kv("RPN_POS_IOU", fmt(rpn_pos_iou));
    kv("RPN_NEG_IOU", fmt(rpn_neg_iou));
    kv("RPN_BATCH", std::to_string(rpn_batch));
    kv("RPN_POS_FRACTION", fmt(rpn_pos_fraction));
    kv("PRE_NMS_TOPK_TRAIN", std::to_string(pre_nms_topk_train));
    kv("PRE_NMS_TOPK_EVAL", std::to_string(pre_nms_topk_eval));
    kv("POST_NMS_TOPK_TRAIN", std::to_string(post_nms_topk_train));
    kv("POST_NMS_TOPK_EVAL", std::to_string(post_nms_topk_eval));
    kv("RPN_NMS_IOU", fmt(rpn_nms_iou));
    kv("ROI_BATCH", std::to_string(roi_batch));
    kv("ROI_POS_FRACTION", fmt(roi_pos_fraction));
    kv("ROI_FG_IOU", fmt(roi_fg_iou));
    kv("ROI_BG_IOU_MAX", fmt(roi_bg_iou_max));
    kv("ROI_SAMPLING_RATIO", std::to_string(roi_sampling_ratio));
    kv("DETECT_SCORE_THRESH", fmt(detect_score_thresh));
    kv("DETECT_NMS_IOU", fmt(detect_nms_iou));
    kv("DETECT_MAX_DETS", std::to_string(detect_max_dets));
    kv("MASK_PASTE_THRESH", fmt(mask_paste_thresh));
    kv("LOSS_LAMBDA", fmt(loss_lambda));
    kv("SMOOTH_L1_BETA", fmt(smooth_l1_beta));
    kv("DELTA_STD", "(" + fmt(delta_std[0]) + ", " + fmt(delta_std[1]) + ", " + fmt(delta_std[2]) +
                        ", " + fmt(delta_std[3]) + ")");
    kv("TOTAL_EPOCHS", std::to_string(total_epochs));
    {
        std::string v;
        for (size_t i = 0; i < lr_drops.size(); ++i)
            v += (i ? " " : "") + std::to_string(lr_drops[i].first) + ":" + fmt(lr_drops[i].second);
        kv("LR_DROPS", v);
    }
    kv("MOMENTUM", fmt(momentum));
    kv("GRAD_CLIP_NORM", fmt(grad_clip_norm));
    kv("CHECKPOINT_EVERY", std::to_string(checkpoint_every));
    kv("TOTAL_STEPS_OVERRIDE", std::to_string(total_steps_override));
    kv("DEPTH_MULTIPLIER", fmt(depth_multiplier));
    kv("FPN_CHANNELS", std::to_string(fpn_channels));
    kv("RPN_CONV_CHANNELS", std::to_string(rpn_conv_channels));
    kv("BOX_HEAD_DIM", std::to_string(box_head_dim));
    kv("MASK_HEAD_CHANNELS", std::to_string(mask_head_channels));
    kv("NUM_CLASSES", std::to_string(num_classes));
    kv("INFER_BN_BATCH", infer_bn_batch ? "true" : "false");
    kv("TRAIN_BN_BACKBONE", train_bn_backbone ? "true" : "false");
    kv("TRAIN_BN_HEADS", train_bn_heads ? "true" : "false");
    kv("TRAIN_ADD_GT_PROPOSALS", train_add_gt_proposals ? "true" : "false");
    kv("AUTHENTIC_IN_TRAIN", authentic_in_train ? "true" : "false");
    kv("SEED", std::to_string(seed));
    kv("PARALLEL_KERNELS", parallel_kernels ? "true" : "false");
    kv("THREADS", std::to_string(threads));
    return out;
}

}  // namespace splicedet::config
