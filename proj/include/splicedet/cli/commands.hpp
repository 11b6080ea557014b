#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "splicedet/config/run_config.hpp"
#include "splicedet/data/manifest.hpp"
#include "splicedet/eval/metrics.hpp"
#include "splicedet/model/mask_rcnn.hpp"

namespace splicedet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitRuntime = 3;

/// Loads the config file (when given), applies --override assignments and the
/// --seed flag, and switches the kernel execution mode.
config::RunConfig make_config(const std::string& config_path,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> seed);

struct DatasetBuildArgs {
    std::string images_dir, annotations, out_dir;
    double train_fraction = 0.8, val_fraction = 0.1;
    std::uint64_t seed = 0;
};
int cmd_dataset_build(const DatasetBuildArgs& args);
int cmd_dataset_validate(const std::string& manifest_path);
int cmd_dataset_stats(const std::string& manifest_path);

struct DatasetSynthArgs {
    std::string out_dir;
    int n_images = 20;
    int height = 128, width = 128;
    int min_splices = 3, max_splices = 7;
    std::uint64_t seed = 0;
};
int cmd_dataset_synth(const DatasetSynthArgs& args);

int cmd_train(const config::RunConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir);
int cmd_kfold(const config::RunConfig& cfg, const std::string& manifest_path, int k,
              const std::string& out_dir);
int cmd_detect(const config::RunConfig& cfg, const std::string& checkpoint_path,
               const std::vector<std::string>& image_paths, const std::string& out_dir);
int cmd_eval(const config::RunConfig& cfg, const std::string& predictions_path,
             const std::string& manifest_path, const std::string& out_dir);
int cmd_params(const config::RunConfig& cfg, const std::string& out_dir);

// --- pipeline glue shared with the tests ---

/// Resize-and-pad a sample into network space and package it for training.
model::TrainSample to_train_sample(const data::AnnotatedSample& sample, int target);

/// Inference on an arbitrary-size image: detections mapped back to original
/// pixel coordinates plus the forged-percentage summary.
struct InferenceResult {
    std::vector<roi::Detection> detections;  // original image space
    eval::ForgedPercent forged;
};
InferenceResult run_inference(const model::MaskRcnn& model, const core::ImageU8& image);

/// Ground truth in original image space for the given manifest entries.
std::vector<eval::ImageGroundTruth> ground_truth_from_manifest(
    const data::Manifest& manifest, const std::vector<std::string>& ids);

eval::ImagePredictions to_image_predictions(const std::string& image_id, int height, int width,
                                            const InferenceResult& result);

}  // namespace splicedet::cli
