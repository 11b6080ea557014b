// splicedet: multiple-image-splicing detection pipeline CLI.
//
// Subcommands: dataset build|validate|stats|synth, train, kfold, detect,
// eval, params. Exit codes: 0 ok, 1 usage, 2 data validation, 3 runtime.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "splicedet/cli/commands.hpp"
#include "splicedet/core/error.hpp"

using namespace splicedet;

namespace {

std::string default_data_root() {
    const char* env = std::getenv("SPLICEDET_DATA_ROOT");
    return env ? env : "";
}

std::string resolve_manifest(const std::string& given) {
    if (!given.empty()) return given;
    const std::string root = default_data_root();
    if (!root.empty()) return root + "/manifest.json";
    throw Error("no manifest given and SPLICEDET_DATA_ROOT is unset");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiple image splicing detection (MobileNet V1 Mask R-CNN)"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "config file (flat KEY VALUE text)");
    app.add_option("--override", overrides, "config override KEY=VALUE (repeatable)");
    app.add_option("--seed", seed, "seed override");
    app.add_option("--out", out_dir, "output directory");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "dataset tooling");
    dataset->require_subcommand(1);

    cli::DatasetBuildArgs build_args;
    auto* build = dataset->add_subcommand("build", "parse VIA annotations, emit masks + manifest");
    build->add_option("--images", build_args.images_dir, "image directory")->required();
    build->add_option("--annotations", build_args.annotations, "VIA project JSON")->required();
    build->add_option("--train-fraction", build_args.train_fraction, "train split fraction");
    build->add_option("--val-fraction", build_args.val_fraction, "val split fraction");

    std::string manifest_path;
    auto* validate = dataset->add_subcommand("validate", "re-rasterize and compare stored masks");
    validate->add_option("--manifest", manifest_path, "manifest.json path");
    auto* stats = dataset->add_subcommand("stats", "dataset counts per category and status");
    stats->add_option("--manifest", manifest_path, "manifest.json path");

    cli::DatasetSynthArgs synth_args;
    auto* synth = dataset->add_subcommand("synth", "generate a synthetic multi-splice fixture");
    synth->add_option("--n", synth_args.n_images, "number of images");
    synth->add_option("--height", synth_args.height, "image height");
    synth->add_option("--width", synth_args.width, "image width");
    synth->add_option("--min-splices", synth_args.min_splices, "minimum patches per image");
    synth->add_option("--max-splices", synth_args.max_splices, "maximum patches per image");

    // train / kfold
    std::string train_manifest;
    auto* train_cmd = app.add_subcommand("train", "train on a manifest's train split");
    train_cmd->add_option("--data", train_manifest, "manifest.json (default $SPLICEDET_DATA_ROOT)");

    int k_folds = 5;
    auto* kfold_cmd = app.add_subcommand("kfold", "k-fold cross-validation training");
    kfold_cmd->add_option("--data", train_manifest, "manifest.json (default $SPLICEDET_DATA_ROOT)");
    kfold_cmd->add_option("--k", k_folds, "number of folds");

    // detect / eval / params
    std::string checkpoint_path;
    std::vector<std::string> images;
    auto* detect_cmd = app.add_subcommand("detect", "run detection, write overlays + JSON");
    detect_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint archive");
    detect_cmd->add_option("images", images, "image files")->required();

    std::string predictions_path;
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    eval_cmd->add_option("--predictions", predictions_path, "detections.json")->required();
    eval_cmd->add_option("--data", train_manifest, "manifest.json (default $SPLICEDET_DATA_ROOT)");

    auto* params_cmd = app.add_subcommand("params", "parameter accounting report");

    CLI11_PARSE(app, argc, argv);

    try {
        const config::RunConfig cfg = cli::make_config(config_path, overrides, seed);
        if (build->parsed()) {
            build_args.out_dir = out_dir;
            build_args.seed = cfg.seed;
            return cli::cmd_dataset_build(build_args);
        }
        if (validate->parsed()) return cli::cmd_dataset_validate(resolve_manifest(manifest_path));
        if (stats->parsed()) return cli::cmd_dataset_stats(resolve_manifest(manifest_path));
        if (synth->parsed()) {
            synth_args.out_dir = out_dir;
            synth_args.seed = cfg.seed;
            return cli::cmd_dataset_synth(synth_args);
        }
        if (train_cmd->parsed()) return cli::cmd_train(cfg, resolve_manifest(train_manifest), out_dir);
        if (kfold_cmd->parsed())
            return cli::cmd_kfold(cfg, resolve_manifest(train_manifest), k_folds, out_dir);
        if (detect_cmd->parsed()) return cli::cmd_detect(cfg, checkpoint_path, images, out_dir);
        if (eval_cmd->parsed())
            return cli::cmd_eval(cfg, predictions_path, resolve_manifest(train_manifest), out_dir);
        if (params_cmd->parsed()) return cli::cmd_params(cfg, out_dir);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitRuntime;
    }
    return cli::kExitUsage;
}
