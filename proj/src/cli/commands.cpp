#include "splicedet/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "splicedet/cli/overlay.hpp"
#include "splicedet/core/parallel.hpp"
#include "splicedet/data/fixtures.hpp"
#include "splicedet/data/transforms.hpp"
#include "splicedet/backbone/params.hpp"
#include "splicedet/train/checkpoint.hpp"
#include "splicedet/train/kfold.hpp"
#include "splicedet/train/trainer.hpp"

namespace splicedet::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

config::RunConfig make_config(const std::string& config_path,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> seed) {
    config::RunConfig cfg =
        config_path.empty() ? config::RunConfig{} : config::RunConfig::from_file(config_path);
    for (const auto& assignment : overrides) cfg.apply_override(assignment);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    par::set_enabled(cfg.parallel_kernels);
    if (cfg.threads > 0) par::set_max_threads(cfg.threads);
    return cfg;
}

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    check(static_cast<bool>(f), "cannot write " + path);
    f << text;
}

train::TrainConfig train_config_of(const config::RunConfig& cfg) {
    train::TrainConfig tc;
    tc.base_lr = cfg.learning_rate;
    tc.lr_drops = cfg.lr_drops;
    tc.total_epochs = cfg.total_epochs;
    tc.momentum = cfg.momentum;
    tc.weight_decay = cfg.weight_decay;
    tc.steps_per_epoch = cfg.steps_per_epoch;
    tc.seed = cfg.seed;
    tc.grad_clip_norm = cfg.grad_clip_norm;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.total_steps_override = cfg.total_steps_override;
    return tc;
}

std::vector<model::TrainSample> load_train_samples(const data::Manifest& manifest,
                                                   const std::set<std::string>& ids,
                                                   const config::RunConfig& cfg) {
    std::vector<model::TrainSample> samples;
    for (const auto& entry : manifest.entries) {
        if (!ids.empty() && !ids.count(entry.id)) continue;
        if (entry.num_regions == 0 && !cfg.authentic_in_train) continue;
        const data::AnnotatedSample s = data::load_sample(manifest, entry);
        samples.push_back(to_train_sample(s, cfg.image_shape[0]));
    }
    return samples;
}

std::string checkpoint_meta(const config::RunConfig& cfg, int epoch, int iter) {
    ordered_json meta;
    meta["epoch"] = epoch;
    meta["iter"] = iter;
    meta["run_config"] = cfg.to_text();
    return meta.dump();
}

eval::MetricsReport evaluate_on_ids(const model::MaskRcnn& model, const data::Manifest& manifest,
                                    const std::vector<std::string>& ids,
                                    std::vector<eval::ImagePredictions>* out_preds = nullptr) {
    std::map<std::string, const data::ManifestEntry*> by_id;
    for (const auto& e : manifest.entries) by_id[e.id] = &e;
    std::vector<eval::ImagePredictions> preds;
    for (const auto& id : ids) {
        const auto* entry = by_id.at(id);
        const core::ImageU8 image = core::read_image(manifest.resolve(entry->image_path));
        const InferenceResult inf = run_inference(model, image);
        preds.push_back(to_image_predictions(id, image.h, image.w, inf));
    }
    const auto gts = ground_truth_from_manifest(manifest, ids);
    eval::EvalConfig ecfg;
    const eval::MetricsReport report = eval::evaluate(preds, gts, ecfg);
    if (out_preds) *out_preds = std::move(preds);
    return report;
}

}  // namespace

model::TrainSample to_train_sample(const data::AnnotatedSample& sample, int target) {
    const data::ResizedSample rs = data::resize_and_pad(sample.image, sample.masks, target);
    model::TrainSample out;
    out.image = core::to_chw_float(rs.image);
    for (const auto& mask : rs.masks) {
        const rpn::Box box = model::mask_bbox(mask);
        if (box.degenerate()) continue;  // region vanished in the resize
        out.gt_boxes.push_back(box);
        out.gt_masks.push_back(mask);
    }
    return out;
}

InferenceResult run_inference(const model::MaskRcnn& model, const core::ImageU8& image) {
    const int target = model.cfg().image_shape[0];
    const data::ResizedSample rs = data::resize_and_pad(image, {}, target);
    const core::Tensor input = core::to_chw_float(rs.image);
    const auto net_dets = model.detect(input);

    InferenceResult result;
    std::vector<core::MaskU8> masks;
    for (const auto& det : net_dets) {
        roi::Detection mapped;
        const auto orig = data::inverse_transform_box({det.box.x1, det.box.y1, det.box.x2, det.box.y2},
                                                      rs.scale, rs.pad_top, rs.pad_left);
        rpn::Box box{orig[0], orig[1], orig[2], orig[3]};
        box = rpn::clip_box(box, image.h, image.w);
        if (box.degenerate()) continue;
        mapped.box = box;
        mapped.score = det.score;
        mapped.class_id = det.class_id;
        mapped.mask28 = det.mask28;
        mapped.image_mask = roi::paste_mask(det.mask28, box, image.h, image.w, model.cfg().mask_paste_thresh);
        masks.push_back(mapped.image_mask);
        result.detections.push_back(std::move(mapped));
    }
    result.forged = eval::forged_percentage(masks, image.h, image.w);
    return result;
}

std::vector<eval::ImageGroundTruth> ground_truth_from_manifest(const data::Manifest& manifest,
                                                               const std::vector<std::string>& ids) {
    std::map<std::string, const data::ManifestEntry*> by_id;
    for (const auto& e : manifest.entries) by_id[e.id] = &e;
    std::vector<eval::ImageGroundTruth> out;
    for (const auto& id : ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("manifest: unknown image id '" + id + "'");
        const auto* entry = it->second;
        eval::ImageGroundTruth gt;
        gt.image_id = id;
        gt.height = entry->height;
        gt.width = entry->width;
        for (const auto& rel : entry->mask_paths) {
            eval::GtRegion region;
            region.mask = core::read_mask_png(manifest.resolve(rel));
            region.box = model::mask_bbox(region.mask);
            gt.regions.push_back(std::move(region));
        }
        out.push_back(std::move(gt));
    }
    return out;
}

eval::ImagePredictions to_image_predictions(const std::string& image_id, int height, int width,
                                            const InferenceResult& result) {
    eval::ImagePredictions preds;
    preds.image_id = image_id;
    preds.height = height;
    preds.width = width;
    for (const auto& det : result.detections) {
        eval::PredRegion region;
        region.box = det.box;
        region.score = det.score;
        region.mask = det.image_mask;
        preds.regions.push_back(std::move(region));
    }
    return preds;
}

int cmd_dataset_build(const DatasetBuildArgs& args) {
    data::BuildOptions opts;
    opts.images_dir = args.images_dir;
    opts.annotations_json = args.annotations;
    opts.out_dir = args.out_dir;
    opts.train_fraction = args.train_fraction;
    opts.val_fraction = args.val_fraction;
    opts.seed = args.seed;
    const data::Manifest manifest = data::build_dataset(opts);
    std::cout << "built manifest with " << manifest.entries.size() << " entries at "
              << (fs::path(args.out_dir) / "manifest.json").string() << "\n";
    return kExitOk;
}

int cmd_dataset_validate(const std::string& manifest_path) {
    const data::Manifest manifest = data::load_manifest(manifest_path);
    const auto problems = data::validate_dataset(manifest);
    for (const auto& p : problems) std::cerr << "validate: " << p << "\n";
    if (!problems.empty()) {
        std::cerr << "validate: " << problems.size() << " problem(s) found\n";
        return kExitDataError;
    }
    std::cout << "validate: ok (" << manifest.entries.size() << " entries)\n";
    return kExitOk;
}

int cmd_dataset_stats(const std::string& manifest_path) {
    const data::Manifest manifest = data::load_manifest(manifest_path);
    const data::DatasetStats st = data::dataset_stats(manifest);
    std::cout << "total " << st.total << "\n";
    std::cout << "authentic " << st.authentic << "\n";
    std::cout << "spliced " << st.spliced << "\n";
    if (st.spliced > 0) {
        std::cout << "regions_min " << st.min_regions << "\n";
        std::cout << "regions_max " << st.max_regions << "\n";
    }
    for (const auto& [category, count] : st.authentic_per_category)
        std::cout << "category " << category << " " << count << "\n";
    return kExitOk;
}

int cmd_dataset_synth(const DatasetSynthArgs& args) {
    const auto samples = data::make_synthetic_fixture(
        args.n_images, {args.height, args.width}, {args.min_splices, args.max_splices}, args.seed);
    const std::string annotation = data::write_fixture_dataset(args.out_dir, samples);
    std::cout << "wrote " << samples.size() << " images and " << annotation << "\n";
    return kExitOk;
}

int cmd_train(const config::RunConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "checkpoints");
    write_text_file((fs::path(out_dir) / "effective_config.cfg").string(), cfg.to_text());

    const data::Manifest manifest = data::load_manifest(manifest_path);
    std::set<std::string> train_ids;
    bool any_split = false;
    for (const auto& e : manifest.entries)
        if (!e.split.empty()) any_split = true;
    for (const auto& e : manifest.entries)
        if (!any_split || e.split == "train") train_ids.insert(e.id);
    const auto samples = load_train_samples(manifest, train_ids, cfg);
    if (samples.empty()) {
        std::cerr << "train: no training samples in manifest\n";
        return kExitDataError;
    }

    model::MaskRcnn model(cfg);
    std::ofstream log_file((fs::path(out_dir) / "log.csv").string(), std::ios::trunc);
    check(static_cast<bool>(log_file), "train: cannot open log.csv");
    log_file << train::log_csv_header() << "\n";

    train::TrainHooks hooks;
    hooks.on_row = [&log_file](const train::TrainLogRow& row) {
        log_file << train::log_csv_row(row) << "\n";
        log_file.flush();
    };
    hooks.save_checkpoint = [&](int epoch, int iter, const train::SgdOptimizer& opt) {
        const auto ckpt = train::snapshot(model.params(), opt.state(), checkpoint_meta(cfg, epoch, iter));
        char name[64];
        std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
        train::save_checkpoint((fs::path(out_dir) / "checkpoints" / name).string(), ckpt);
        train::save_checkpoint((fs::path(out_dir) / "checkpoint_final.ckpt").string(), ckpt);
    };

    const train::TrainResult result = train::train(model, samples, train_config_of(cfg), hooks);
    if (result.aborted) {
        write_text_file((fs::path(out_dir) / "ABORTED").string(), result.abort_reason + "\n");
        std::cerr << "train: aborted: " << result.abort_reason << "\n";
        return kExitRuntime;
    }
    std::cout << "train: " << result.log.size() << " iterations, final loss "
              << (result.log.empty() ? 0.0 : result.log.back().loss.l_total) << "\n";
    return kExitOk;
}

int cmd_kfold(const config::RunConfig& cfg, const std::string& manifest_path, int k,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "effective_config.cfg").string(), cfg.to_text());
    const data::Manifest manifest = data::load_manifest(manifest_path);

    std::vector<std::string> ids;
    bool any_split = false;
    for (const auto& e : manifest.entries)
        if (!e.split.empty()) any_split = true;
    for (const auto& e : manifest.entries)
        if (!any_split || e.split != "test") ids.push_back(e.id);

    const train::FoldPlan plan = train::kfold(ids, k, cfg.seed);
    train::FoldRunner runner = [&](const train::FoldPlan::Fold& fold, int index) {
        const fs::path fold_dir = fs::path(out_dir) / ("fold_" + std::to_string(index));
        fs::create_directories(fold_dir);
        config::RunConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(index) + 1;
        model::MaskRcnn model(fold_cfg);
        const std::set<std::string> train_ids(fold.train_ids.begin(), fold.train_ids.end());
        const auto samples = load_train_samples(manifest, train_ids, fold_cfg);
        check(!samples.empty(), "kfold: fold " + std::to_string(index) + " has no training samples");

        std::ofstream log_file((fold_dir / "log.csv").string(), std::ios::trunc);
        log_file << train::log_csv_header() << "\n";
        train::TrainHooks hooks;
        hooks.on_row = [&log_file](const train::TrainLogRow& row) {
            log_file << train::log_csv_row(row) << "\n";
        };
        train::train(model, samples, train_config_of(fold_cfg), hooks);

        const eval::MetricsReport report = evaluate_on_ids(model, manifest, fold.val_ids);
        write_text_file((fold_dir / "metrics.json").string(), eval::metrics_to_json(report));
        write_text_file((fold_dir / "metrics.csv").string(), eval::metrics_to_csv(report));
        return report;
    };
    const train::KfoldResult result = train::run_kfold(plan, runner);
    write_text_file((fs::path(out_dir) / "mean_metrics.json").string(),
                    eval::metrics_to_json(result.mean));
    write_text_file((fs::path(out_dir) / "mean_metrics.csv").string(),
                    eval::metrics_to_csv(result.mean));
    std::cout << "kfold: k=" << k << " mean F1 " << result.mean.f1 << "\n";
    return kExitOk;
}

int cmd_detect(const config::RunConfig& cfg, const std::string& checkpoint_path,
               const std::vector<std::string>& image_paths, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "effective_config.cfg").string(), cfg.to_text());
    model::MaskRcnn model(cfg);
    if (!checkpoint_path.empty()) {
        const train::Checkpoint ckpt = train::load_checkpoint(checkpoint_path);
        train::restore(model.params(), ckpt);
    }

    std::vector<std::string> paths = image_paths;
    std::sort(paths.begin(), paths.end(),
              [](const std::string& a, const std::string& b) {
                  return fs::path(a).filename().string() < fs::path(b).filename().string();
              });

    ordered_json images = ordered_json::array();
    for (const auto& path : paths) {
        const core::ImageU8 image = core::read_image(path);
        const InferenceResult inf = run_inference(model, image);
        const std::string stem = fs::path(path).stem().string();

        const core::ImageU8 overlay = render_overlay(image, inf.detections, inf.forged.per_region);
        core::write_png((fs::path(out_dir) / (stem + "_overlay.png")).string(), overlay);

        const eval::ImagePredictions preds = to_image_predictions(stem, image.h, image.w, inf);
        ordered_json img;
        img["image_id"] = preds.image_id;
        img["height"] = preds.height;
        img["width"] = preds.width;
        img["forged_percentage"] = inf.forged.total;
        ordered_json detections = ordered_json::array();
        for (size_t i = 0; i < preds.regions.size(); ++i) {
            const auto& r = preds.regions[i];
            ordered_json det;
            det["box"] = {r.box.x1, r.box.y1, r.box.x2, r.box.y2};
            det["score"] = r.score;
            det["region_percentage"] = inf.forged.per_region[i];
            det["rle"] = eval::rle_encode(r.mask);
            detections.push_back(det);
        }
        img["detections"] = detections;
        images.push_back(img);

        std::printf("%s forged_percentage=%.4f detections=%zu\n", fs::path(path).filename().c_str(),
                    inf.forged.total, inf.detections.size());
    }
    ordered_json doc;
    doc["format"] = "splicedet-predictions-v1";
    doc["images"] = images;
    write_text_file((fs::path(out_dir) / "detections.json").string(), doc.dump(1) + "\n");
    return kExitOk;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& predictions_path,
             const std::string& manifest_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "effective_config.cfg").string(), cfg.to_text());
    std::ifstream f(predictions_path);
    if (!f) throw DataError("eval: cannot open " + predictions_path);
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto preds = eval::predictions_from_json(text);
    const data::Manifest manifest = data::load_manifest(manifest_path);
    std::vector<std::string> ids;
    for (const auto& p : preds) ids.push_back(p.image_id);
    const auto gts = ground_truth_from_manifest(manifest, ids);
    eval::EvalConfig ecfg;
    (void)cfg;
    const eval::MetricsReport report = eval::evaluate(preds, gts, ecfg);
    write_text_file((fs::path(out_dir) / "metrics.json").string(), eval::metrics_to_json(report));
    write_text_file((fs::path(out_dir) / "metrics.csv").string(), eval::metrics_to_csv(report));
    std::printf("F1 %.4f P %.4f R %.4f\n", report.f1, report.precision, report.recall);
    return kExitOk;
}

int cmd_params(const config::RunConfig& cfg, const std::string& out_dir) {
    model::MaskRcnn model(cfg);
    const backbone::ParameterReport report = backbone::count_parameters(model.params());
    std::printf("total %lld\ntrainable %lld\nnon_trainable %lld\n",
                static_cast<long long>(report.total), static_cast<long long>(report.trainable),
                static_cast<long long>(report.non_trainable));
    for (const auto& row : report.per_layer)
        std::printf("layer %s %lld %s\n", row.name.c_str(), static_cast<long long>(row.count),
                    row.trainable ? "trainable" : "non-trainable");
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        ordered_json doc;
        doc["total"] = report.total;
        doc["trainable"] = report.trainable;
        doc["non_trainable"] = report.non_trainable;
        ordered_json layers = ordered_json::array();
        for (const auto& row : report.per_layer) {
            ordered_json l;
            l["name"] = row.name;
            l["count"] = row.count;
            l["trainable"] = row.trainable;
            layers.push_back(l);
        }
        doc["per_layer"] = layers;
        write_text_file((fs::path(out_dir) / "params.json").string(), doc.dump(1) + "\n");
    }
    return kExitOk;
}

}  // namespace splicedet::cli
