#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splicedet/data/annotations.hpp"

namespace splicedet::data {

struct ManifestEntry {
    std::string id;
    std::string image_path;       // relative to the manifest directory
    std::string annotation_path;  // shared VIA project, empty for authentic-only sets
    std::string split;            // train | val | test
    std::string category;
    int height = 0, width = 0;
    int num_regions = 0;
    std::vector<std::string> mask_paths;  // one per region
    std::string union_mask_path;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::string root;  // directory the relative paths resolve against

    std::string resolve(const std::string& rel) const;
};

struct BuildOptions {
    std::string images_dir;
    std::string annotations_json;
    std::string out_dir;
    double train_fraction = 0.8;
    double val_fraction = 0.1;  // remainder goes to test
    std::uint64_t seed = 0;
};

/// Parses the VIA project, rasterizes every region to PNG masks (one per
/// region plus a union per image), assigns splits, and writes
/// <out_dir>/manifest.json. Returns the manifest.
Manifest build_dataset(const BuildOptions& opts);

Manifest load_manifest(const std::string& manifest_path);
void save_manifest(const std::string& manifest_path, const Manifest& manifest);

/// Re-rasterizes all annotations and compares against the stored masks
/// bit-exactly. Returns human-readable mismatch descriptions (empty = valid).
std::vector<std::string> validate_dataset(const Manifest& manifest);

struct DatasetStats {
    int total = 0;
    int authentic = 0;
    int spliced = 0;
    int min_regions = 0;  // over spliced images
    int max_regions = 0;
    std::map<std::string, int> authentic_per_category;
};

DatasetStats dataset_stats(const Manifest& manifest);
DatasetStats dataset_stats(const std::vector<AnnotatedSample>& samples);

/// Loads image pixels and ground-truth masks for training/evaluation.
AnnotatedSample load_sample(const Manifest& manifest, const ManifestEntry& entry);

/// MISD authentic images follow CASIA-style names (Au_ani_0001...); map the
/// three-letter code to the category name, or "" when unknown.
std::string category_from_filename(const std::string& filename);

}  // namespace splicedet::data
