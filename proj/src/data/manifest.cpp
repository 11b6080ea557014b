#include "splicedet/data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "splicedet/core/error.hpp"
#include "splicedet/data/transforms.hpp"

namespace splicedet::data {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string Manifest::resolve(const std::string& rel) const {
    if (rel.empty()) return rel;
    const fs::path p(rel);
    if (p.is_absolute()) return rel;
    return (fs::path(root) / p).string();
}

std::string category_from_filename(const std::string& filename) {
    static const std::map<std::string, std::string> kCodes = {
        {"ani", "animal"},    {"arc", "architecture"}, {"art", "art"},
        {"cha", "character"}, {"ind", "indoor"},       {"nat", "nature"},
        {"pla", "plant"},     {"sce", "scene"},        {"txt", "texture"},
    };
    // CASIA-style: Au_ani_0001.jpg / Sp_..., code after the first underscore.
    const auto first = filename.find('_');
    if (first == std::string::npos || first + 4 > filename.size()) return "";
    const std::string code = filename.substr(first + 1, 3);
    const auto it = kCodes.find(code);
    return it == kCodes.end() ? "" : it->second;
}

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string stem_of(const std::string& filename) { return fs::path(filename).stem().string(); }

}  // namespace

Manifest build_dataset(const BuildOptions& opts) {
    check(fs::exists(opts.images_dir), "build_dataset: images dir not found: " + opts.images_dir);
    check(fs::exists(opts.annotations_json),
          "build_dataset: annotation file not found: " + opts.annotations_json);
    fs::create_directories(opts.out_dir);
    fs::create_directories(fs::path(opts.out_dir) / "masks");

    const ViaAnnotations via = parse_via_annotations(read_text(opts.annotations_json));

    // Every decodable image on disk becomes an entry; images absent from the
    // annotation document (or with zero regions) are authentic.
    std::vector<std::string> filenames;
    for (const auto& e : fs::directory_iterator(opts.images_dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        std::string lower;
        for (char c : ext) lower += static_cast<char>(std::tolower(c));
        if (lower == ".png" || lower == ".ppm" || lower == ".pgm" || lower == ".jpg" ||
            lower == ".jpeg")
            filenames.push_back(e.path().filename().string());
    }
    std::sort(filenames.begin(), filenames.end());
    check(!filenames.empty(), "build_dataset: no images found in " + opts.images_dir);

    Manifest manifest;
    manifest.root = fs::absolute(opts.out_dir).string();

    const int n = static_cast<int>(filenames.size());
    const int n_train = static_cast<int>(opts.train_fraction * n);
    const int n_val = static_cast<int>(opts.val_fraction * n);
    const int n_test = n - n_train - n_val;
    const DatasetSplit split = split_dataset(filenames, {n_train, n_val, n_test}, opts.seed);
    std::map<std::string, std::string> split_of;
    for (const auto& id : split.train_ids) split_of[id] = "train";
    for (const auto& id : split.val_ids) split_of[id] = "val";
    for (const auto& id : split.test_ids) split_of[id] = "test";

    const fs::path image_root = fs::absolute(opts.images_dir);
    for (const auto& filename : filenames) {
        ManifestEntry entry;
        entry.id = stem_of(filename);
        entry.image_path = (image_root / filename).string();
        entry.annotation_path = fs::absolute(opts.annotations_json).string();
        entry.split = split_of[filename];
        int h = 0, w = 0;
        if (!core::read_image_size(entry.image_path, h, w))
            throw DataError("build_dataset: cannot read dimensions of " + entry.image_path);
        entry.height = h;
        entry.width = w;

        const auto it = via.by_image.find(filename);
        const std::vector<PolygonRegion>* regions =
            it != via.by_image.end() ? &it->second : nullptr;
        entry.num_regions = regions ? static_cast<int>(regions->size()) : 0;

        const auto cat_it = via.category_by_image.find(filename);
        entry.category =
            cat_it != via.category_by_image.end() ? cat_it->second : category_from_filename(filename);

        core::MaskU8 union_mask(h, w);
        if (regions) {
            for (size_t r = 0; r < regions->size(); ++r) {
                const core::MaskU8 mask = rasterize_polygon((*regions)[r], h, w);
                const std::string rel = "masks/" + entry.id + "_r" + std::to_string(r) + ".png";
                core::write_mask_png((fs::path(opts.out_dir) / rel).string(), mask);
                entry.mask_paths.push_back(rel);
                for (size_t i = 0; i < mask.px.size(); ++i)
                    if (mask.px[i]) union_mask.px[i] = 1;
            }
        }
        const std::string union_rel = "masks/" + entry.id + "_union.png";
        core::write_mask_png((fs::path(opts.out_dir) / union_rel).string(), union_mask);
        entry.union_mask_path = union_rel;
        manifest.entries.push_back(std::move(entry));
    }
    save_manifest((fs::path(opts.out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

void save_manifest(const std::string& manifest_path, const Manifest& manifest) {
    ordered_json doc;
    doc["format"] = "splicedet-manifest-v1";
    ordered_json samples = ordered_json::array();
    for (const auto& e : manifest.entries) {
        ordered_json s;
        s["id"] = e.id;
        s["image"] = e.image_path;
        s["annotation"] = e.annotation_path;
        s["split"] = e.split;
        s["category"] = e.category;
        s["height"] = e.height;
        s["width"] = e.width;
        s["num_regions"] = e.num_regions;
        s["masks"] = e.mask_paths;
        s["union_mask"] = e.union_mask_path;
        samples.push_back(s);
    }
    doc["samples"] = samples;
    std::ofstream f(manifest_path, std::ios::trunc);
    check(static_cast<bool>(f), "save_manifest: cannot write " + manifest_path);
    f << doc.dump(1) << "\n";
}

Manifest load_manifest(const std::string& manifest_path) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(read_text(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("manifest parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    Manifest manifest;
    manifest.root = fs::absolute(fs::path(manifest_path)).parent_path().string();
    if (!doc.contains("samples") || !doc["samples"].is_array())
        throw DataError("manifest: missing samples array in " + manifest_path);
    for (const auto& s : doc["samples"]) {
        ManifestEntry e;
        e.id = s.value("id", "");
        e.image_path = s.value("image", "");
        e.annotation_path = s.value("annotation", "");
        e.split = s.value("split", "");
        e.category = s.value("category", "");
        e.height = s.value("height", 0);
        e.width = s.value("width", 0);
        e.num_regions = s.value("num_regions", 0);
        if (s.contains("masks"))
            for (const auto& m : s["masks"]) e.mask_paths.push_back(m.get<std::string>());
        e.union_mask_path = s.value("union_mask", "");
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

std::vector<std::string> validate_dataset(const Manifest& manifest) {
    std::vector<std::string> problems;
    std::map<std::string, ViaAnnotations> via_cache;
    for (const auto& e : manifest.entries) {
        const std::string annotation = manifest.resolve(e.annotation_path);
        if (annotation.empty()) continue;
        if (!via_cache.count(annotation)) {
            try {
                via_cache[annotation] = parse_via_annotations(read_text(annotation));
            } catch (const Error& err) {
                problems.push_back(std::string("annotation unreadable: ") + err.what());
                continue;
            }
        }
        const auto& via = via_cache[annotation];
        const std::string filename = fs::path(e.image_path).filename().string();
        const auto it = via.by_image.find(filename);
        const size_t n_regions = it != via.by_image.end() ? it->second.size() : 0;
        if (static_cast<int>(n_regions) != e.num_regions) {
            problems.push_back(e.id + ": manifest lists " + std::to_string(e.num_regions) +
                               " regions, annotation has " + std::to_string(n_regions));
            continue;
        }
        core::MaskU8 union_mask(e.height, e.width);
        for (size_t r = 0; r < n_regions; ++r) {
            core::MaskU8 expected;
            try {
                expected = rasterize_polygon(it->second[r], e.height, e.width);
            } catch (const Error& err) {
                problems.push_back(e.id + " region " + std::to_string(r) + ": " + err.what());
                continue;
            }
            for (size_t i = 0; i < expected.px.size(); ++i)
                if (expected.px[i]) union_mask.px[i] = 1;
            if (r >= e.mask_paths.size()) {
                problems.push_back(e.id + ": missing mask file for region " + std::to_string(r));
                continue;
            }
            core::MaskU8 stored;
            try {
                stored = core::read_mask_png(manifest.resolve(e.mask_paths[r]));
            } catch (const Error& err) {
                problems.push_back(e.id + ": " + err.what());
                continue;
            }
            if (stored.h != expected.h || stored.w != expected.w || stored.px != expected.px)
                problems.push_back(e.id + ": mask mismatch in " + e.mask_paths[r]);
        }
        if (!e.union_mask_path.empty()) {
            try {
                const core::MaskU8 stored = core::read_mask_png(manifest.resolve(e.union_mask_path));
                if (stored.px != union_mask.px)
                    problems.push_back(e.id + ": union mask mismatch in " + e.union_mask_path);
            } catch (const Error& err) {
                problems.push_back(e.id + ": " + err.what());
            }
        }
    }
    return problems;
}

DatasetStats dataset_stats(const Manifest& manifest) {
    DatasetStats st;
    st.total = static_cast<int>(manifest.entries.size());
    bool first_spliced = true;
    for (const auto& e : manifest.entries) {
        if (e.num_regions == 0) {
            ++st.authentic;
            ++st.authentic_per_category[e.category.empty() ? "unknown" : e.category];
        } else {
            ++st.spliced;
            if (first_spliced) {
                st.min_regions = st.max_regions = e.num_regions;
                first_spliced = false;
            } else {
                st.min_regions = std::min(st.min_regions, e.num_regions);
                st.max_regions = std::max(st.max_regions, e.num_regions);
            }
        }
    }
    return st;
}

DatasetStats dataset_stats(const std::vector<AnnotatedSample>& samples) {
    DatasetStats st;
    st.total = static_cast<int>(samples.size());
    bool first_spliced = true;
    for (const auto& s : samples) {
        if (s.regions.empty()) {
            ++st.authentic;
            ++st.authentic_per_category[s.category.empty() ? "unknown" : s.category];
        } else {
            ++st.spliced;
            const int k = static_cast<int>(s.regions.size());
            if (first_spliced) {
                st.min_regions = st.max_regions = k;
                first_spliced = false;
            } else {
                st.min_regions = std::min(st.min_regions, k);
                st.max_regions = std::max(st.max_regions, k);
            }
        }
    }
    return st;
}

AnnotatedSample load_sample(const Manifest& manifest, const ManifestEntry& entry) {
    AnnotatedSample s;
    s.source_id = entry.id;
    s.category = entry.category;
    s.image = core::read_image(manifest.resolve(entry.image_path));
    for (const auto& rel : entry.mask_paths)
        s.masks.push_back(core::read_mask_png(manifest.resolve(rel)));
    // Polygons are reloaded from the annotation document only when needed;
    // training consumes masks directly.
    return s;
}

}  // namespace splicedet::data
