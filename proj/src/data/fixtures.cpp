#include "splicedet/data/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "splicedet/core/error.hpp"
#include "splicedet/core/rng.hpp"

namespace splicedet::data {

namespace {

using core::Rng;

// High-contrast patch palette (RGB).
constexpr std::uint8_t kPalette[][3] = {
    {220, 50, 47},  {38, 139, 210}, {133, 153, 0}, {211, 54, 130},
    {181, 137, 0},  {42, 161, 152}, {108, 113, 196}, {203, 75, 22},
};

std::uint32_t hash32(std::uint32_t x) {
    x ^= x >> 16;
    x *= 0x7feb352dU;
    x ^= x >> 15;
    x *= 0x846ca68bU;
    x ^= x >> 16;
    return x;
}

core::ImageU8 make_background(int h, int w, Rng& rng) {
    core::ImageU8 img(h, w, 3);
    const int base_r = static_cast<int>(rng.randint(90, 150));
    const int base_g = static_cast<int>(rng.randint(90, 150));
    const int base_b = static_cast<int>(rng.randint(90, 150));
    const double gx = rng.uniform(-30.0, 30.0);
    const double gy = rng.uniform(-30.0, 30.0);
    const auto noise_seed = static_cast<std::uint32_t>(rng.next_u64());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double grad = gx * x / w + gy * y / h;
            const int noise =
                static_cast<int>(hash32(noise_seed ^ (static_cast<std::uint32_t>(y) * 73856093U) ^
                                        (static_cast<std::uint32_t>(x) * 19349663U)) % 13) - 6;
            img.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(base_r + grad + noise, 0.0, 255.0));
            img.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(base_g + grad + noise, 0.0, 255.0));
            img.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(base_b + grad + noise, 0.0, 255.0));
        }
    return img;
}

PolygonRegion make_patch_polygon(double cx, double cy, double half, int shape) {
    PolygonRegion r;
    switch (shape % 4) {
        case 0:  // rectangle, slightly anisotropic
            r.vertices = {{cx - half, cy - half * 0.8}, {cx + half, cy - half * 0.8},
                          {cx + half, cy + half * 0.8}, {cx - half, cy + half * 0.8}};
            break;
        case 1:  // right triangle
            r.vertices = {{cx - half, cy - half}, {cx + half, cy - half}, {cx - half, cy + half}};
            break;
        case 2:  // diamond
            r.vertices = {{cx, cy - half}, {cx + half, cy}, {cx, cy + half}, {cx - half, cy}};
            break;
        default:  // hexagon
            r.vertices.clear();
            for (int k = 0; k < 6; ++k) {
                const double a = 2.0 * 3.14159265358979323846 * k / 6.0;
                r.vertices.push_back({cx + half * std::cos(a), cy + half * std::sin(a)});
            }
            break;
    }
    return r;
}

bool boxes_overlap(double ax1, double ay1, double ax2, double ay2, double bx1, double by1,
                   double bx2, double by2, double margin) {
    return !(ax2 + margin <= bx1 || bx2 + margin <= ax1 || ay2 + margin <= by1 ||
             by2 + margin <= ay1);
}

}  // namespace

std::vector<AnnotatedSample> make_synthetic_fixture(int n_images, std::pair<int, int> image_size,
                                                    std::pair<int, int> splice_range,
                                                    std::uint64_t seed, FixtureShapes shapes) {
    const auto [h, w] = image_size;
    const auto [k_min, k_max] = splice_range;
    check(n_images >= 0, "make_synthetic_fixture: negative image count");
    check(k_min >= 1 && k_max <= 20 && k_min <= k_max,
          "make_synthetic_fixture: splice_range must be within [1,20]");
    check(h >= 32 && w >= 32, "make_synthetic_fixture: image too small");

    Rng rng(seed);
    std::vector<AnnotatedSample> samples;
    for (int i = 0; i < n_images; ++i) {
        AnnotatedSample s;
        s.source_id = "fixture_" + std::to_string(i);
        s.category = "synthetic";
        s.image = make_background(h, w, rng);

        const int k = static_cast<int>(rng.randint(k_min, k_max));
        // Patch size adapts to the image area and splice count so that the
        // requested number of non-overlapping patches always has room.
        const double half_max =
            std::max(5.0, 0.5 * std::sqrt(0.35 * h * w / std::max(k, 1)));
        const double half_min = std::max(4.0, 0.8 * half_max);
        std::vector<std::array<double, 4>> placed;
        for (int p = 0; p < k; ++p) {
            bool ok = false;
            // Preferred size band first; fall back to smaller patches when a
            // crowded canvas leaves no room at the preferred size.
            for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
                const double lo = attempt < 200 ? half_min : std::max(4.0, 0.35 * half_max);
                const double hi = attempt < 200 ? half_max : half_min;
                const double half = rng.uniform(lo, hi);
                const double cx = rng.uniform(half + 2.0, w - half - 2.0);
                const double cy = rng.uniform(half + 2.0, h - half - 2.0);
                const double x1 = cx - half, y1 = cy - half, x2 = cx + half, y2 = cy + half;
                bool clash = false;
                for (const auto& b : placed)
                    if (boxes_overlap(x1, y1, x2, y2, b[0], b[1], b[2], b[3], 3.0)) {
                        clash = true;
                        break;
                    }
                if (clash) continue;
                const int shape = shapes == FixtureShapes::kRectangles ? 0 : static_cast<int>(rng.randint(4));
                PolygonRegion region = make_patch_polygon(cx, cy, half, shape);
                core::MaskU8 mask = rasterize_polygon(region, h, w);
                if (mask.area() == 0) continue;
                const auto& color = kPalette[rng.randint(8)];
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        if (mask.at(y, x)) {
                            s.image.at(y, x, 0) = color[0];
                            s.image.at(y, x, 1) = color[1];
                            s.image.at(y, x, 2) = color[2];
                        }
                placed.push_back({x1, y1, x2, y2});
                s.regions.push_back(std::move(region));
                s.masks.push_back(std::move(mask));
                ok = true;
            }
            if (!ok)
                throw Error("make_synthetic_fixture: image " + std::to_string(h) + "x" +
                            std::to_string(w) + " too small to place " + std::to_string(k) +
                            " patches");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string write_fixture_dataset(const std::string& dir,
                                  const std::vector<AnnotatedSample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    std::vector<std::string> filenames;
    for (size_t i = 0; i < samples.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "fixture_%04zu.png", i);
        filenames.emplace_back(name);
        core::write_png((fs::path(dir) / "images" / name).string(), samples[i].image);
    }
    const std::string annotation_path = (fs::path(dir) / "via_annotations.json").string();
    std::ofstream f(annotation_path, std::ios::trunc);
    check(static_cast<bool>(f), "write_fixture_dataset: cannot write " + annotation_path);
    f << to_via_json(samples, filenames);
    return annotation_path;
}

}  // namespace splicedet::data
