#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "splicedet/core/error.hpp"
#include "splicedet/core/rng.hpp"
#include "splicedet/data/annotations.hpp"
#include "splicedet/data/fixtures.hpp"
#include "splicedet/data/manifest.hpp"
#include "splicedet/data/transforms.hpp"

using namespace splicedet;
using namespace splicedet::data;

namespace {

// Even-odd ray cast to +x with the same half-open vertical rule the
// rasterizer uses; an independent per-pixel oracle.
bool point_in_polygon(const std::vector<std::array<double, 2>>& v, double px, double py) {
    bool inside = false;
    const size_t n = v.size();
    for (size_t i = 0; i < n; ++i) {
        const auto& a = v[i];
        const auto& b = v[(i + 1) % n];
        const double ylo = std::min(a[1], b[1]), yhi = std::max(a[1], b[1]);
        if (!(ylo <= py && py < yhi)) continue;
        const double xint = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
        if (xint > px) inside = !inside;
    }
    return inside;
}

std::string minimal_via_doc() {
    return R"({
      "_via_img_metadata": {
        "img0.png123": {
          "filename": "img0.png",
          "size": 123,
          "regions": [
            {"shape_attributes": {"name": "polygon",
                                  "all_points_x": [10, 50, 30],
                                  "all_points_y": [10, 12, 40]},
             "region_attributes": {}}
          ]
        }
      }
    })";
}

}  // namespace

TEST_CASE("parse_via_annotations: minimal document with one triangle") {
    const ViaAnnotations via = parse_via_annotations(minimal_via_doc());
    REQUIRE(via.by_image.size() == 1);
    const auto& regions = via.by_image.at("img0.png");
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].vertices.size() == 3);
    CHECK(via.warnings.empty());
}

TEST_CASE("parse_via_annotations: seven regions preserved in order") {
    std::string doc = R"({"_via_img_metadata": {"multi.png9": {"filename": "multi.png", "regions": [)";
    for (int i = 0; i < 7; ++i) {
        if (i) doc += ",";
        const int base = i * 20;
        doc += R"({"shape_attributes": {"name": "polygon", "all_points_x": [)" +
               std::to_string(base) + "," + std::to_string(base + 10) + "," + std::to_string(base) +
               R"(], "all_points_y": [0, 0, 10]}})";
    }
    doc += "]}}}";
    const ViaAnnotations via = parse_via_annotations(doc);
    const auto& regions = via.by_image.at("multi.png");
    REQUIRE(regions.size() == 7);
    for (int i = 0; i < 7; ++i)
        CHECK(regions[static_cast<size_t>(i)].vertices[0][0] == doctest::Approx(i * 20.0));
}

TEST_CASE("parse_via_annotations: circle shape rejected per-region, rest kept") {
    const std::string doc = R"({
      "_via_img_metadata": {
        "mix.png5": {"filename": "mix.png", "regions": [
          {"shape_attributes": {"name": "circle", "cx": 30, "cy": 30, "r": 10}},
          {"shape_attributes": {"name": "polygon",
                                "all_points_x": [0, 10, 0],
                                "all_points_y": [0, 0, 10]}}
        ]}
      }
    })";
    const ViaAnnotations via = parse_via_annotations(doc);
    CHECK(via.by_image.at("mix.png").size() == 1);
    REQUIRE(via.warnings.size() == 1);
    CHECK(via.warnings[0].region_index == 0);
    CHECK(via.warnings[0].reason.find("circle") != std::string::npos);
}

TEST_CASE("parse_via_annotations: malformed JSON reports a byte offset") {
    try {
        parse_via_annotations("{ \"_via_img_metadata\": { broken");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("parse_via_annotations: image entry with zero regions is authentic") {
    const std::string doc =
        R"({"_via_img_metadata": {"au.png7": {"filename": "au.png", "regions": []}}})";
    const ViaAnnotations via = parse_via_annotations(doc);
    REQUIRE(via.by_image.count("au.png") == 1);
    CHECK(via.by_image.at("au.png").empty());
}

TEST_CASE("rasterize_polygon: full-image rectangle is all ones") {
    PolygonRegion r;
    r.vertices = {{0, 0}, {8, 0}, {8, 6}, {0, 6}};
    const core::MaskU8 mask = rasterize_polygon(r, 6, 8);
    CHECK(mask.area() == 48);
}

TEST_CASE("rasterize_polygon: 4x4 axis-aligned square covers 16 pixels") {
    PolygonRegion r;
    r.vertices = {{2, 2}, {6, 2}, {6, 6}, {2, 6}};
    const core::MaskU8 mask = rasterize_polygon(r, 10, 10);
    CHECK(mask.area() == 16);
    // Scanline-fill oracle over every pixel center.
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            CHECK(static_cast<bool>(mask.at(y, x)) == point_in_polygon(r.vertices, x + 0.5, y + 0.5));
}

TEST_CASE("rasterize_polygon: right triangle matches per-pixel oracle") {
    PolygonRegion r;
    r.vertices = {{0, 0}, {10, 0}, {0, 10}};
    const core::MaskU8 mask = rasterize_polygon(r, 10, 10);
    std::int64_t oracle_area = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const bool in = point_in_polygon(r.vertices, x + 0.5, y + 0.5);
            oracle_area += in ? 1 : 0;
            CHECK(static_cast<bool>(mask.at(y, x)) == in);
        }
    CHECK(std::abs(mask.area() - oracle_area) <= 10);  // within one pixel-row
}

TEST_CASE("rasterize_polygon: degenerate polygon raises") {
    PolygonRegion r;
    r.vertices = {{0, 0}, {5, 5}};
    CHECK_THROWS_AS(rasterize_polygon(r, 10, 10), DataError);
}

TEST_CASE("rasterize_polygon agrees with the oracle on convex and random simple polygons") {
    core::Rng rng(101);
    // Convex: random triangles and regular k-gons; demand 100% agreement.
    for (int trial = 0; trial < 30; ++trial) {
        PolygonRegion r;
        const double cx = rng.uniform(8, 24), cy = rng.uniform(8, 24);
        const double rad = rng.uniform(3, 7);
        const int k = 3 + static_cast<int>(rng.randint(5));
        const double phase = rng.uniform(0, 6.28);
        for (int i = 0; i < k; ++i) {
            const double a = phase + 6.283185307179586 * i / k;
            r.vertices.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
        }
        const core::MaskU8 mask = rasterize_polygon(r, 32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                CHECK(static_cast<bool>(mask.at(y, x)) ==
                      point_in_polygon(r.vertices, x + 0.5, y + 0.5));
    }
    // Random simple (star-shaped by construction): >= 99% pixel agreement.
    for (int trial = 0; trial < 10; ++trial) {
        PolygonRegion r;
        const double cx = rng.uniform(10, 22), cy = rng.uniform(10, 22);
        const int k = 5 + static_cast<int>(rng.randint(6));
        for (int i = 0; i < k; ++i) {
            const double a = 6.283185307179586 * i / k;
            const double rad = rng.uniform(2.0, 9.0);
            r.vertices.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
        }
        const core::MaskU8 mask = rasterize_polygon(r, 32, 32);
        int agree = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                agree += (static_cast<bool>(mask.at(y, x)) ==
                          point_in_polygon(r.vertices, x + 0.5, y + 0.5))
                             ? 1
                             : 0;
        CHECK(agree >= static_cast<int>(0.99 * 32 * 32));
    }
}

TEST_CASE("polygon_is_simple flags self-intersections") {
    PolygonRegion bow;
    bow.vertices = {{0, 0}, {10, 10}, {10, 0}, {0, 10}};
    CHECK_FALSE(polygon_is_simple(bow));
    PolygonRegion square;
    square.vertices = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    CHECK(polygon_is_simple(square));
}

TEST_CASE("resize_and_pad: 512x512 input is the identity transform") {
    core::ImageU8 img(512, 512, 3, 77);
    const ResizedSample rs = resize_and_pad(img, {}, 512);
    CHECK(rs.scale == doctest::Approx(1.0));
    CHECK(rs.pad_top == 0);
    CHECK(rs.pad_left == 0);
    CHECK(rs.image.at(100, 200, 1) == 77);
}

TEST_CASE("resize_and_pad: 384x256 MISD frame scales by 512/384 and pads width") {
    core::ImageU8 img(256, 384, 3, 10);  // 384 wide x 256 tall
    core::MaskU8 mask(256, 384);
    for (int y = 50; y < 100; ++y)
        for (int x = 60; x < 160; ++x) mask.at(y, x) = 1;
    const ResizedSample rs = resize_and_pad(img, {mask}, 512);
    CHECK(rs.scale == doctest::Approx(512.0 / 384.0));
    CHECK(rs.image.h == 512);
    CHECK(rs.image.w == 512);
    // Width maps to 512, height to round(256 * 4/3) = 341; padding splits top/bottom.
    CHECK(rs.pad_left == 0);
    CHECK(rs.pad_top == (512 - 341) / 2);
    CHECK(rs.masks[0].h == 512);
}

TEST_CASE("resize_and_pad: box round trip within 1 px") {
    core::ImageU8 img(300, 420, 3);
    const ResizedSample rs = resize_and_pad(img, {}, 512);
    core::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const double x1 = rng.uniform(0, 380), y1 = rng.uniform(0, 260);
        const std::array<double, 4> box = {x1, y1, x1 + rng.uniform(5, 40), y1 + rng.uniform(5, 40)};
        const auto fwd = transform_box(box, rs.scale, rs.pad_top, rs.pad_left);
        const auto back = inverse_transform_box(fwd, rs.scale, rs.pad_top, rs.pad_left);
        for (int k = 0; k < 4; ++k) CHECK(std::abs(back[static_cast<size_t>(k)] - box[static_cast<size_t>(k)]) < 1.0);
    }
}

TEST_CASE("split_dataset: MISD-sized split and determinism") {
    std::vector<std::string> ids;
    for (int i = 0; i < 918; ++i) ids.push_back("img" + std::to_string(i));
    const DatasetSplit split = split_dataset(ids, {734, 92, 92}, 42);
    CHECK(split.train_ids.size() == 734);
    CHECK(split.val_ids.size() == 92);
    CHECK(split.test_ids.size() == 92);

    std::set<std::string> all;
    for (const auto& id : split.train_ids) all.insert(id);
    for (const auto& id : split.val_ids) all.insert(id);
    for (const auto& id : split.test_ids) all.insert(id);
    CHECK(all.size() == 918);  // pairwise disjoint union

    const DatasetSplit again = split_dataset(ids, {734, 92, 92}, 42);
    CHECK(again.train_ids == split.train_ids);
    CHECK(again.val_ids == split.val_ids);
    const DatasetSplit other = split_dataset(ids, {734, 92, 92}, 43);
    CHECK(other.train_ids != split.train_ids);
}

TEST_CASE("split_dataset: everything in train, and over-requests fail") {
    const std::vector<std::string> ids = {"a", "b", "c"};
    const DatasetSplit split = split_dataset(ids, {3, 0, 0}, 0);
    CHECK(split.train_ids.size() == 3);
    CHECK(split.val_ids.empty());
    CHECK_THROWS_AS(split_dataset(ids, {3, 1, 0}, 0), Error);
}

TEST_CASE("make_synthetic_fixture: forced count, self-consistent masks, determinism") {
    const auto samples = make_synthetic_fixture(1, {96, 96}, {3, 3}, 5);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].regions.size() == 3);
    for (const auto& mask : samples[0].masks) CHECK(mask.area() > 0);

    // Every mask equals the rasterization of its own region.
    for (size_t i = 0; i < samples[0].regions.size(); ++i) {
        const core::MaskU8 expected = rasterize_polygon(samples[0].regions[i], 96, 96);
        CHECK(expected.px == samples[0].masks[i].px);
    }

    const auto a = make_synthetic_fixture(10, {96, 128}, {3, 7}, 99);
    const auto b = make_synthetic_fixture(10, {96, 128}, {3, 7}, 99);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.px == b[i].image.px);  // byte-identical regeneration
        CHECK(a[i].regions.size() == b[i].regions.size());
        CHECK(a[i].regions.size() >= 3);
        CHECK(a[i].regions.size() <= 7);
    }
}

TEST_CASE("make_synthetic_fixture: impossible placement errors out") {
    CHECK_THROWS_AS(make_synthetic_fixture(1, {32, 32}, {20, 20}, 1), Error);
}

TEST_CASE("dataset_stats over samples") {
    const auto spliced = make_synthetic_fixture(4, {64, 64}, {3, 4}, 11);
    std::vector<AnnotatedSample> samples = spliced;
    AnnotatedSample authentic;
    authentic.category = "animal";
    authentic.image = core::ImageU8(64, 64, 3);
    samples.push_back(authentic);

    const DatasetStats st = dataset_stats(samples);
    CHECK(st.total == 5);
    CHECK(st.authentic == 1);
    CHECK(st.spliced == 4);
    CHECK(st.min_regions >= 3);
    CHECK(st.max_regions <= 4);
    CHECK(st.authentic_per_category.at("animal") == 1);

    const DatasetStats empty = dataset_stats(std::vector<AnnotatedSample>{});
    CHECK(empty.total == 0);
    CHECK(empty.authentic == 0);
    CHECK(empty.spliced == 0);
}

TEST_CASE("build -> validate round trip on a synthetic fixture") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "splicedet_test_ds";
    fs::remove_all(dir);
    const auto samples = make_synthetic_fixture(4, {80, 100}, {3, 5}, 21);
    write_fixture_dataset(dir.string(), samples);

    BuildOptions opts;
    opts.images_dir = (dir / "images").string();
    opts.annotations_json = (dir / "via_annotations.json").string();
    opts.out_dir = (dir / "built").string();
    const Manifest manifest = build_dataset(opts);
    CHECK(manifest.entries.size() == 4);
    for (const auto& e : manifest.entries) {
        CHECK(e.num_regions >= 3);
        CHECK(e.mask_paths.size() == static_cast<size_t>(e.num_regions));
        CHECK(!e.union_mask_path.empty());
    }

    const Manifest loaded = load_manifest((dir / "built" / "manifest.json").string());
    CHECK(validate_dataset(loaded).empty());

    // Corrupt one mask; validate must name the offending file.
    const std::string victim = loaded.resolve(loaded.entries[0].mask_paths[0]);
    core::MaskU8 mask = core::read_mask_png(victim);
    mask.px[0] ^= 1;
    core::write_mask_png(victim, mask);
    const auto problems = validate_dataset(loaded);
    REQUIRE(!problems.empty());
    CHECK(problems[0].find(loaded.entries[0].id) != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("PNG mask round trip is bit exact") {
    namespace fs = std::filesystem;
    core::Rng rng(3);
    core::MaskU8 mask(33, 47);
    for (auto& px : mask.px) px = rng.uniform() < 0.3 ? 1 : 0;
    const std::string path = (fs::temp_directory_path() / "splicedet_mask_rt.png").string();
    core::write_mask_png(path, mask);
    const core::MaskU8 back = core::read_mask_png(path);
    CHECK(back.px == mask.px);
    fs::remove(path);
}

TEST_CASE("category_from_filename maps CASIA-style codes") {
    CHECK(category_from_filename("Au_ani_00001.jpg") == "animal");
    CHECK(category_from_filename("Au_txt_0099.jpg") == "texture");
    CHECK(category_from_filename("random.png") == "");
}
