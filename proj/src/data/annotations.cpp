#include "splicedet/data/annotations.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "splicedet/core/error.hpp"

namespace splicedet::data {

using nlohmann::json;
using nlohmann::ordered_json;

double PolygonRegion::min_x() const {
    double v = vertices.empty() ? 0.0 : vertices[0][0];
    for (const auto& p : vertices) v = std::min(v, p[0]);
    return v;
}
double PolygonRegion::min_y() const {
    double v = vertices.empty() ? 0.0 : vertices[0][1];
    for (const auto& p : vertices) v = std::min(v, p[1]);
    return v;
}
double PolygonRegion::max_x() const {
    double v = vertices.empty() ? 0.0 : vertices[0][0];
    for (const auto& p : vertices) v = std::max(v, p[0]);
    return v;
}
double PolygonRegion::max_y() const {
    double v = vertices.empty() ? 0.0 : vertices[0][1];
    for (const auto& p : vertices) v = std::max(v, p[1]);
    return v;
}

namespace {

// Proper segment intersection test for the simple-polygon check.
double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

bool segments_properly_intersect(const std::array<double, 2>& a, const std::array<double, 2>& b,
                                 const std::array<double, 2>& c, const std::array<double, 2>& d) {
    const double d1 = cross(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1]);
    const double d2 = cross(b[0] - a[0], b[1] - a[1], d[0] - a[0], d[1] - a[1]);
    const double d3 = cross(d[0] - c[0], d[1] - c[1], a[0] - c[0], a[1] - c[1]);
    const double d4 = cross(d[0] - c[0], d[1] - c[1], b[0] - c[0], b[1] - c[1]);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

void parse_region(const json& region, const std::string& image_name, int index,
                  std::vector<PolygonRegion>& out, std::vector<ViaWarning>& warnings) {
    if (!region.contains("shape_attributes")) {
        warnings.push_back({image_name, index, "missing shape_attributes"});
        return;
    }
    const auto& shape = region["shape_attributes"];
    const std::string name = shape.value("name", "");
    if (name != "polygon" && name != "polyline") {
        warnings.push_back({image_name, index, "unsupported shape '" + name + "'"});
        return;
    }
    if (!shape.contains("all_points_x") || !shape.contains("all_points_y")) {
        warnings.push_back({image_name, index, "polygon missing point arrays"});
        return;
    }
    const auto& xs = shape["all_points_x"];
    const auto& ys = shape["all_points_y"];
    if (!xs.is_array() || !ys.is_array() || xs.size() != ys.size()) {
        warnings.push_back({image_name, index, "point arrays malformed"});
        return;
    }
    if (xs.size() < 3) {
        warnings.push_back({image_name, index, "polygon has fewer than 3 vertices"});
        return;
    }
    PolygonRegion r;
    for (size_t i = 0; i < xs.size(); ++i)
        r.vertices.push_back({xs[i].get<double>(), ys[i].get<double>()});
    if (region.contains("region_attributes")) {
        const auto& attrs = region["region_attributes"];
        if (attrs.contains("label") && attrs["label"].is_string())
            r.class_label = attrs["label"].get<std::string>();
    }
    r.degenerate = !polygon_is_simple(r);
    out.push_back(std::move(r));
}

}  // namespace

bool polygon_is_simple(const PolygonRegion& region) {
    const auto& v = region.vertices;
    const size_t n = v.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // Skip adjacent edges (they share a vertex).
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_properly_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

ViaAnnotations parse_via_annotations(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError("VIA annotation parse error at byte " + std::to_string(e.byte) + ": " +
                        e.what());
    }
    const json* metadata = &doc;
    if (doc.contains("_via_img_metadata")) metadata = &doc["_via_img_metadata"];
    if (!metadata->is_object())
        throw DataError("VIA annotation document: expected an object of image entries");

    ViaAnnotations out;
    for (const auto& [key, entry] : metadata->items()) {
        if (!entry.is_object() || !entry.contains("filename")) continue;
        const std::string filename = entry["filename"].get<std::string>();
        auto& regions = out.by_image[filename];  // zero regions = authentic image
        if (entry.contains("file_attributes") && entry["file_attributes"].is_object()) {
            const auto& fa = entry["file_attributes"];
            if (fa.contains("category") && fa["category"].is_string())
                out.category_by_image[filename] = fa["category"].get<std::string>();
        }
        if (!entry.contains("regions")) continue;
        const auto& region_list = entry["regions"];
        if (!region_list.is_array()) continue;
        int idx = 0;
        for (const auto& region : region_list) parse_region(region, filename, idx++, regions, out.warnings);
    }
    return out;
}

std::string to_via_json(const std::vector<AnnotatedSample>& samples,
                        const std::vector<std::string>& filenames) {
    check(samples.size() == filenames.size(), "to_via_json: size mismatch");
    ordered_json meta = ordered_json::object();
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        ordered_json entry;
        entry["filename"] = filenames[i];
        entry["size"] = static_cast<std::int64_t>(s.image.px.size());
        ordered_json regions = ordered_json::array();
        for (const auto& r : s.regions) {
            ordered_json shape;
            shape["name"] = "polygon";
            std::vector<double> xs, ys;
            for (const auto& p : r.vertices) {
                xs.push_back(p[0]);
                ys.push_back(p[1]);
            }
            shape["all_points_x"] = xs;
            shape["all_points_y"] = ys;
            ordered_json region;
            region["shape_attributes"] = shape;
            region["region_attributes"] = ordered_json{{"label", r.class_label}};
            regions.push_back(region);
        }
        entry["regions"] = regions;
        entry["file_attributes"] = ordered_json{{"category", s.category}};
        meta[filenames[i] + std::to_string(s.image.px.size())] = entry;
    }
    ordered_json doc;
    doc["_via_settings"] = ordered_json::object();
    doc["_via_img_metadata"] = meta;
    doc["_via_attributes"] = ordered_json::object();
    return doc.dump(1);
}

core::MaskU8 rasterize_polygon(const PolygonRegion& region, int height, int width) {
    check(height >= 1 && width >= 1, "rasterize_polygon: bad size");
    if (region.vertices.size() < 3)
        throw DataError("rasterize_polygon: degenerate polygon with " +
                        std::to_string(region.vertices.size()) + " vertices");
    // Clamp vertices into the image rectangle.
    std::vector<std::array<double, 2>> v = region.vertices;
    for (auto& p : v) {
        p[0] = std::clamp(p[0], 0.0, static_cast<double>(width));
        p[1] = std::clamp(p[1], 0.0, static_cast<double>(height));
    }
    core::MaskU8 mask(height, width);
    const size_t n = v.size();
    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
        const double yc = y + 0.5;
        xs.clear();
        for (size_t i = 0; i < n; ++i) {
            const auto& a = v[i];
            const auto& b = v[(i + 1) % n];
            // Half-open rule in y keeps vertex crossings counted once.
            const double ylo = std::min(a[1], b[1]), yhi = std::max(a[1], b[1]);
            if (!(ylo <= yc && yc < yhi)) continue;
            xs.push_back(a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
        }
        std::sort(xs.begin(), xs.end());
        for (size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Pixel x is inside when xs[k] <= x + 0.5 < xs[k+1].
            int x_start = static_cast<int>(std::ceil(xs[k] - 0.5));
            int x_end = static_cast<int>(std::ceil(xs[k + 1] - 0.5)) - 1;
            x_start = std::max(x_start, 0);
            x_end = std::min(x_end, width - 1);
            for (int x = x_start; x <= x_end; ++x) mask.at(y, x) = 1;
        }
    }
    return mask;
}

}  // namespace splicedet::data
