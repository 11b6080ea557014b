#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "splicedet/core/image.hpp"

namespace splicedet::data {

/// Polygonal spliced-region annotation in pixel coordinates.
struct PolygonRegion {
    std::vector<std::array<double, 2>> vertices;  // (x, y)
    std::string class_label = "spliced";
    bool degenerate = false;  // self-intersecting or collapsed

    double min_x() const;
    double min_y() const;
    double max_x() const;
    double max_y() const;
};

/// One image with its ground truth.
struct AnnotatedSample {
    std::string source_id;
    std::string category;  // one of the MISD AU categories when known
    core::ImageU8 image;
    std::vector<PolygonRegion> regions;
    std::vector<core::MaskU8> masks;  // one per region, same size as image
};

struct ViaWarning {
    std::string image;
    int region_index = 0;
    std::string reason;
};

struct ViaAnnotations {
    // Image filename -> polygon regions, in document order.
    std::map<std::string, std::vector<PolygonRegion>> by_image;
    // Filename -> category attribute when the project carries one.
    std::map<std::string, std::string> category_by_image;
    std::vector<ViaWarning> warnings;  // per-region rejections, non-fatal
};

/// Parses a VGG Image Annotator project (v2 layout, `_via_img_metadata`, or
/// the flat exported region map). Non-polygon shapes are rejected per region
/// with a warning; malformed JSON raises DataError with the byte offset.
ViaAnnotations parse_via_annotations(const std::string& json_text);

/// Serializes samples back to a VIA v2 project document.
std::string to_via_json(const std::vector<AnnotatedSample>& samples,
                        const std::vector<std::string>& filenames);

/// Pixel-center, even-odd rasterization. Vertices are clamped to the image
/// bounds; fewer than 3 vertices is an error.
core::MaskU8 rasterize_polygon(const PolygonRegion& region, int height, int width);

/// Simple-polygon test (no two non-adjacent edges intersect).
bool polygon_is_simple(const PolygonRegion& region);

}  // namespace splicedet::data
