#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "splicedet/data/annotations.hpp"

namespace splicedet::data {

enum class FixtureShapes {
    kAll,         // rectangles, triangles, diamonds, hexagons
    kRectangles,  // axis-aligned rectangles only (crisp box/mask targets)
};

/// Synthetic multi-splice fixtures: a textured background with k pasted
/// high-contrast geometric patches, each recorded as a polygon region with an
/// exact rasterized mask. Deterministic per seed. Desk-scale stand-in for a
/// real multi-splice corpus.
std::vector<AnnotatedSample> make_synthetic_fixture(int n_images, std::pair<int, int> image_size,
                                                    std::pair<int, int> splice_range,
                                                    std::uint64_t seed,
                                                    FixtureShapes shapes = FixtureShapes::kAll);

/// Writes a fixture to disk as PNG images plus a VIA v2 annotation project:
///   <dir>/images/fixture_XXXX.png, <dir>/via_annotations.json
/// Returns the annotation path.
std::string write_fixture_dataset(const std::string& dir,
                                  const std::vector<AnnotatedSample>& samples);

}  // namespace splicedet::data
