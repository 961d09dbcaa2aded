#pragma once

// Synthetic colored-shapes products on a shelf-like background.
//
// Class i has shape i % 4 (disk, square, triangle, striped box) and hue
// 360 * i / count. All class colors share one BT.601 luma, so classes with the
// same shape are nearly indistinguishable in grayscale: telling them apart
// needs color.

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "coad/dataset.hpp"
#include "coad/image.hpp"

namespace coad::synth {

enum class Shape { disk, square, triangle, stripes };

struct ProductClass {
    std::string label;
    Shape shape = Shape::disk;
    std::array<double, 3> rgb{};
};

std::string to_string(Shape s);

inline constexpr double kClassLuma = 0.45;

/// `count` classes, labels "<shape>-h<hue>".
std::vector<ProductClass> product_classes(int count = 12);

/// One product photo: jittered position/scale/brightness plus pixel noise.
Image render_product(const ProductClass& cls, int size, std::mt19937_64& rng);

struct Sample {
    std::string id;
    std::string label;
    Image image;
};

/// `per_class` renders of every class, ids "<label>-<k>". Deterministic in `seed`.
std::vector<Sample> generate(const std::vector<ProductClass>& classes, int per_class, int size,
                             unsigned long long seed);

/// Writes PNGs plus `manifest.jsonl` under `dir` and returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, int classes, int per_class, int size,
                                    unsigned long long seed);

struct ShelfRow {
    Image image;
    std::vector<BoundingBox> boxes;  // left to right
};

/// A shelf strip with one product per class entry, each `slot` pixels wide.
ShelfRow render_shelf_row(const std::vector<ProductClass>& row, int slot, std::mt19937_64& rng);

}  // namespace coad::synth
