#pragma once

// Datasets (procedural shapes or a PPM directory), PPM I/O and the
// pretraining augmentations.

#include <cstdint>
#include <string>
#include <vector>

#include "mixmae/image.hpp"
#include "mixmae/rng.hpp"

namespace mixmae {

enum class ShapeClass { kDisk = 0, kSquare = 1, kCross = 2, kStripes = 3 };
constexpr int kShapeClasses = 4;
const char* shape_class_name(int label);

// Images kept as 8-bit planar (c, y, x) to bound memory; converted on access.
struct Dataset {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<std::vector<std::uint8_t>> pixels;
  std::vector<int> labels;  // empty when unlabeled
  int classes = 0;

  std::size_t size() const { return pixels.size(); }
  bool labeled() const { return !labels.empty(); }
  Image image(std::size_t index) const;
};

struct SyntheticOptions {
  double noise = 0.08;  // uniform background noise amplitude
};

// Image i has class i % 4 and is a pure function of (seed, i).
Image synthetic_image(int edge, std::uint64_t seed, std::int64_t index,
                      const SyntheticOptions& options = {});
Dataset generate_synthetic(int count, int edge, std::uint64_t seed,
                           const SyntheticOptions& options = {});

std::vector<std::uint8_t> quantize(const Image& image);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);
// Every *.ppm file of a directory in lexicographic filename order.
Dataset load_ppm(const std::string& directory);

struct CropParams {
  double y0 = 0, x0 = 0, height = 0, width = 0;
  bool flip = false;
};

// Area fraction drawn from [scale_min, 1] and aspect ratio log-uniform in
// [3/4, 4/3]; falls back to the central crop after ten rejected draws.
CropParams sample_crop(int height, int width, double scale_min, bool hflip, Rng& rng);
Image apply_crop(const Image& image, const CropParams& crop, int out_edge);

}  // namespace mixmae
