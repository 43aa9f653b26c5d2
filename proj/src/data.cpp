#include "mixmae/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mixmae/error.hpp"

namespace mixmae {

namespace fs = std::filesystem;

const char* shape_class_name(int label) {
  static const char* names[] = {"disk", "square", "cross", "stripes"};
  return label >= 0 && label < kShapeClasses ? names[label] : "?";
}

Image Dataset::image(std::size_t index) const {
  if (index >= pixels.size())
    fail(ErrorKind::kIndex, "dataset index " + std::to_string(index) + " out of range");
  Image img(channels, height, width);
  const auto& src = pixels[index];
  for (std::size_t i = 0; i < src.size(); ++i) img.pixels[i] = src[i] / 255.0f;
  return img;
}

std::vector<std::uint8_t> quantize(const Image& image) {
  std::vector<std::uint8_t> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

namespace {

// Random colour pair with a guaranteed luminance gap.
void pick_colours(Rng& rng, float bg[3], float fg[3]) {
  auto luma = [](const float c[3]) { return 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2]; };
  for (;;) {
    for (int c = 0; c < 3; ++c) {
      bg[c] = static_cast<float>(rng.uniform());
      fg[c] = static_cast<float>(rng.uniform());
    }
    if (std::abs(luma(bg) - luma(fg)) > 0.25f) return;
  }
}

bool inside(int label, double u, double v, double r, double period) {
  switch (static_cast<ShapeClass>(label)) {
    case ShapeClass::kDisk:
      return u * u + v * v <= r * r;
    case ShapeClass::kSquare: {
      const double h = r * std::sqrt(std::numbers::pi) / 2.0;  // area of the disk
      return std::abs(u) <= h && std::abs(v) <= h;
    }
    case ShapeClass::kCross: {
      const double arm = r * 0.35;
      return (std::abs(u) <= arm && std::abs(v) <= r) || (std::abs(v) <= arm && std::abs(u) <= r);
    }
    case ShapeClass::kStripes: {
      if (u * u + v * v > r * r) return false;
      const double phase = u / period - std::floor(u / period);
      return phase < 0.5;
    }
  }
  return false;
}

}  // namespace

Image synthetic_image(int edge, std::uint64_t seed, std::int64_t index,
                      const SyntheticOptions& options) {
  Rng rng(derive_seed(seed, Stream::kSynthetic, static_cast<std::uint64_t>(index)));
  const int label = static_cast<int>(index % kShapeClasses);
  float bg[3], fg[3];
  pick_colours(rng, bg, fg);
  const double r = edge * rng.uniform(0.16, 0.32);
  const double cy = rng.uniform(r, edge - r), cx = rng.uniform(r, edge - r);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double period = r * rng.uniform(0.3, 0.5);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image img(3, edge, edge);
  // 2x2 supersampling for soft edges.
  for (int y = 0; y < edge; ++y)
    for (int x = 0; x < edge; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double dy = y + 0.25 + 0.5 * sy - cy, dx = x + 0.25 + 0.5 * sx - cx;
          const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
          hits += inside(label, u, v, r, period);
        }
      const float a = hits / 4.0f;
      for (int c = 0; c < 3; ++c) {
        const float noise = static_cast<float>(rng.uniform(-options.noise, options.noise));
        img.at(c, y, x) = std::clamp(a * fg[c] + (1.0f - a) * bg[c] + noise, 0.0f, 1.0f);
      }
    }
  return img;
}

Dataset generate_synthetic(int count, int edge, std::uint64_t seed,
                           const SyntheticOptions& options) {
  if (count < 1 || edge < 1) fail(ErrorKind::kParameter, "synthetic dataset needs count, edge > 0");
  Dataset d;
  d.channels = 3;
  d.height = d.width = edge;
  d.classes = kShapeClasses;
  d.pixels.reserve(count);
  d.labels.reserve(count);
  for (int i = 0; i < count; ++i) {
    d.pixels.push_back(quantize(synthetic_image(edge, seed, i, options)));
    d.labels.push_back(i % kShapeClasses);
  }
  return d;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
bool header_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return true;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return !tok.empty();
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIngestion, path + ": cannot open");
  std::string magic, w, h, maxval;
  if (!header_token(in, magic) || magic != "P6")
    fail(ErrorKind::kIngestion, path + ": not a binary PPM (P6) file");
  if (!header_token(in, w) || !header_token(in, h) || !header_token(in, maxval))
    fail(ErrorKind::kIngestion, path + ": truncated header");
  int width = 0, height = 0, mv = 0;
  try {
    width = std::stoi(w);
    height = std::stoi(h);
    mv = std::stoi(maxval);
  } catch (const std::exception&) {
    fail(ErrorKind::kIngestion, path + ": malformed header");
  }
  if (width < 1 || height < 1) fail(ErrorKind::kIngestion, path + ": empty image");
  if (mv != 255) fail(ErrorKind::kIngestion, path + ": only 8-bit PPM (maxval 255) is supported");
  const std::size_t n = static_cast<std::size_t>(width) * height * 3;
  std::vector<unsigned char> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    fail(ErrorKind::kIngestion, path + ": pixel data truncated");
  Image img(3, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const Image& image) {
  if (image.channels != 3 && image.channels != 1)
    fail(ErrorKind::kParameter, "write_ppm: need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = image.at(image.channels == 3 ? c : 0, y, x);
        raw[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path);
}

Dataset load_ppm(const std::string& directory) {
  if (!fs::is_directory(directory))
    fail(ErrorKind::kIngestion, directory + ": not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(directory))
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::kIngestion, directory + ": no .ppm files");
  Dataset d;
  for (const auto& f : files) {
    Image img = read_ppm(f);
    if (d.pixels.empty()) {
      d.channels = img.channels;
      d.height = img.height;
      d.width = img.width;
    } else if (img.height != d.height || img.width != d.width) {
      fail(ErrorKind::kIngestion, f + ": " + std::to_string(img.width) + "x" +
                                      std::to_string(img.height) + " differs from " +
                                      std::to_string(d.width) + "x" + std::to_string(d.height));
    }
    d.pixels.push_back(quantize(img));
  }
  return d;
}

CropParams sample_crop(int height, int width, double scale_min, bool hflip, Rng& rng) {
  CropParams p;
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = area * rng.uniform(scale_min, 1.0);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const double w = std::round(std::sqrt(target * ratio));
    const double h = std::round(std::sqrt(target / ratio));
    if (w >= 1 && h >= 1 && w <= width && h <= height) {
      p.height = h;
      p.width = w;
      p.y0 = static_cast<double>(rng.below(static_cast<std::int64_t>(height - h) + 1));
      p.x0 = static_cast<double>(rng.below(static_cast<std::int64_t>(width - w) + 1));
      found = true;
    }
  }
  if (!found) {
    p.height = height;
    p.width = width;
  }
  p.flip = hflip && rng.coin();
  return p;
}

Image apply_crop(const Image& image, const CropParams& crop, int out_edge) {
  Image out = resize_crop(image, crop.y0, crop.x0, crop.height, crop.width, out_edge, out_edge);
  return crop.flip ? hflip(out) : out;
}

}  // namespace mixmae
