#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mixmae/data.hpp"
#include "mixmae/error.hpp"

using namespace mixmae;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

}  // namespace

TEST_CASE("synthetic images are pure functions of seed and index") {
  const Image a = synthetic_image(64, 5, 17), b = synthetic_image(64, 5, 17);
  CHECK(a.pixels == b.pixels);
  CHECK(synthetic_image(64, 6, 17).pixels != a.pixels);
  CHECK(synthetic_image(64, 5, 18).pixels != a.pixels);
  for (float v : a.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  const Dataset d = generate_synthetic(12, 64, 5);
  CHECK(d.size() == 12);
  CHECK(d.classes == 4);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.labels[i] == static_cast<int>(i % 4));
  CHECK(d.pixels[5] == quantize(synthetic_image(64, 5, 5)));
  CHECK(std::string(shape_class_name(3)) == "stripes");
}

TEST_CASE("synthetic images contain a foreground shape") {
  for (int i = 0; i < 8; ++i) {
    const Image img = synthetic_image(64, 1, i, {0.0});
    const float corner = img.at(0, 0, 0);
    int differing = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) differing += std::abs(img.at(0, y, x) - corner) > 1e-6f ||
                                                std::abs(img.at(1, y, x) - img.at(1, 0, 0)) > 1e-6f ||
                                                std::abs(img.at(2, y, x) - img.at(2, 0, 0)) > 1e-6f;
    CHECK(differing > 64);
    CHECK(differing < 64 * 64 / 2);
  }
}

TEST_CASE("quantized dataset access returns eighth-bit values") {
  const Dataset d = generate_synthetic(4, 32, 2);
  const Image img = d.image(1);
  CHECK(img.channels == 3);
  CHECK(img.height == 32);
  for (float v : img.pixels) CHECK(std::abs(v * 255.0f - std::round(v * 255.0f)) < 1e-3f);
  CHECK_THROWS_AS(d.image(4), Error);
}

TEST_CASE("PPM round trip and directory ordering") {
  TempDir dir("mixmae_test_ppm");
  const Image a = synthetic_image(16, 3, 0), b = synthetic_image(16, 3, 1);
  write_ppm((dir.path / "b.ppm").string(), b);
  write_ppm((dir.path / "a.ppm").string(), a);
  write_raw(dir.path / "notes.txt", "ignored");
  const Image back = read_ppm((dir.path / "a.ppm").string());
  CHECK(quantize(back) == quantize(a));
  const Dataset d = load_ppm(dir.path.string());
  REQUIRE(d.size() == 2);
  CHECK_FALSE(d.labeled());
  CHECK(d.pixels[0] == quantize(a));
  CHECK(d.pixels[1] == quantize(b));
}

TEST_CASE("PPM ingestion errors") {
  TempDir dir("mixmae_test_ppm_bad");
  auto kind = [](const std::string& path) {
    try {
      read_ppm(path);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kInternal;
  };
  write_raw(dir.path / "p3.ppm", "P3\n1 1\n255\n0 0 0\n");
  write_raw(dir.path / "deep.ppm", "P6\n1 1\n65535\n" + std::string(6, '\0'));
  write_raw(dir.path / "short.ppm", "P6\n2 2\n255\n" + std::string(5, '\0'));
  write_raw(dir.path / "header.ppm", "P6\n# only a comment\n2");
  CHECK(kind((dir.path / "p3.ppm").string()) == ErrorKind::kIngestion);
  CHECK(kind((dir.path / "deep.ppm").string()) == ErrorKind::kIngestion);
  CHECK(kind((dir.path / "short.ppm").string()) == ErrorKind::kIngestion);
  CHECK(kind((dir.path / "header.ppm").string()) == ErrorKind::kIngestion);
  CHECK(kind((dir.path / "missing.ppm").string()) == ErrorKind::kIngestion);
  write_raw(dir.path / "c.ppm", "P6\n# comment\n1 1\n255\n" + std::string(3, '\x7f'));
  CHECK(read_ppm((dir.path / "c.ppm").string()).at(0, 0, 0) == doctest::Approx(127.0 / 255.0));

  TempDir mixed("mixmae_test_ppm_sizes");
  write_ppm((mixed.path / "a.ppm").string(), Image(3, 4, 4));
  write_ppm((mixed.path / "b.ppm").string(), Image(3, 8, 8));
  CHECK_THROWS_AS(load_ppm(mixed.path.string()), Error);
  TempDir empty("mixmae_test_ppm_empty");
  CHECK_THROWS_AS(load_ppm(empty.path.string()), Error);
}

TEST_CASE("crops respect the area and aspect bounds") {
  Rng rng(9);
  int flips = 0;
  for (int i = 0; i < 500; ++i) {
    const CropParams c = sample_crop(128, 128, 0.67, true, rng);
    const double frac = c.height * c.width / (128.0 * 128.0);
    CHECK(frac >= 0.67 - 0.02);
    CHECK(frac <= 1.0);
    const double ratio = c.width / c.height;
    CHECK(ratio >= 0.75 - 0.02);
    CHECK(ratio <= 4.0 / 3.0 + 0.02);
    CHECK(c.y0 + c.height <= 128);
    CHECK(c.x0 + c.width <= 128);
    flips += c.flip;
  }
  CHECK(flips > 200);
  CHECK(flips < 300);
  Rng none(9);
  for (int i = 0; i < 50; ++i) CHECK_FALSE(sample_crop(64, 64, 0.67, false, none).flip);
}

TEST_CASE("full crop is the identity and flip mirrors") {
  const Image img = synthetic_image(32, 4, 2);
  CropParams full;
  full.height = full.width = 32;
  const Image same = apply_crop(img, full, 32);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(same.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-6));
  full.flip = true;
  const Image mirrored = apply_crop(img, full, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; y += 7)
      for (int x = 0; x < 32; ++x)
        CHECK(mirrored.at(c, y, x) == doctest::Approx(img.at(c, y, 31 - x)).epsilon(1e-6));
}
