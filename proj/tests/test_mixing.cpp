#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mixmae/error.hpp"
#include "mixmae/mixing.hpp"
#include "mixmae/rng.hpp"

using namespace mixmae;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image im(c, h, w);
  for (auto& p : im.pixels) p = static_cast<float>(rng.uniform());
  return im;
}

}  // namespace

TEST_CASE("group masks are balanced partitions") {
  CHECK_THROWS_AS(sample_group_mask(4, 4, 1, 8, 0), Error);
  CHECK_THROWS_AS(sample_group_mask(4, 4, 17, 8, 0), Error);
  for (int k = 2; k <= 5; ++k)
    for (std::uint64_t s = 0; s < 20; ++s) {
      const GroupMask m = sample_group_mask(4, 4, k, 8, s);
      REQUIRE(m.units() == 16);
      int total = 0;
      for (int g = 0; g < k; ++g) {
        const int c = m.count(g);
        CHECK(c >= 16 / k);
        CHECK(c <= 16 / k + 1);
        total += c;
      }
      CHECK(total == 16);
    }
}

TEST_CASE("group masks are deterministic in the seed") {
  const GroupMask a = sample_group_mask(7, 7, 4, 32, 99), b = sample_group_mask(7, 7, 4, 32, 99);
  CHECK(a.group_of == b.group_of);
  const GroupMask c = sample_group_mask(7, 7, 4, 32, 100);
  CHECK(a.group_of != c.group_of);
}

TEST_CASE("masked fraction is (K-1)/K up to the remainder unit") {
  for (int k = 2; k <= 5; ++k) {
    const GroupMask m = sample_group_mask(4, 4, k, 1, 5);
    for (int g = 0; g < k; ++g)
      CHECK(std::abs(m.masked_fraction(g) - (k - 1.0) / k) <= 1.0 / 16 + 1e-12);
  }
}

TEST_CASE("the held-out group takes the requested share") {
  const GroupMask m = sample_group_mask_with_holdout(4, 4, 2, 8, 0.5, 3);
  CHECK(m.groups == 3);
  CHECK(m.count(2) == 8);
  CHECK(m.count(0) == 4);
  CHECK(m.count(1) == 4);
  CHECK(m.masked_fraction(0) == doctest::Approx(0.75));
}

TEST_CASE("mix_images copies each unit from its owner") {
  const GroupMask m = sample_group_mask(2, 2, 2, 4, 7);
  const std::vector<Image> src = {random_image(3, 8, 8, 1), random_image(3, 8, 8, 2)};
  const Image out = mix_images(src, m);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(out.at(c, y, x) == src[m.at(y / 4, x / 4)].at(c, y, x));
}

TEST_CASE("mix_images rejects a mismatched source count") {
  const GroupMask m = sample_group_mask(2, 2, 2, 4, 7);
  const std::vector<Image> src = {random_image(3, 8, 8, 1)};
  CHECK_THROWS_AS(mix_images(src, m), Error);
}

TEST_CASE("corruption modes touch only masked units") {
  const Image im = random_image(3, 16, 16, 4);
  const GroupMask gm = sample_group_mask(4, 4, 2, 4, 8);
  const UnitMask um = UnitMask::hidden_from(gm, 0);
  for (CorruptionMode mode : {CorruptionMode::kZero, CorruptionMode::kShuffle, CorruptionMode::kZoomIn}) {
    const Image out = corrupt_pixels(im, um, mode, 11);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (!um.masked[(y / 4) * 4 + x / 4])
          for (int c = 0; c < 3; ++c) CHECK(out.at(c, y, x) == im.at(c, y, x));
  }
  const Image zero = corrupt_pixels(im, um, CorruptionMode::kZero, 11);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (um.masked[(y / 4) * 4 + x / 4]) CHECK(zero.at(0, y, x) == 0.0f);
}

TEST_CASE("shuffle permutes the masked units among themselves") {
  const Image im = random_image(1, 16, 16, 5);
  const GroupMask gm = sample_group_mask(4, 4, 2, 4, 9);
  const UnitMask um = UnitMask::hidden_from(gm, 1);
  const Image out = corrupt_pixels(im, um, CorruptionMode::kShuffle, 12);
  auto unit_sum = [](const Image& img, int u) {
    double s = 0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) s += img.at(0, (u / 4) * 4 + y, (u % 4) * 4 + x);
    return s;
  };
  std::multiset<double> before, after;
  for (int u = 0; u < 16; ++u)
    if (um.masked[u]) {
      before.insert(unit_sum(im, u));
      after.insert(unit_sum(out, u));
    }
  CHECK(before == after);
}

TEST_CASE("learnable fill routes gradients to the shared unit") {
  const GroupMask gm = sample_group_mask(2, 2, 2, 2, 13);
  const UnitMask um = UnitMask::hidden_from(gm, 0);
  Tensor64 unit = Tensor64::full({1, 2, 2}, 0.25);
  unit.set_requires_grad(true);
  const Tensor64 images = Tensor64::full({1, 1, 4, 4}, 1.0);
  const Tensor64 out = fill_learnable(images, std::span<const UnitMask>(&um, 1), unit);
  int filled = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const bool masked = um.masked[(y / 2) * 2 + x / 2];
      CHECK(out.at(y * 4 + x) == (masked ? 0.25 : 1.0));
      filled += masked;
    }
  backward(sum(out));
  for (int i = 0; i < 4; ++i) CHECK(unit.grad()[i] == doctest::Approx(filled / 4));
}

TEST_CASE("upsample_mask replicates each unit into a factor x factor block") {
  const GroupMask gm = sample_group_mask(3, 3, 3, 8, 17);
  const TokenGroupMap map = upsample_mask(gm, 4);
  REQUIRE(map.grid_h == 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) CHECK(map.at(y, x) == gm.at(y / 4, x / 4));
  CHECK(upsample_map(upsample_mask(gm, 2), 2) == map);
}

TEST_CASE("attention masks allow exactly same-group pairs within a window") {
  const GroupMask gm = sample_group_mask(4, 4, 2, 8, 21);
  const TokenGroupMap map = upsample_mask(gm, 2);  // 8x8 tokens
  const AttendMask am = build_attention_mask(map, 4);
  REQUIRE(am.windows == 4);
  REQUIRE(am.window_tokens == 16);
  for (int w = 0; w < 4; ++w)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        const int wy = w / 2, wx = w % 2;
        const int gi = map.at(wy * 4 + i / 4, wx * 4 + i % 4);
        const int gj = map.at(wy * 4 + j / 4, wx * 4 + j % 4);
        CHECK(am.allowed(w, i, j) == (gi == gj));
      }
}

TEST_CASE("unmix_tokens keeps owned rows and fills the rest with the mask token") {
  const GroupMask gm = sample_group_mask(2, 2, 2, 1, 23);
  const Tensor64 tokens = Tensor64::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor64 token = Tensor64::from({2}, {-1, -2});
  for (int k = 0; k < 2; ++k) {
    const Tensor64 out = unmix_tokens(tokens, gm, k, token);
    REQUIRE(out.shape() == Shape{4, 2});
    for (int u = 0; u < 4; ++u) {
      const bool own = gm.group_of[u] == k;
      CHECK(out.at(u * 2) == (own ? tokens.at(u * 2) : -1.0));
      CHECK(out.at(u * 2 + 1) == (own ? tokens.at(u * 2 + 1) : -2.0));
    }
  }
  CHECK_THROWS_AS(unmix_tokens(tokens, gm, 2, token), Error);
}

TEST_CASE("parse_corruption_mode round-trips and rejects unknown names") {
  for (CorruptionMode m : {CorruptionMode::kMix, CorruptionMode::kZero, CorruptionMode::kLearnable,
                           CorruptionMode::kShuffle, CorruptionMode::kZoomIn})
    CHECK(parse_corruption_mode(corruption_mode_name(m)) == m);
  CHECK_THROWS_AS(parse_corruption_mode("blur"), Error);
}
