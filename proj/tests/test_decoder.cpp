#include <doctest.h>

#include <cmath>

#include "mixmae/decoder.hpp"
#include "mixmae/error.hpp"

using namespace mixmae;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image im(c, h, w);
  for (auto& p : im.pixels) p = static_cast<float>(rng.uniform());
  return im;
}

Tensor64 random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(s)));
  for (auto& x : v) x = rng.normal();
  return Tensor64::from(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("normalized targets have zero mean and unit variance per unit") {
  const Image im = random_image(3, 16, 16, 1);
  const ReconTarget t = normalize_targets(im, 8);
  REQUIRE(t.units() == 4);
  REQUIRE(t.unit_len() == 192);
  for (int u = 0; u < 4; ++u) {
    double m = 0, v = 0;
    for (int j = 0; j < 192; ++j) m += t.values[u * 192 + j];
    m /= 192;
    for (int j = 0; j < 192; ++j) v += (t.values[u * 192 + j] - m) * (t.values[u * 192 + j] - m);
    CHECK(m == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(v / 192 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("normalized target values follow (c, y, x) order inside a unit") {
  Image im(2, 4, 4);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) im.at(c, y, x) = static_cast<float>(c * 100 + y * 10 + x);
  const ReconTarget t = normalize_targets(im, 2);
  // Unit 1 is the top-right 2x2 block; its second value is (c0, y0, x3).
  const float v0 = t.values[8 + 0] * t.stdev[1] + t.mean[1];
  const float v1 = t.values[8 + 1] * t.stdev[1] + t.mean[1];
  const float v4 = t.values[8 + 4] * t.stdev[1] + t.mean[1];
  CHECK(v0 == doctest::Approx(2.0f));
  CHECK(v1 == doctest::Approx(3.0f));
  CHECK(v4 == doctest::Approx(102.0f));
}

TEST_CASE("a flat unit normalizes to zeros") {
  const Image flat(3, 8, 8, 0.3f);
  const ReconTarget t = normalize_targets(flat, 8);
  for (float v : t.values) CHECK(v == doctest::Approx(0.0f));
  CHECK(t.stdev[0] == doctest::Approx(std::sqrt(kTargetEps)));
}

TEST_CASE("denormalize inverts normalize_targets") {
  const Image im = random_image(3, 16, 16, 2);
  const ReconTarget t = normalize_targets(im, 4);
  const Image back = denormalize(t.values, t);
  for (std::size_t i = 0; i < im.pixels.size(); ++i)
    CHECK(back.pixels[i] == doctest::Approx(im.pixels[i]).epsilon(1e-5));
}

TEST_CASE("normalize_targets rejects indivisible images") {
  CHECK_THROWS_AS(normalize_targets(random_image(3, 10, 10, 3), 4), Error);
}

TEST_CASE("dual_loss matches a direct sum over hidden units") {
  const int b = 2, t = 4, p = 3;
  std::vector<GroupMask> masks = {sample_group_mask(2, 2, 2, 1, 5), sample_group_mask(2, 2, 2, 1, 6)};
  const std::vector<int> groups = {0, 1};
  const Tensor64 pred = random_tensor({2, b, t, p}, 7), tgt = random_tensor({2, b, t, p}, 8);
  const auto loss = dual_loss(pred, tgt, masks, groups);
  double total = 0;
  for (int g = 0; g < 2; ++g) {
    double s = 0;
    int n = 0;
    for (int i = 0; i < b; ++i)
      for (int u = 0; u < t; ++u)
        if (masks[i].group_of[u] != g) {
          ++n;
          for (int j = 0; j < p; ++j) {
            const std::int64_t at = ((g * b + i) * t + u) * p + j;
            s += (pred.at(at) - tgt.at(at)) * (pred.at(at) - tgt.at(at));
          }
        }
    const double term = s / (n * p);
    CHECK(loss.terms[g].item() == doctest::Approx(term).epsilon(1e-12));
    total += term;
  }
  CHECK(loss.total.item() == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("dual_loss gradient is zero at visible units") {
  const std::vector<GroupMask> masks = {sample_group_mask(2, 2, 2, 1, 9)};
  const std::vector<int> groups = {0, 1};
  Tensor64 pred = random_tensor({2, 1, 4, 5}, 10);
  pred.set_requires_grad(true);
  const Tensor64 tgt = random_tensor({2, 1, 4, 5}, 11);
  backward(dual_loss(pred, tgt, masks, groups).total);
  for (int g = 0; g < 2; ++g)
    for (int u = 0; u < 4; ++u)
      for (int j = 0; j < 5; ++j) {
        const double gr = pred.grad()[(g * 4 + u) * 5 + j];
        if (masks[0].group_of[u] == g) {
          CHECK(gr == 0.0);
        } else {
          CHECK(gr != 0.0);
        }
      }
}

TEST_CASE("stack_targets orders groups major, samples minor") {
  std::vector<ReconTarget> targets;
  for (int i = 0; i < 4; ++i) {
    ReconTarget r;
    r.grid_h = r.grid_w = 1;
    r.unit_px = 1;
    r.channels = 1;
    r.values = {static_cast<float>(i)};
    targets.push_back(r);
  }
  const std::vector<int> groups = {1, 0};
  const Tensor s = stack_targets<float>(targets, 2, 2, groups);
  REQUIRE(s.shape() == Shape{2, 2, 1, 1});
  CHECK(s.at(0) == 1.0f);
  CHECK(s.at(1) == 3.0f);
  CHECK(s.at(2) == 0.0f);
  CHECK(s.at(3) == 2.0f);
}

TEST_CASE("decoder output shape and unit-variance predictions at initialisation") {
  EncoderConfig ec = EncoderConfig::toy();
  const DecoderConfig dc = DecoderConfig::toy(ec);
  ParamStore<float> store;
  Rng rng(12);
  Decoder<float> dec(dc, store, rng, 0);
  std::vector<float> v(static_cast<std::size_t>(2 * dc.tokens() * dc.width));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  const Tensor tokens = Tensor::from({2, dc.tokens(), dc.width}, std::move(v));
  const std::vector<GroupMask> masks = {sample_group_mask(4, 4, 4, 32, 1), sample_group_mask(4, 4, 4, 32, 2)};
  const std::vector<int> groups = {0, 1, 2, 3};
  const Tensor pred = dec.forward(tokens, masks, groups);
  CHECK(pred.shape() == Shape{4, 2, dc.tokens(), dc.pred_len()});
  double ss = 0;
  for (float x : pred.data()) ss += static_cast<double>(x) * x;
  const double var = ss / static_cast<double>(pred.numel());
  CHECK(var > 0.5);
  CHECK(var < 1.5);
}
