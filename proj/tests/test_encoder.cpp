#include <doctest.h>

#include "mixmae/encoder.hpp"
#include "mixmae/error.hpp"

using namespace mixmae;

namespace {

EncoderConfig micro() {
  EncoderConfig c;
  c.img_px = 32;
  c.patch_px = 2;
  c.channels = {8, 8, 16, 16};
  c.heads = {2, 2, 2, 2};
  c.blocks = {1, 1, 1, 1};
  c.windows = {4, 4, 4, 2};
  c.out_width = 8;
  return c;
}

Tensor random_pixels(std::int64_t batch, const EncoderConfig& c, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(batch * c.in_chans * c.img_px * c.img_px));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor::from({batch, c.in_chans, c.img_px, c.img_px}, std::move(v));
}

}  // namespace

TEST_CASE("stage shapes follow the hierarchy") {
  const EncoderConfig c = micro();
  ParamStore<float> store;
  Rng rng(1);
  Encoder<float> enc(c, 0, store, rng);
  std::vector<GroupMask> masks(2, GroupMask::single(2, 2, 16));
  ForwardOptions fo;
  fo.keep_stages = true;
  const auto out = enc.forward(random_pixels(2, c, rng), masks, Reduction::kNone, fo);
  REQUIRE(out.stages.size() == 4);
  for (int s = 0; s < 4; ++s) {
    CHECK(out.stages[s].dim(1) == static_cast<std::int64_t>(c.grid(s)) * c.grid(s));
    CHECK(out.stages[s].dim(2) == c.channels[s]);
  }
  CHECK(out.features.shape() == Shape{2, 4, 16});
  CHECK(out.tokens.shape() == Shape{2, 4, 8});
}

TEST_CASE("window larger than the grid is clamped") {
  EncoderConfig c = micro();
  c.windows = {14, 14, 14, 14};
  CHECK(c.window(3) == c.grid(3));
  CHECK(c.window(0) == 14);
  CHECK_THROWS_AS(c.validate(), Error);  // 14 does not tile 16
}

TEST_CASE("configuration validation") {
  CHECK_NOTHROW(EncoderConfig::base().validate());
  CHECK_NOTHROW(EncoderConfig::base_w7().validate());
  CHECK_NOTHROW(EncoderConfig::toy().validate());
  EncoderConfig c = micro();
  c.img_px = 40;  // not a multiple of the 16 px unit
  CHECK_THROWS_AS(c.validate(), Error);
  c = micro();
  c.heads[1] = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(EncoderConfig::preset("giant"), Error);
}

TEST_CASE("presets") {
  const EncoderConfig b = EncoderConfig::preset("base");
  CHECK(b.channels == std::array<int, 4>{128, 256, 512, 1024});
  CHECK(b.blocks == std::array<int, 4>{2, 2, 18, 2});
  CHECK(b.window(2) == 14);
  CHECK(b.window(3) == 7);
  CHECK(EncoderConfig::preset("base-w7").windows == std::array<int, 4>{7, 7, 7, 7});
  CHECK(b.unit_px() == 32);
  CHECK(b.mask_grid() == 7);
}

TEST_CASE("parse_reduction") {
  CHECK(parse_reduction("none") == Reduction::kNone);
  CHECK(parse_reduction("mix-embedding") == Reduction::kMixEmbedding);
  CHECK(parse_reduction("masked-attention") == Reduction::kMaskedAttention);
  CHECK_THROWS_AS(parse_reduction("masked"), Error);
}

TEST_CASE("patch merging refuses to combine groups") {
  const EncoderConfig c = micro();
  ParamStore<float> store;
  Rng rng(2);
  Encoder<float> enc(c, 0, store, rng);
  TokenGroupMap bad;
  bad.grid_h = bad.grid_w = c.grid(0);
  bad.group_of.assign(static_cast<std::size_t>(c.grid(0)) * c.grid(0), 0);
  bad.group_of[1] = 1;  // splits the first 2x2 neighbourhood
  const Tensor x = Tensor::zeros({1, static_cast<std::int64_t>(c.grid(0)) * c.grid(0), c.channels[0]});
  CHECK_THROWS_AS(enc.patch_merge(0, x, std::span<const TokenGroupMap>(&bad, 1)), Error);
}

TEST_CASE("stage group maps upsample the unit grid") {
  const EncoderConfig c = micro();
  const GroupMask m = sample_group_mask(2, 2, 2, 16, 3);
  for (int s = 0; s < 4; ++s) {
    const TokenGroupMap map = stage_group_map(c, m, s);
    const int f = 1 << (3 - s);
    REQUIRE(map.grid_h == c.grid(s));
    for (int y = 0; y < map.grid_h; ++y)
      for (int x = 0; x < map.grid_w; ++x) CHECK(map.at(y, x) == m.at(y / f, x / f));
  }
}

TEST_CASE("masked attention isolates groups bit-exactly") {
  EncoderConfig c = micro();
  c.img_px = 64;  // 4x4 unit grid
  ParamStore<float> store;
  Rng rng(4);
  Encoder<float> enc(c, 0, store, rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroupMask m = sample_group_mask(4, 4, 2, 16, seed);
    Tensor a = random_pixels(1, c, rng), b = a.detach();
    // Rerandomise every pixel outside group 0.
    auto pb = b.mutable_data();
    for (int ch = 0; ch < c.in_chans; ++ch)
      for (int y = 0; y < c.img_px; ++y)
        for (int x = 0; x < c.img_px; ++x)
          if (m.at(y / 16, x / 16) != 0)
            pb[(static_cast<std::size_t>(ch) * c.img_px + y) * c.img_px + x] = static_cast<float>(rng.uniform());
    ForwardOptions fo;
    fo.keep_stages = true;
    const auto oa = enc.forward(a, std::span<const GroupMask>(&m, 1), Reduction::kMaskedAttention, fo);
    const auto ob = enc.forward(b, std::span<const GroupMask>(&m, 1), Reduction::kMaskedAttention, fo);
    for (int s = 0; s < 4; ++s) {
      const TokenGroupMap map = stage_group_map(c, m, s);
      const std::int64_t ch = c.channels[s];
      for (std::size_t t = 0; t < map.group_of.size(); ++t)
        if (map.group_of[t] == 0)
          for (std::int64_t j = 0; j < ch; ++j)
            REQUIRE(oa.stages[s].at(static_cast<std::int64_t>(t) * ch + j) ==
                    ob.stages[s].at(static_cast<std::int64_t>(t) * ch + j));
    }
  }
}

TEST_CASE("without masking, foreign pixels leak into every token") {
  EncoderConfig c = micro();
  c.img_px = 64;
  ParamStore<float> store;
  Rng rng(5);
  Encoder<float> enc(c, 0, store, rng);
  const GroupMask m = sample_group_mask(4, 4, 2, 16, 1);
  Tensor a = random_pixels(1, c, rng), b = a.detach();
  auto pb = b.mutable_data();
  for (int y = 0; y < c.img_px; ++y)
    for (int x = 0; x < c.img_px; ++x)
      if (m.at(y / 16, x / 16) != 0) pb[static_cast<std::size_t>(y) * c.img_px + x] += 0.5f;
  const auto oa = enc.forward(a, std::span<const GroupMask>(&m, 1), Reduction::kNone);
  const auto ob = enc.forward(b, std::span<const GroupMask>(&m, 1), Reduction::kNone);
  int differ = 0;
  for (std::int64_t i = 0; i < oa.features.numel(); ++i) differ += oa.features.at(i) != ob.features.at(i);
  CHECK(differ == oa.features.numel());
}

TEST_CASE("mix embeddings need an encoder built for them") {
  const EncoderConfig c = micro();
  ParamStore<float> store;
  Rng rng(6);
  Encoder<float> plain(c, 0, store, rng);
  const GroupMask m = sample_group_mask(2, 2, 2, 16, 1);
  CHECK_THROWS_AS(plain.forward(random_pixels(1, c, rng), std::span<const GroupMask>(&m, 1),
                                Reduction::kMixEmbedding),
                  Error);
  ParamStore<float> store2;
  Encoder<float> mixer(c, 2, store2, rng);
  CHECK(store2.count() > store.count());
  CHECK_NOTHROW(mixer.forward(random_pixels(1, c, rng), std::span<const GroupMask>(&m, 1),
                              Reduction::kMixEmbedding));
}

TEST_CASE("drop path is deterministic in its seed and inactive by default") {
  EncoderConfig c = micro();
  c.drop_path_rate = 0.5;
  ParamStore<float> store;
  Rng rng(7);
  Encoder<float> enc(c, 0, store, rng);
  std::vector<GroupMask> masks(4, GroupMask::single(2, 2, 16));
  const Tensor x = random_pixels(4, c, rng);
  ForwardOptions on;
  on.drop_path = true;
  on.seed = 42;
  const auto a = enc.forward(x, masks, Reduction::kNone, on);
  const auto b = enc.forward(x, masks, Reduction::kNone, on);
  const auto plain = enc.forward(x, masks, Reduction::kNone);
  bool same = true, differs = false;
  for (std::int64_t i = 0; i < a.features.numel(); ++i) {
    same = same && a.features.at(i) == b.features.at(i);
    differs = differs || a.features.at(i) != plain.features.at(i);
  }
  CHECK(same);
  CHECK(differs);
}
