#include <doctest.h>

#include <tuple>
#include <vector>

#include "mixmae/accounting.hpp"
#include "mixmae/decoder.hpp"
#include "mixmae/encoder.hpp"

using namespace mixmae;

namespace {

// Parameter count of an instantiated encoder.
std::int64_t built_params(const EncoderConfig& c) {
  ParamStore<float> store;
  Rng rng(1);
  Encoder<float> enc(c, 0, store, rng);
  return store.count();
}

// Forward MACs enumerated as the list of GEMMs the encoder performs.
std::int64_t gemm_macs(const EncoderConfig& c) {
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> gemms;  // m, k, n
  const std::int64_t p = c.patch_px;
  gemms.emplace_back(static_cast<std::int64_t>(c.grid(0)) * c.grid(0), c.in_chans * p * p, c.channels[0]);
  for (int s = 0; s < 4; ++s) {
    const std::int64_t g = c.grid(s), n = g * g, ch = c.channels[s];
    const std::int64_t w = std::min<std::int64_t>(c.windows[s], g), nw = (g / w) * (g / w);
    const std::int64_t hd = ch / c.heads[s];
    for (int b = 0; b < c.blocks[s]; ++b) {
      gemms.emplace_back(n, ch, 3 * ch);
      for (std::int64_t i = 0; i < nw * c.heads[s]; ++i) {
        gemms.emplace_back(w * w, hd, w * w);  // q k^T
        gemms.emplace_back(w * w, w * w, hd);  // attn v
      }
      gemms.emplace_back(n, ch, ch);
      gemms.emplace_back(n, ch, 4 * ch);
      gemms.emplace_back(n, 4 * ch, ch);
    }
    if (s < 3) gemms.emplace_back(n / 4, 4 * ch, c.channels[s + 1]);
  }
  gemms.emplace_back(static_cast<std::int64_t>(c.grid(3)) * c.grid(3), c.channels[3], c.out_width);
  std::int64_t total = 0;
  for (const auto& [m, k, n] : gemms) total += m * k * n;
  return total;
}

}  // namespace

TEST_CASE("analytic parameter count equals the instantiated encoder") {
  CHECK(count_params(EncoderConfig::toy()).total() == built_params(EncoderConfig::toy()));
  EncoderConfig c = EncoderConfig::toy();
  c.blocks = {2, 1, 3, 1};
  c.out_width = 32;
  CHECK(count_params(c).total() == built_params(c));
}

TEST_CASE("analytic decoder parameter count equals the instantiated decoder") {
  const EncoderConfig ec = EncoderConfig::toy();
  const DecoderConfig dc = DecoderConfig::toy(ec);
  ParamStore<float> store;
  Rng rng(2);
  Decoder<float> dec(dc, store, rng, 0);
  CHECK(count_decoder_params(dc) == store.count());
}

TEST_CASE("analytic MACs equal the GEMM enumeration") {
  CHECK(count_flops(EncoderConfig::toy()).macs() == gemm_macs(EncoderConfig::toy()));
  CHECK(count_flops(EncoderConfig::base()).macs() == gemm_macs(EncoderConfig::base()));
  CHECK(count_flops(EncoderConfig::base_w7()).macs() == gemm_macs(EncoderConfig::base_w7()));
}

TEST_CASE("flops are twice the MACs and scale with the input edge") {
  const FlopBreakdown f = count_flops(EncoderConfig::toy());
  CHECK(f.flops() == 2 * f.macs());
  EncoderConfig c = EncoderConfig::toy();
  c.windows = {4, 4, 4, 4};
  const std::int64_t small = count_flops(c, 64).mlp, large = count_flops(c, 128).mlp;
  CHECK(large == 4 * small);
}

TEST_CASE("base presets sit near the published sizes") {
  const double params = static_cast<double>(count_params(EncoderConfig::base()).total());
  CHECK(params > 83.6e6);
  CHECK(params < 92.4e6);
  const double w14 = static_cast<double>(count_flops(EncoderConfig::base()).macs());
  const double w7 = static_cast<double>(count_flops(EncoderConfig::base_w7()).macs());
  CHECK(w14 > w7);
  CHECK(w14 / 1e9 == doctest::Approx(16.3).epsilon(0.1));
  CHECK(w7 / 1e9 == doctest::Approx(15.6).epsilon(0.1));
}

TEST_CASE("mixing K images costs 1/K of a full forward per image") {
  const EncoderConfig ec = EncoderConfig::base();
  const DecoderConfig dc = DecoderConfig::full(ec);
  for (int k = 2; k <= 5; ++k) {
    const EfficiencyReport r = efficiency(ec, dc, k);
    CHECK(r.encoder_ratio == doctest::Approx(1.0 / k));
    CHECK(r.mixed_encoder_macs < r.masked_encoder_macs);
    CHECK(r.with_decoder_ratio > r.encoder_ratio);
    CHECK(r.with_decoder_ratio < 1.0);
  }
}
