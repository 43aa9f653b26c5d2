#include "mixmae/accounting.hpp"

#include "mixmae/error.hpp"

namespace mixmae {

namespace {

std::int64_t block_params(std::int64_t c) {
  const std::int64_t norms = 2 * 2 * c;
  const std::int64_t qkv = c * 3 * c + 3 * c;
  const std::int64_t proj = c * c + c;
  const std::int64_t mlp = c * 4 * c + 4 * c + 4 * c * c + c;
  return norms + qkv + proj + mlp;
}

// MACs of one pre-norm block over n tokens in windows of w*w tokens.
void block_macs(std::int64_t n, std::int64_t c, std::int64_t window_tokens, FlopBreakdown& f) {
  f.projections += n * c * 3 * c + n * c * c;
  f.attention += 2 * n * window_tokens * c;
  f.mlp += 2 * n * c * 4 * c;
}

}  // namespace

ParamBreakdown count_params(const EncoderConfig& config) {
  config.validate();
  ParamBreakdown p;
  const std::int64_t patch_len =
      static_cast<std::int64_t>(config.in_chans) * config.patch_px * config.patch_px;
  const std::int64_t g0 = config.grid(0);
  p.patch_embed = patch_len * config.channels[0] + config.channels[0];
  p.pos_embed = g0 * g0 * config.channels[0];
  for (int s = 0; s < 4; ++s) {
    const std::int64_t c = config.channels[s];
    p.blocks += config.blocks[s] * block_params(c);
    if (s < 3) p.merging += 2 * 4 * c + 4 * c * config.channels[s + 1];
  }
  p.final_norm = 2 * static_cast<std::int64_t>(config.channels[3]);
  p.projection = static_cast<std::int64_t>(config.channels[3]) * config.out_width + config.out_width;
  return p;
}

std::int64_t count_decoder_params(const DecoderConfig& config) {
  const std::int64_t w = config.width;
  return w + config.tokens() * w + config.blocks * block_params(w) + 2 * w +
         w * config.pred_len() + config.pred_len();
}

FlopBreakdown count_flops(const EncoderConfig& config, int img_px) {
  EncoderConfig c = config;
  if (img_px > 0) c.img_px = img_px;
  c.validate();
  FlopBreakdown f;
  const std::int64_t patch_len = static_cast<std::int64_t>(c.in_chans) * c.patch_px * c.patch_px;
  const std::int64_t n0 = static_cast<std::int64_t>(c.grid(0)) * c.grid(0);
  f.patch_embed = n0 * patch_len * c.channels[0];
  for (int s = 0; s < 4; ++s) {
    const std::int64_t n = static_cast<std::int64_t>(c.grid(s)) * c.grid(s);
    const std::int64_t w = c.window(s);
    for (int b = 0; b < c.blocks[s]; ++b) block_macs(n, c.channels[s], w * w, f);
    if (s < 3) f.merging += (n / 4) * 4 * c.channels[s] * c.channels[s + 1];
  }
  const std::int64_t n3 = static_cast<std::int64_t>(c.grid(3)) * c.grid(3);
  f.head = n3 * c.channels[3] * c.out_width;
  return f;
}

std::int64_t count_decoder_macs(const DecoderConfig& config) {
  FlopBreakdown f;
  const std::int64_t t = config.tokens();
  for (int b = 0; b < config.blocks; ++b) block_macs(t, config.width, t, f);
  return f.macs() + t * config.width * config.pred_len();
}

EfficiencyReport efficiency(const EncoderConfig& enc, const DecoderConfig& dec, int groups) {
  if (groups < 1) fail(ErrorKind::kParameter, "efficiency: group count must be positive");
  EfficiencyReport r;
  r.groups = groups;
  // Mixing does not change the token count, so one mixed forward costs the
  // same as one plain forward; the [MASK] baseline encodes every image on a
  // full-size grid of its own.
  const double full = static_cast<double>(count_flops(enc).macs());
  r.mixed_encoder_macs = full;
  r.masked_encoder_macs = full * groups;
  r.encoder_ratio = (r.mixed_encoder_macs / groups) / full;
  r.decoder_macs = static_cast<double>(count_decoder_macs(dec));
  r.with_decoder_ratio = (r.mixed_encoder_macs / groups + r.decoder_macs) / (full + r.decoder_macs);
  return r;
}

}  // namespace mixmae
