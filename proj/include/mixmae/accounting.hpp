#pragma once

// Analytic parameter and compute accounting.

#include <cstdint>

#include "mixmae/decoder.hpp"
#include "mixmae/encoder.hpp"

namespace mixmae {

struct ParamBreakdown {
  std::int64_t patch_embed = 0;
  std::int64_t pos_embed = 0;
  std::int64_t blocks = 0;
  std::int64_t merging = 0;
  std::int64_t final_norm = 0;
  std::int64_t projection = 0;  // encoder-to-decoder linear
  std::int64_t total() const {
    return patch_embed + pos_embed + blocks + merging + final_norm + projection;
  }
};

// Encoder parameters including the projection to the decoder width;
// excludes the decoder, classification heads and mix embeddings.
ParamBreakdown count_params(const EncoderConfig& config);
std::int64_t count_decoder_params(const DecoderConfig& config);

struct FlopBreakdown {
  // Multiply-accumulate counts of one un-mixed forward pass.
  std::int64_t patch_embed = 0;
  std::int64_t projections = 0;  // qkv and output projections
  std::int64_t attention = 0;    // score and weighted-sum products
  std::int64_t mlp = 0;
  std::int64_t merging = 0;
  std::int64_t head = 0;         // encoder-to-decoder projection
  std::int64_t macs() const {
    return patch_embed + projections + attention + mlp + merging + head;
  }
  std::int64_t flops() const { return 2 * macs(); }
};

// Forward cost of the encoder at `img_px` (defaults to the configured edge).
FlopBreakdown count_flops(const EncoderConfig& config, int img_px = 0);
std::int64_t count_decoder_macs(const DecoderConfig& config);

struct EfficiencyReport {
  int groups = 0;
  double mixed_encoder_macs = 0;      // one mixed forward serving all groups
  double masked_encoder_macs = 0;     // one [MASK]-padded forward per image
  double encoder_ratio = 0;           // per reconstructed image, mixed / masked
  double decoder_macs = 0;            // per decoded image
  double with_decoder_ratio = 0;      // same ratio with decoder cost added
};

EfficiencyReport efficiency(const EncoderConfig& enc, const DecoderConfig& dec, int groups);

}  // namespace mixmae
