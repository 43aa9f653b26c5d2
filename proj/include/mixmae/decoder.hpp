#pragma once

// Unmix-and-decode path, per-unit target normalization and the K-fold
// masked reconstruction loss.

#include <cstdint>
#include <span>
#include <vector>

#include "mixmae/encoder.hpp"
#include "mixmae/image.hpp"
#include "mixmae/mixing.hpp"
#include "mixmae/nn.hpp"

namespace mixmae {

struct DecoderConfig {
  int width = 512;
  int blocks = 8;
  int heads = 16;
  int out_px = 32;  // mask-unit edge
  int in_chans = 3;
  int grid = 7;     // final-stage token grid edge

  int tokens() const { return grid * grid; }
  std::int64_t pred_len() const { return static_cast<std::int64_t>(out_px) * out_px * in_chans; }
  void validate() const;

  // Decoder sized for an encoder: the grid, unit and channels follow it.
  static DecoderConfig full(const EncoderConfig& enc);
  static DecoderConfig toy(const EncoderConfig& enc);
};

// Normalized pixels per mask unit, laid out [units, out_px*out_px*C] with
// values in (c, y, x) order inside a unit.
struct ReconTarget {
  int grid_h = 0;
  int grid_w = 0;
  int unit_px = 0;
  int channels = 0;
  std::vector<float> values;
  std::vector<float> mean;  // per unit
  std::vector<float> stdev;  // per unit, sqrt(var + eps)

  std::int64_t units() const { return static_cast<std::int64_t>(grid_h) * grid_w; }
  std::int64_t unit_len() const { return static_cast<std::int64_t>(unit_px) * unit_px * channels; }
};

constexpr double kTargetEps = 1e-6;

ReconTarget normalize_targets(const Image& image, int unit_px);
// Maps unit-major normalized vectors (targets or predictions) back to pixels
// using the per-unit statistics of `stats`.
Image denormalize(std::span<const float> values, const ReconTarget& stats);

template <class T>
class Decoder {
 public:
  Decoder(const DecoderConfig& config, ParamStore<T>& store, Rng& rng, int depth);

  const DecoderConfig& config() const { return config_; }
  const BasicTensor<T>& mask_token() const { return mask_token_; }

  // unmixed: [G*T, width] full-grid token sets (mask positions already
  // holding the mask token). Returns [G, T, pred_len].
  BasicTensor<T> decode(const BasicTensor<T>& unmixed) const;

  // Encoder tokens [B, T, width] -> unmix for each k in `groups` -> decode.
  // Returns [groups.size(), B, T, pred_len], k-major.
  BasicTensor<T> forward(const BasicTensor<T>& tokens, std::span<const GroupMask> masks,
                         std::span<const int> groups) const;

  const LinearLayer<T>& head() const { return head_; }
  LinearLayer<T>& head() { return head_; }

 private:
  DecoderConfig config_;
  BasicTensor<T> mask_token_;
  BasicTensor<T> pos_embed_;
  std::vector<TransformerBlock<T>> blocks_;
  NormLayer<T> norm_;
  LinearLayer<T> head_;
  mutable LayoutCache cache_;
};

template <class T>
struct LossTerms {
  BasicTensor<T> total;               // scalar
  std::vector<BasicTensor<T>> terms;  // one scalar per entry of `groups`
};

// predictions, targets: [G, B, T, P] with entry g reconstructing source
// groups[g] of every sample. Each term is the mean squared error over the
// units of its image that the mixed input hid (units not owned by that
// group) and all P values; the total is the sum of the terms.
template <class T>
LossTerms<T> dual_loss(const BasicTensor<T>& predictions, const BasicTensor<T>& targets,
                       std::span<const GroupMask> masks, std::span<const int> groups);

// Packs the targets of the listed groups into [G, B, T, P]; `targets` is
// sample-major with `per_sample` entries per sample (one per source group).
template <class T>
BasicTensor<T> stack_targets(std::span<const ReconTarget> targets, std::int64_t batch,
                             int per_sample, std::span<const int> groups);

}  // namespace mixmae
