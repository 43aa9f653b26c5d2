#pragma once

// Run configuration: flat `key = value` text with namespaced keys.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mixmae/decoder.hpp"
#include "mixmae/encoder.hpp"
#include "mixmae/mixing.hpp"
#include "mixmae/optim.hpp"

namespace mixmae {

struct MaskConfig {
  int groups = 4;                  // K images per mixed input
  CorruptionMode fill = CorruptionMode::kMix;
  bool dual = true;                // reconstruct every group, or group 0 only
  double extra_mask_fraction = 0;  // extra per-image masking filled with the learnable unit
  double zoom_max = 2.0;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | ppm
  std::string path;
  int count = 2048;
  std::uint64_t seed = 7;
  double noise = 0.08;               // synthetic background noise amplitude
};

struct ProbeConfig {
  int epochs = 100;
  double lr = 0.05;
  double weight_decay = 1e-4;
  int batch_size = 256;
};

struct RunConfig {
  std::string preset = "toy";
  EncoderConfig encoder = EncoderConfig::toy();
  DecoderConfig decoder = DecoderConfig::toy(EncoderConfig::toy());
  Reduction reduction = Reduction::kMaskedAttention;
  MaskConfig mask;
  TrainConfig train;     // pretraining
  TrainConfig finetune;  // full finetuning
  ProbeConfig probe;
  DataConfig data;
  double crop_scale_min = 0.67;
  bool hflip = true;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // steps; 0 keeps only per-epoch checkpoints

  // Applies a preset to model.*, train.* and finetune defaults.
  static RunConfig for_preset(const std::string& name);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Canonical `key = value` lines in keys() order.
  std::string serialize() const;
  // Hash of the model.* and mask.* entries; checkpoints refuse to load
  // under a different value.
  std::uint64_t model_hash() const;
  void validate() const;
};

// Parses `key = value` lines; `#` starts a comment. model.preset is applied
// first wherever it appears so explicit keys override it.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

}  // namespace mixmae
