#pragma once

// Hierarchical four-stage windowed transformer (no shifted windows).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixmae/mixing.hpp"
#include "mixmae/nn.hpp"

namespace mixmae {

// How the encoder tells the mixed groups apart.
enum class Reduction { kNone, kMixEmbedding, kMaskedAttention };

Reduction parse_reduction(const std::string& name);
const char* reduction_name(Reduction r);

struct EncoderConfig {
  int img_px = 224;
  int in_chans = 3;
  int patch_px = 4;
  std::array<int, 4> channels{128, 256, 512, 1024};
  std::array<int, 4> heads{4, 8, 16, 32};
  std::array<int, 4> blocks{2, 2, 18, 2};
  std::array<int, 4> windows{14, 14, 14, 7};
  double drop_path_rate = 0.0;
  int out_width = 512;  // encoder-to-decoder projection width

  int grid(int stage) const { return (img_px / patch_px) >> stage; }
  int unit_px() const { return patch_px * 8; }
  int mask_grid() const { return grid(3); }
  int total_blocks() const { return blocks[0] + blocks[1] + blocks[2] + blocks[3]; }
  // Window edge actually used at a stage: clamped to the grid edge.
  int window(int stage) const;
  void validate() const;

  static EncoderConfig base();     // Swin-B with 14x14 windows (global at stages 3-4)
  static EncoderConfig base_w7();  // plain Swin-B windows
  static EncoderConfig large();
  static EncoderConfig huge();
  static EncoderConfig toy();
  static EncoderConfig preset(const std::string& name);
};

struct ForwardOptions {
  bool drop_path = false;
  std::uint64_t seed = 0;  // drop-path stream
  bool keep_stages = false;
};

template <class T>
struct EncoderOutput {
  BasicTensor<T> features;  // [B, T, C4], final layernorm applied
  BasicTensor<T> tokens;    // [B, T, out_width]
  std::vector<BasicTensor<T>> stages;  // per-stage block outputs when requested
};

template <class T>
class Encoder {
 public:
  // `mix_groups` > 0 allocates per-stage mix embeddings for that many groups.
  Encoder(const EncoderConfig& config, int mix_groups, ParamStore<T>& store, Rng& rng);

  const EncoderConfig& config() const { return config_; }
  // Deepest layer index; the classification head and final norm sit here.
  int max_depth() const { return config_.total_blocks() + 1; }

  // pixels: [B, C, H, W]. One mask per sample.
  EncoderOutput<T> forward(const BasicTensor<T>& pixels, std::span<const GroupMask> masks,
                           Reduction reduction, const ForwardOptions& options = {}) const;

  // [B, C, H, W] -> [B, N, C0] with positional embeddings added.
  BasicTensor<T> patch_embed(const BasicTensor<T>& pixels) const;
  // 2x2 neighbourhood concat + norm + projection; checks group alignment.
  BasicTensor<T> patch_merge(int stage, const BasicTensor<T>& x,
                             std::span<const TokenGroupMap> maps) const;
  const TransformerBlock<T>& block(int stage, int index) const { return blocks_[stage][index]; }
  BasicTensor<T> attention_bias(int stage, std::span<const TokenGroupMap> maps) const;
  const AttentionLayout& layout(int stage, std::int64_t batch) const;

 private:
  EncoderConfig config_;
  int mix_groups_;
  LinearLayer<T> patch_proj_;
  BasicTensor<T> pos_embed_;
  std::array<BasicTensor<T>, 4> mix_embed_;
  std::array<std::vector<TransformerBlock<T>>, 4> blocks_;
  std::array<NormLayer<T>, 3> merge_norm_;
  std::array<LinearLayer<T>, 3> merge_proj_;
  NormLayer<T> final_norm_;
  LinearLayer<T> out_proj_;
  mutable LayoutCache cache_;
};

// Group map of one sample at a stage: the mask upsampled to that grid.
TokenGroupMap stage_group_map(const EncoderConfig& config, const GroupMask& mask, int stage);

}  // namespace mixmae
