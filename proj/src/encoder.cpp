#include "mixmae/encoder.hpp"

#include <algorithm>

#include "mixmae/error.hpp"

namespace mixmae {

Reduction parse_reduction(const std::string& name) {
  if (name == "none") return Reduction::kNone;
  if (name == "mix-embedding") return Reduction::kMixEmbedding;
  if (name == "masked-attention") return Reduction::kMaskedAttention;
  fail(ErrorKind::kConfig, "unknown reduction '" + name +
                               "' (expected none, mix-embedding or masked-attention)");
}

const char* reduction_name(Reduction r) {
  switch (r) {
    case Reduction::kNone: return "none";
    case Reduction::kMixEmbedding: return "mix-embedding";
    case Reduction::kMaskedAttention: return "masked-attention";
  }
  return "?";
}

int EncoderConfig::window(int stage) const { return std::min(windows[stage], grid(stage)); }

void EncoderConfig::validate() const {
  if (patch_px < 1 || in_chans < 1 || img_px < 1)
    fail(ErrorKind::kConfig, "image, channel and patch sizes must be positive");
  if (img_px % unit_px() != 0)
    fail(ErrorKind::kConfig, "image edge " + std::to_string(img_px) +
                                 " is not divisible by the mask unit " +
                                 std::to_string(unit_px()) + " (patch size x 8)");
  if (out_width < 1) fail(ErrorKind::kConfig, "decoder width must be positive");
  if (drop_path_rate < 0.0 || drop_path_rate > 1.0)
    fail(ErrorKind::kConfig, "drop path rate must lie in [0, 1]");
  for (int s = 0; s < 4; ++s) {
    if (channels[s] < 1 || heads[s] < 1 || blocks[s] < 1)
      fail(ErrorKind::kConfig, "stage " + std::to_string(s + 1) +
                                   " needs positive channels, heads and blocks");
    if (channels[s] % heads[s] != 0)
      fail(ErrorKind::kConfig, "stage " + std::to_string(s + 1) + ": " +
                                   std::to_string(channels[s]) + " channels not divisible by " +
                                   std::to_string(heads[s]) + " heads");
    if (windows[s] < 1 || grid(s) % window(s) != 0)
      fail(ErrorKind::kConfig, "stage " + std::to_string(s + 1) + ": window " +
                                   std::to_string(windows[s]) + " does not tile grid " +
                                   std::to_string(grid(s)));
  }
}

EncoderConfig EncoderConfig::base() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::base_w7() {
  EncoderConfig c;
  c.windows = {7, 7, 7, 7};
  return c;
}

EncoderConfig EncoderConfig::large() {
  EncoderConfig c;
  c.channels = {192, 384, 768, 1536};
  c.heads = {6, 12, 24, 48};
  return c;
}

EncoderConfig EncoderConfig::huge() {
  EncoderConfig c;
  c.channels = {352, 704, 1408, 2816};
  c.heads = {11, 22, 44, 88};
  return c;
}

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.img_px = 128;
  c.patch_px = 4;
  c.channels = {16, 32, 64, 128};
  c.heads = {1, 2, 4, 8};
  c.blocks = {1, 1, 2, 1};
  c.windows = {8, 8, 8, 4};
  c.drop_path_rate = 0.1;
  c.out_width = 64;
  return c;
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  if (name == "base" || name == "base-w14") return base();
  if (name == "base-w7") return base_w7();
  if (name == "large") return large();
  if (name == "huge") return huge();
  if (name == "toy") return toy();
  fail(ErrorKind::kConfig, "unknown model preset '" + name +
                               "' (expected toy, base, base-w7, large or huge)");
}

TokenGroupMap stage_group_map(const EncoderConfig& config, const GroupMask& mask, int stage) {
  if (mask.grid_h != config.mask_grid() || mask.grid_w != config.mask_grid() ||
      mask.unit_px != config.unit_px())
    fail(ErrorKind::kParameter, "mask grid " + std::to_string(mask.grid_h) + "x" +
                                    std::to_string(mask.grid_w) + " (unit " +
                                    std::to_string(mask.unit_px) +
                                    ") does not match the final-stage token grid");
  return upsample_mask(mask, 1 << (3 - stage));
}

template <class T>
Encoder<T>::Encoder(const EncoderConfig& config, int mix_groups, ParamStore<T>& store, Rng& rng)
    : config_(config), mix_groups_(mix_groups) {
  config_.validate();
  const auto& c = config_;
  const std::int64_t patch_len = static_cast<std::int64_t>(c.in_chans) * c.patch_px * c.patch_px;
  const std::int64_t n0 = static_cast<std::int64_t>(c.grid(0)) * c.grid(0);
  patch_proj_.init(store, "encoder.patch_embed.proj", patch_len, c.channels[0], true, 0, rng);
  pos_embed_ = store.normal("encoder.pos_embed", {n0, c.channels[0]}, 0.02, 0, rng);
  int depth = 0;
  for (int s = 0; s < 4; ++s) {
    const std::string stage = "encoder.stage" + std::to_string(s);
    if (mix_groups_ > 0)
      mix_embed_[s] =
          store.normal(stage + ".mix_embed", {mix_groups_, c.channels[s]}, 0.02, depth + 1, rng);
    for (int b = 0; b < c.blocks[s]; ++b) {
      blocks_[s].emplace_back();
      blocks_[s].back().init(store, stage + ".block" + std::to_string(b), c.channels[s],
                             c.heads[s], ++depth, rng);
    }
    if (s < 3) {
      merge_norm_[s].init(store, stage + ".merge.norm", 4 * c.channels[s], depth);
      merge_proj_[s].init(store, stage + ".merge.reduction", 4 * c.channels[s], c.channels[s + 1],
                          false, depth, rng);
    }
  }
  final_norm_.init(store, "encoder.norm", c.channels[3], depth + 1);
  out_proj_.init(store, "encoder.to_decoder", c.channels[3], c.out_width, true, depth + 1, rng);
}

template <class T>
const AttentionLayout& Encoder<T>::layout(int stage, std::int64_t batch) const {
  const int g = config_.grid(stage);
  return cache_.attention(batch, g, g, config_.window(stage), config_.heads[stage],
                          config_.channels[stage]);
}

template <class T>
BasicTensor<T> Encoder<T>::patch_embed(const BasicTensor<T>& pixels) const {
  const auto& c = config_;
  if (pixels.rank() != 4 || pixels.dim(1) != c.in_chans || pixels.dim(2) != c.img_px ||
      pixels.dim(3) != c.img_px)
    fail(ErrorKind::kConfig, "patch_embed: expected [B," + std::to_string(c.in_chans) + "," +
                                 std::to_string(c.img_px) + "," + std::to_string(c.img_px) +
                                 "], got " + shape_str(pixels.shape()));
  const std::int64_t batch = pixels.dim(0);
  const int p = c.patch_px, g = c.grid(0), edge = c.img_px, chans = c.in_chans;
  const std::int64_t patch_len = static_cast<std::int64_t>(chans) * p * p;
  const std::int64_t n = static_cast<std::int64_t>(g) * g;
  auto index = cache_.table("patch:" + std::to_string(batch), [&] {
    std::vector<std::int64_t> idx;
    idx.reserve(batch * n * patch_len);
    for (std::int64_t b = 0; b < batch; ++b)
      for (int gy = 0; gy < g; ++gy)
        for (int gx = 0; gx < g; ++gx)
          for (int ch = 0; ch < chans; ++ch)
            for (int py = 0; py < p; ++py)
              for (int px = 0; px < p; ++px)
                idx.push_back(((b * chans + ch) * edge + gy * p + py) * edge + gx * p + px);
    return idx;
  });
  auto patches = gather(pixels, index, {batch, n, patch_len});
  return add(patch_proj_(patches), pos_embed_);
}

template <class T>
BasicTensor<T> Encoder<T>::patch_merge(int stage, const BasicTensor<T>& x,
                                       std::span<const TokenGroupMap> maps) const {
  const int g = config_.grid(stage), half = g / 2;
  const std::int64_t batch = x.dim(0), ch = config_.channels[stage];
  // The 2x2 neighbourhoods of every sample must belong to one group.
  for (const auto& m : maps)
    for (int y = 0; y < g; y += 2)
      for (int xx = 0; xx < g; xx += 2) {
        const int grp = m.at(y, xx);
        MIXMAE_ASSERT(m.at(y + 1, xx) == grp && m.at(y, xx + 1) == grp &&
                          m.at(y + 1, xx + 1) == grp,
                      "patch merging would combine tokens of different groups");
      }
  auto index = cache_.table("merge:" + std::to_string(stage) + ":" + std::to_string(batch), [&] {
    std::vector<std::int64_t> idx;
    idx.reserve(batch * g * g);
    const int offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (std::int64_t b = 0; b < batch; ++b)
      for (int y = 0; y < half; ++y)
        for (int xx = 0; xx < half; ++xx)
          for (const auto& o : offsets)
            idx.push_back(b * g * g + static_cast<std::int64_t>(2 * y + o[0]) * g + 2 * xx + o[1]);
    return idx;
  });
  auto cat = gather_rows(x, index, ch, {batch, static_cast<std::int64_t>(half) * half, 4 * ch});
  return merge_proj_[stage](merge_norm_[stage](cat));
}

template <class T>
BasicTensor<T> Encoder<T>::attention_bias(int stage, std::span<const TokenGroupMap> maps) const {
  const int window = config_.window(stage), heads = config_.heads[stage];
  std::vector<AttendMask> masks;
  bool any_blocked = false;
  for (const auto& m : maps) {
    masks.push_back(build_attention_mask(m, window));
    if (std::find(masks.back().attend.begin(), masks.back().attend.end(), 0) !=
        masks.back().attend.end())
      any_blocked = true;
  }
  if (!any_blocked) return {};
  const int wins = masks.front().windows, n = masks.front().window_tokens;
  const std::int64_t batch = static_cast<std::int64_t>(maps.size());
  auto bias = BasicTensor<T>::zeros({batch * wins * heads, n, n});
  T* out = bias.mutable_data().data();
  const std::size_t block = static_cast<std::size_t>(n) * n;
  for (std::int64_t b = 0; b < batch; ++b)
    for (int w = 0; w < wins; ++w) {
      const std::uint8_t* a = masks[b].attend.data() + w * block;
      for (int h = 0; h < heads; ++h) {
        T* dst = out + ((b * wins + w) * heads + h) * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] = a[i] ? T(0) : T(kMaskedLogit);
      }
    }
  return bias;
}

template <class T>
EncoderOutput<T> Encoder<T>::forward(const BasicTensor<T>& pixels,
                                     std::span<const GroupMask> masks, Reduction reduction,
                                     const ForwardOptions& options) const {
  const auto& c = config_;
  const std::int64_t batch = pixels.dim(0);
  if (static_cast<std::int64_t>(masks.size()) != batch)
    fail(ErrorKind::kParameter, "encoder: " + std::to_string(masks.size()) + " masks for batch " +
                                    std::to_string(batch));
  bool mixed = false;
  for (const auto& m : masks) mixed = mixed || m.groups > 1;
  if (reduction == Reduction::kMixEmbedding && mixed) {
    if (mix_groups_ <= 0)
      fail(ErrorKind::kConfig, "mix-embedding reduction needs an encoder built with mix groups");
    for (const auto& m : masks)
      if (m.groups > mix_groups_)
        fail(ErrorKind::kParameter, "mask has " + std::to_string(m.groups) +
                                        " groups; mix embeddings exist for " +
                                        std::to_string(mix_groups_));
  }

  EncoderOutput<T> out;
  auto x = patch_embed(pixels);
  int block_index = 0;
  for (int s = 0; s < 4; ++s) {
    const std::int64_t n = static_cast<std::int64_t>(c.grid(s)) * c.grid(s);
    const std::int64_t ch = c.channels[s];
    std::vector<TokenGroupMap> maps;
    maps.reserve(masks.size());
    for (const auto& m : masks) maps.push_back(stage_group_map(c, m, s));

    if (reduction == Reduction::kMixEmbedding && mixed) {
      auto rows = std::make_shared<std::vector<std::int64_t>>();
      rows->reserve(batch * n);
      for (const auto& m : maps) rows->insert(rows->end(), m.group_of.begin(), m.group_of.end());
      x = add(x, gather_rows(mix_embed_[s], IndexMap(rows), ch, {batch, n, ch}));
    }
    BasicTensor<T> bias;
    if (reduction == Reduction::kMaskedAttention && mixed) bias = attention_bias(s, maps);
    const auto& lay = layout(s, batch);
    for (const auto& blk : blocks_[s]) {
      BasicTensor<T> keep_attn, keep_mlp;
      const double rate = c.drop_path_rate;
      if (options.drop_path && rate > 0.0) {
        Rng rng(derive_seed(options.seed, Stream::kDropPath, block_index));
        auto make_keep = [&] {
          auto keep = BasicTensor<T>::zeros({batch, n, ch});
          auto data = keep.mutable_data();
          for (std::int64_t b = 0; b < batch; ++b) {
            const bool survive = rng.uniform() >= rate;
            const T v = survive ? static_cast<T>(1.0 / (1.0 - rate)) : T(0);
            std::fill_n(data.begin() + b * n * ch, n * ch, v);
          }
          return keep;
        };
        keep_attn = make_keep();
        keep_mlp = make_keep();
      }
      x = blk.forward(x, lay, bias, keep_attn, keep_mlp);
      ++block_index;
    }
    if (options.keep_stages) out.stages.push_back(x);
    if (s < 3) x = patch_merge(s, x, maps);
  }
  out.features = final_norm_(x);
  out.tokens = out_proj_(out.features);
  return out;
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace mixmae
