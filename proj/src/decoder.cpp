#include "mixmae/decoder.hpp"

#include <cmath>

#include "mixmae/error.hpp"

namespace mixmae {

void DecoderConfig::validate() const {
  if (width < 1 || blocks < 0 || heads < 1 || out_px < 1 || in_chans < 1 || grid < 1)
    fail(ErrorKind::kConfig, "decoder sizes must be positive");
  if (width % heads != 0)
    fail(ErrorKind::kConfig, "decoder width " + std::to_string(width) +
                                 " not divisible by " + std::to_string(heads) + " heads");
}

DecoderConfig DecoderConfig::full(const EncoderConfig& enc) {
  DecoderConfig d;
  d.width = enc.out_width;
  d.out_px = enc.unit_px();
  d.in_chans = enc.in_chans;
  d.grid = enc.mask_grid();
  return d;
}

DecoderConfig DecoderConfig::toy(const EncoderConfig& enc) {
  DecoderConfig d = full(enc);
  d.blocks = 2;
  d.heads = 4;
  return d;
}

ReconTarget normalize_targets(const Image& image, int unit_px) {
  if (unit_px < 1 || image.height % unit_px != 0 || image.width % unit_px != 0)
    fail(ErrorKind::kParameter, "normalize_targets: " + std::to_string(image.height) + "x" +
                                    std::to_string(image.width) + " image not divisible by unit " +
                                    std::to_string(unit_px));
  ReconTarget t;
  t.grid_h = image.height / unit_px;
  t.grid_w = image.width / unit_px;
  t.unit_px = unit_px;
  t.channels = image.channels;
  const std::int64_t len = t.unit_len();
  t.values.resize(static_cast<std::size_t>(t.units() * len));
  t.mean.resize(static_cast<std::size_t>(t.units()));
  t.stdev.resize(static_cast<std::size_t>(t.units()));
  std::vector<double> buf(static_cast<std::size_t>(len));
  for (int gy = 0; gy < t.grid_h; ++gy)
    for (int gx = 0; gx < t.grid_w; ++gx) {
      std::size_t i = 0;
      double mean = 0.0;
      for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < unit_px; ++y)
          for (int x = 0; x < unit_px; ++x) {
            buf[i] = image.at(c, gy * unit_px + y, gx * unit_px + x);
            mean += buf[i++];
          }
      mean /= static_cast<double>(len);
      double var = 0.0;
      for (double v : buf) var += (v - mean) * (v - mean);
      var /= static_cast<double>(len);
      const double sd = std::sqrt(var + kTargetEps);
      const std::int64_t u = static_cast<std::int64_t>(gy) * t.grid_w + gx;
      t.mean[u] = static_cast<float>(mean);
      t.stdev[u] = static_cast<float>(sd);
      float* out = t.values.data() + u * len;
      for (std::int64_t j = 0; j < len; ++j) out[j] = static_cast<float>((buf[j] - mean) / sd);
    }
  return t;
}

Image denormalize(std::span<const float> values, const ReconTarget& stats) {
  const std::int64_t len = stats.unit_len();
  if (static_cast<std::int64_t>(values.size()) != stats.units() * len)
    fail(ErrorKind::kParameter, "denormalize: value count does not match the unit grid");
  const int p = stats.unit_px;
  Image img(stats.channels, stats.grid_h * p, stats.grid_w * p);
  for (int gy = 0; gy < stats.grid_h; ++gy)
    for (int gx = 0; gx < stats.grid_w; ++gx) {
      const std::int64_t u = static_cast<std::int64_t>(gy) * stats.grid_w + gx;
      const float* src = values.data() + u * len;
      std::size_t i = 0;
      for (int c = 0; c < stats.channels; ++c)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            img.at(c, gy * p + y, gx * p + x) = src[i++] * stats.stdev[u] + stats.mean[u];
    }
  return img;
}

template <class T>
Decoder<T>::Decoder(const DecoderConfig& config, ParamStore<T>& store, Rng& rng, int depth)
    : config_(config) {
  config_.validate();
  const std::int64_t w = config_.width;
  mask_token_ = store.normal("decoder.mask_token", {w}, 0.02, depth, rng);
  pos_embed_ = store.normal("decoder.pos_embed", {config_.tokens(), w}, 0.02, depth, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    blocks_.emplace_back();
    blocks_.back().init(store, "decoder.block" + std::to_string(b), config_.width, config_.heads,
                        depth, rng);
  }
  norm_.init(store, "decoder.norm", w, depth);
  head_.init(store, "decoder.head", w, config_.pred_len(), true, depth, rng);
  // Unit-variance predictions at initialisation.
  const double sd = 1.0 / std::sqrt(static_cast<double>(w));
  for (auto& v : head_.weight.mutable_data()) v = static_cast<T>(rng.normal(0.0, sd));
}

template <class T>
BasicTensor<T> Decoder<T>::decode(const BasicTensor<T>& unmixed) const {
  const std::int64_t t = config_.tokens(), w = config_.width;
  if (unmixed.rank() != 2 || unmixed.dim(1) != w || unmixed.dim(0) % t != 0)
    fail(ErrorKind::kParameter, "decode: expected [G*" + std::to_string(t) + ", " +
                                    std::to_string(w) + "], got " + shape_str(unmixed.shape()));
  const std::int64_t g = unmixed.dim(0) / t;
  auto x = add(reshape(unmixed, {g, t, w}), pos_embed_);
  const auto& lay = cache_.attention(g, config_.grid, config_.grid, config_.grid, config_.heads,
                                     config_.width);
  for (const auto& blk : blocks_) x = blk.forward(x, lay, BasicTensor<T>{});
  return head_(norm_(x));
}

template <class T>
BasicTensor<T> Decoder<T>::forward(const BasicTensor<T>& tokens, std::span<const GroupMask> masks,
                                   std::span<const int> groups) const {
  const std::int64_t b = tokens.dim(0), t = config_.tokens();
  if (tokens.rank() != 3 || tokens.dim(1) != t || tokens.dim(2) != config_.width)
    fail(ErrorKind::kParameter, "decoder: expected encoder tokens [B, " + std::to_string(t) +
                                    ", " + std::to_string(config_.width) + "], got " +
                                    shape_str(tokens.shape()));
  auto flat = reshape(tokens, {b * t, static_cast<std::int64_t>(config_.width)});
  auto pred = decode(unmix_tokens(flat, masks, groups, mask_token_));
  return reshape(pred, {static_cast<std::int64_t>(groups.size()), b, t, config_.pred_len()});
}

template <class T>
LossTerms<T> dual_loss(const BasicTensor<T>& predictions, const BasicTensor<T>& targets,
                       std::span<const GroupMask> masks, std::span<const int> groups) {
  if (predictions.shape() != targets.shape() || predictions.rank() != 4)
    fail(ErrorKind::kParameter, "dual_loss: predictions " + shape_str(predictions.shape()) +
                                    " and targets " + shape_str(targets.shape()) +
                                    " must both be [G, B, T, P]");
  const std::int64_t ng = predictions.dim(0), b = predictions.dim(1), t = predictions.dim(2),
                     p = predictions.dim(3);
  if (ng != static_cast<std::int64_t>(groups.size()) ||
      b != static_cast<std::int64_t>(masks.size()))
    fail(ErrorKind::kParameter, "dual_loss: " + std::to_string(ng) + " prediction groups for " +
                                    std::to_string(groups.size()) + " listed groups, batch " +
                                    std::to_string(b) + " for " + std::to_string(masks.size()) +
                                    " masks");
  LossTerms<T> out;
  for (std::int64_t g = 0; g < ng; ++g) {
    const int k = groups[g];
    auto rows = std::make_shared<std::vector<std::int64_t>>();
    for (std::int64_t s = 0; s < b; ++s) {
      if (masks[s].units() != t)
        fail(ErrorKind::kParameter, "dual_loss: mask grid does not match prediction grid");
      if (k < 0 || k >= masks[s].groups)
        fail(ErrorKind::kParameter, "dual_loss: group " + std::to_string(k) + " not in mask");
      for (std::int64_t u = 0; u < t; ++u)
        if (masks[s].group_of[u] != k) rows->push_back((g * b + s) * t + u);
    }
    const std::int64_t n = static_cast<std::int64_t>(rows->size());
    BasicTensor<T> term;
    if (n == 0) {
      term = BasicTensor<T>::scalar(T(0));
    } else {
      IndexMap idx(rows);
      auto diff = sub(gather_rows(predictions, idx, p, {n, p}), gather_rows(targets, idx, p, {n, p}));
      term = scale(sum(mul(diff, diff)), static_cast<T>(1.0 / (static_cast<double>(n) * p)));
    }
    out.terms.push_back(term);
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  if (!out.total.defined()) fail(ErrorKind::kParameter, "dual_loss: no groups");
  return out;
}

template <class T>
BasicTensor<T> stack_targets(std::span<const ReconTarget> targets, std::int64_t batch,
                             int per_sample, std::span<const int> groups) {
  if (static_cast<std::int64_t>(targets.size()) != batch * per_sample || targets.empty())
    fail(ErrorKind::kParameter, "stack_targets: expected " + std::to_string(batch * per_sample) +
                                    " targets, got " + std::to_string(targets.size()));
  const std::int64_t t = targets.front().units(), p = targets.front().unit_len();
  std::vector<T> data;
  data.reserve(groups.size() * batch * t * p);
  for (int k : groups) {
    if (k < 0 || k >= per_sample)
      fail(ErrorKind::kParameter, "stack_targets: group " + std::to_string(k) + " out of range");
    for (std::int64_t s = 0; s < batch; ++s) {
      const auto& tg = targets[s * per_sample + k];
      if (tg.units() != t || tg.unit_len() != p)
        fail(ErrorKind::kParameter, "stack_targets: targets differ in geometry");
      data.insert(data.end(), tg.values.begin(), tg.values.end());
    }
  }
  return BasicTensor<T>::from({static_cast<std::int64_t>(groups.size()), batch, t, p},
                              std::move(data));
}

template class Decoder<float>;
template class Decoder<double>;
template LossTerms<float> dual_loss(const Tensor&, const Tensor&, std::span<const GroupMask>,
                                    std::span<const int>);
template LossTerms<double> dual_loss(const Tensor64&, const Tensor64&, std::span<const GroupMask>,
                                     std::span<const int>);
template Tensor stack_targets<float>(std::span<const ReconTarget>, std::int64_t, int,
                                     std::span<const int>);
template Tensor64 stack_targets<double>(std::span<const ReconTarget>, std::int64_t, int,
                                        std::span<const int>);

}  // namespace mixmae
