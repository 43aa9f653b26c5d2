#include "mixmae/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixmae/error.hpp"
#include "mixmae/rng.hpp"

namespace mixmae {

int GroupMask::count(int group) const {
  return static_cast<int>(std::count(group_of.begin(), group_of.end(), group));
}

double GroupMask::masked_fraction(int group) const {
  return static_cast<double>(units() - count(group)) / units();
}

GroupMask GroupMask::single(int grid_h, int grid_w, int unit_px) {
  GroupMask m;
  m.grid_h = grid_h;
  m.grid_w = grid_w;
  m.groups = 1;
  m.unit_px = unit_px;
  m.group_of.assign(static_cast<std::size_t>(grid_h) * grid_w, 0);
  return m;
}

GroupMask sample_group_mask(int grid_h, int grid_w, int groups, int unit_px,
                            std::uint64_t seed) {
  const int total = grid_h * grid_w;
  if (grid_h < 1 || grid_w < 1 || unit_px < 1)
    fail(ErrorKind::kParameter, "group mask needs a non-empty grid and unit size");
  if (groups < 2 || groups > total)
    fail(ErrorKind::kParameter, "group count " + std::to_string(groups) + " outside [2, " +
                                    std::to_string(total) + "]");
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));

  GroupMask m;
  m.grid_h = grid_h;
  m.grid_w = grid_w;
  m.groups = groups;
  m.unit_px = unit_px;
  m.group_of.assign(total, 0);
  const int chunk = total / groups;
  int pos = 0;
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < chunk; ++i) m.group_of[order[pos++]] = g;
  for (int g = 0; pos < total; ++g) m.group_of[order[pos++]] = g;
  return m;
}

GroupMask sample_group_mask_with_holdout(int grid_h, int grid_w, int groups, int unit_px,
                                         double holdout, std::uint64_t seed) {
  const int total = grid_h * grid_w;
  if (!(holdout >= 0.0 && holdout < 1.0))
    fail(ErrorKind::kParameter, "holdout fraction must lie in [0, 1)");
  const int held = static_cast<int>(std::lround(holdout * total));
  if (groups < 2 || groups > total - held)
    fail(ErrorKind::kParameter, "group count " + std::to_string(groups) + " outside [2, " +
                                    std::to_string(total - held) + "] after holding out " +
                                    std::to_string(held) + " units");
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));

  GroupMask m;
  m.grid_h = grid_h;
  m.grid_w = grid_w;
  m.groups = groups + 1;
  m.unit_px = unit_px;
  m.group_of.assign(total, 0);
  int pos = 0;
  for (; pos < held; ++pos) m.group_of[order[pos]] = groups;
  const int chunk = (total - held) / groups;
  for (int g = 0; g < groups; ++g)
    for (int i = 0; i < chunk; ++i) m.group_of[order[pos++]] = g;
  for (int g = 0; pos < total; ++g) m.group_of[order[pos++]] = g;
  return m;
}

Image mix_images(std::span<const Image> sources, const GroupMask& mask) {
  if (static_cast<int>(sources.size()) != mask.groups)
    fail(ErrorKind::kParameter, "mix_images: " + std::to_string(sources.size()) +
                                    " sources for " + std::to_string(mask.groups) + " groups");
  const Image& first = sources.front();
  for (const auto& s : sources)
    if (!s.same_geometry(first))
      fail(ErrorKind::kParameter, "mix_images: sources differ in shape");
  if (first.height != mask.grid_h * mask.unit_px || first.width != mask.grid_w * mask.unit_px)
    fail(ErrorKind::kParameter, "mix_images: image " + std::to_string(first.height) + "x" +
                                    std::to_string(first.width) + " does not match mask grid");
  Image out(first.channels, first.height, first.width);
  const int u = mask.unit_px;
  for (int c = 0; c < first.channels; ++c)
    for (int y = 0; y < first.height; ++y)
      for (int x = 0; x < first.width; ++x)
        out.at(c, y, x) = sources[mask.at(y / u, x / u)].at(c, y, x);
  return out;
}

UnitMask UnitMask::hidden_from(const GroupMask& mask, int group) {
  UnitMask m{mask.grid_h, mask.grid_w, mask.unit_px, {}};
  m.masked.resize(mask.group_of.size());
  for (std::size_t i = 0; i < m.masked.size(); ++i) m.masked[i] = mask.group_of[i] != group;
  return m;
}

UnitMask UnitMask::owned_by(const GroupMask& mask, int group) {
  UnitMask m{mask.grid_h, mask.grid_w, mask.unit_px, {}};
  m.masked.resize(mask.group_of.size());
  for (std::size_t i = 0; i < m.masked.size(); ++i) m.masked[i] = mask.group_of[i] == group;
  return m;
}

CorruptionMode parse_corruption_mode(const std::string& name) {
  if (name == "mix") return CorruptionMode::kMix;
  if (name == "zero") return CorruptionMode::kZero;
  if (name == "learnable") return CorruptionMode::kLearnable;
  if (name == "shuffle") return CorruptionMode::kShuffle;
  if (name == "zoomin") return CorruptionMode::kZoomIn;
  fail(ErrorKind::kParameter, "unknown corruption mode '" + name + "'");
}

const char* corruption_mode_name(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::kMix: return "mix";
    case CorruptionMode::kZero: return "zero";
    case CorruptionMode::kLearnable: return "learnable";
    case CorruptionMode::kShuffle: return "shuffle";
    case CorruptionMode::kZoomIn: return "zoomin";
  }
  return "?";
}

namespace {

void check_unit_mask(const Image& image, const UnitMask& mask) {
  if (image.height != mask.grid_h * mask.unit_px || image.width != mask.grid_w * mask.unit_px ||
      mask.masked.size() != static_cast<std::size_t>(mask.grid_h) * mask.grid_w)
    fail(ErrorKind::kParameter, "corrupt: unit mask does not match image geometry");
}

void copy_unit(const Image& src, int src_unit, Image& dst, int dst_unit, int grid_w, int u) {
  const int sy = (src_unit / grid_w) * u, sx = (src_unit % grid_w) * u;
  const int dy = (dst_unit / grid_w) * u, dx = (dst_unit % grid_w) * u;
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < u; ++y)
      for (int x = 0; x < u; ++x) dst.at(c, dy + y, dx + x) = src.at(c, sy + y, sx + x);
}

}  // namespace

Image corrupt_pixels(const Image& image, const UnitMask& mask, CorruptionMode mode,
                     std::uint64_t seed, ZoomRange zoom) {
  check_unit_mask(image, mask);
  const int u = mask.unit_px;
  Image out = image;
  std::vector<int> masked_units;
  for (int i = 0; i < static_cast<int>(mask.masked.size()); ++i)
    if (mask.masked[i]) masked_units.push_back(i);
  Rng rng(seed);
  switch (mode) {
    case CorruptionMode::kZero: {
      Image zeros(image.channels, image.height, image.width, 0.0f);
      for (int unit : masked_units) copy_unit(zeros, unit, out, unit, mask.grid_w, u);
      break;
    }
    case CorruptionMode::kShuffle: {
      std::vector<int> perm = masked_units;
      rng.shuffle(std::span<int>(perm));
      for (std::size_t i = 0; i < perm.size(); ++i)
        copy_unit(image, perm[i], out, masked_units[i], mask.grid_w, u);
      break;
    }
    case CorruptionMode::kZoomIn: {
      if (!(zoom.max_factor > zoom.min_factor) || zoom.min_factor < 1.0)
        fail(ErrorKind::kParameter, "zoomin: factor range must satisfy 1 <= min < max");
      // Draw from (min, max]: flip the half-open [min, max) interval.
      const double factor = zoom.max_factor - rng.uniform() * (zoom.max_factor - zoom.min_factor);
      const double ch = image.height / factor, cw = image.width / factor;
      const double y0 = rng.uniform(0.0, image.height - ch);
      const double x0 = rng.uniform(0.0, image.width - cw);
      Image zoomed = resize_crop(image, y0, x0, ch, cw, image.height, image.width);
      for (int unit : masked_units) copy_unit(zoomed, unit, out, unit, mask.grid_w, u);
      break;
    }
    case CorruptionMode::kMix:
      fail(ErrorKind::kParameter, "corrupt: mix mode needs a second image; use mix_images");
    case CorruptionMode::kLearnable:
      fail(ErrorKind::kParameter, "corrupt: learnable mode needs the learnable unit tensor");
  }
  return out;
}

template <class T>
BasicTensor<T> fill_learnable(const BasicTensor<T>& images, std::span<const UnitMask> masks,
                              const BasicTensor<T>& unit) {
  if (images.rank() != 4 || static_cast<std::size_t>(images.dim(0)) != masks.size())
    fail(ErrorKind::kParameter, "fill_learnable: expected [B,C,H,W] with one mask per image");
  const std::int64_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int u = masks.front().unit_px;
  if (unit.numel() != c * u * u)
    fail(ErrorKind::kParameter, "fill_learnable: unit " + shape_str(unit.shape()) +
                                    " does not match " + std::to_string(c) + "x" +
                                    std::to_string(u) + "x" + std::to_string(u));
  const std::int64_t n = images.numel();
  auto idx = std::make_shared<std::vector<std::int64_t>>(n);
  for (std::int64_t s = 0; s < b; ++s) {
    const UnitMask& m = masks[s];
    if (h != m.grid_h * u || w != m.grid_w * u)
      fail(ErrorKind::kParameter, "fill_learnable: unit mask does not match image geometry");
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t flat = ((s * c + ch) * h + y) * w + x;
          const bool masked = m.masked[(y / u) * m.grid_w + x / u];
          (*idx)[flat] = masked ? n + (ch * u + y % u) * u + x % u : flat;
        }
  }
  auto joined = concat(reshape(images, {n}), reshape(unit, {unit.numel()}));
  return gather(joined, IndexMap(idx), images.shape());
}

template Tensor fill_learnable(const Tensor&, std::span<const UnitMask>, const Tensor&);
template Tensor64 fill_learnable(const Tensor64&, std::span<const UnitMask>, const Tensor64&);

Tensor corrupt(const Image& image, const UnitMask& mask, CorruptionMode mode,
               const Tensor& learnable_unit, std::uint64_t seed, ZoomRange zoom) {
  check_unit_mask(image, mask);
  if (mode == CorruptionMode::kLearnable) {
    auto px = Tensor::from({1, image.channels, image.height, image.width}, image.pixels);
    auto out = fill_learnable(px, std::span<const UnitMask>(&mask, 1), learnable_unit);
    return reshape(out, {image.channels, image.height, image.width});
  }
  Image out = corrupt_pixels(image, mask, mode, seed, zoom);
  return Tensor::from({out.channels, out.height, out.width}, std::move(out.pixels));
}

TokenGroupMap to_token_map(const GroupMask& mask) {
  return TokenGroupMap{mask.grid_h, mask.grid_w, mask.group_of};
}

TokenGroupMap upsample_map(const TokenGroupMap& map, int factor) {
  if (factor < 1)
    fail(ErrorKind::kParameter, "upsample factor " + std::to_string(factor) + " must be >= 1");
  TokenGroupMap out{map.grid_h * factor, map.grid_w * factor, {}};
  out.group_of.resize(static_cast<std::size_t>(out.grid_h) * out.grid_w);
  for (int y = 0; y < out.grid_h; ++y)
    for (int x = 0; x < out.grid_w; ++x)
      out.group_of[static_cast<std::size_t>(y) * out.grid_w + x] = map.at(y / factor, x / factor);
  return out;
}

TokenGroupMap upsample_mask(const GroupMask& mask, int factor) {
  return upsample_map(to_token_map(mask), factor);
}

AttendMask build_attention_mask(const TokenGroupMap& map, int window) {
  if (window < 1 || map.grid_h % window != 0 || map.grid_w % window != 0)
    fail(ErrorKind::kConfig, "window " + std::to_string(window) + " does not tile a " +
                                 std::to_string(map.grid_h) + "x" + std::to_string(map.grid_w) +
                                 " token grid");
  const int wy = map.grid_h / window, wx = map.grid_w / window;
  const int n = window * window;
  AttendMask out;
  out.windows = wy * wx;
  out.window_tokens = n;
  out.attend.resize(static_cast<std::size_t>(out.windows) * n * n);
  std::vector<int> g(n);
  for (int w = 0; w < out.windows; ++w) {
    const int oy = (w / wx) * window, ox = (w % wx) * window;
    for (int i = 0; i < n; ++i) g[i] = map.at(oy + i / window, ox + i % window);
    std::uint8_t* a = out.attend.data() + static_cast<std::size_t>(w) * n * n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a[i * n + j] = g[i] == g[j];
  }
  return out;
}

template <class T>
BasicTensor<T> unmix_tokens(const BasicTensor<T>& tokens, std::span<const GroupMask> masks,
                            std::span<const int> groups, const BasicTensor<T>& mask_token) {
  if (masks.empty()) fail(ErrorKind::kParameter, "unmix_tokens: no masks");
  const std::int64_t t = masks.front().units();
  const std::int64_t b = static_cast<std::int64_t>(masks.size());
  if (tokens.rank() != 2 || tokens.dim(0) != b * t)
    fail(ErrorKind::kParameter, "unmix_tokens: token grid " + shape_str(tokens.shape()) +
                                    " does not match " + std::to_string(b) + " masks of " +
                                    std::to_string(t) + " units");
  const std::int64_t d = tokens.dim(1);
  if (mask_token.numel() != d)
    fail(ErrorKind::kParameter, "unmix_tokens: mask token width mismatch");
  for (const auto& m : masks)
    if (m.units() != t) fail(ErrorKind::kParameter, "unmix_tokens: masks differ in grid size");
  auto rows = std::make_shared<std::vector<std::int64_t>>();
  rows->reserve(groups.size() * b * t);
  const std::int64_t mask_row = b * t;
  for (int k : groups) {
    for (std::int64_t s = 0; s < b; ++s) {
      if (k < 0 || k >= masks[s].groups)
        fail(ErrorKind::kParameter, "unmix_tokens: group " + std::to_string(k) +
                                        " not in [0, " + std::to_string(masks[s].groups) + ")");
      for (std::int64_t u = 0; u < t; ++u)
        rows->push_back(masks[s].group_of[u] == k ? s * t + u : mask_row);
    }
  }
  auto joined = concat(tokens, reshape(mask_token, {1, d}));
  const std::int64_t n = static_cast<std::int64_t>(rows->size());
  return gather_rows(joined, IndexMap(rows), d, {n, d});
}

template Tensor unmix_tokens(const Tensor&, std::span<const GroupMask>, std::span<const int>,
                             const Tensor&);
template Tensor64 unmix_tokens(const Tensor64&, std::span<const GroupMask>, std::span<const int>,
                               const Tensor64&);

}  // namespace mixmae
