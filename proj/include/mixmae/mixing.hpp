#pragma once

// Group masks, mixed inputs, corruption variants for the filling-content
// ablation, attention masks and token unmixing.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixmae/image.hpp"
#include "mixmae/tensor.hpp"

namespace mixmae {

// Assigns every mask unit (one final-stage token) to one of `groups` source
// images. Row-major over the unit grid.
struct GroupMask {
  int grid_h = 0;
  int grid_w = 0;
  int groups = 1;
  int unit_px = 1;
  std::vector<int> group_of;

  int units() const { return grid_h * grid_w; }
  int at(int y, int x) const { return group_of[static_cast<std::size_t>(y) * grid_w + x]; }
  int count(int group) const;
  // Fraction of units that image `group` does not own.
  double masked_fraction(int group) const;

  // Every unit owned by group 0: the unmixed, single-image case.
  static GroupMask single(int grid_h, int grid_w, int unit_px);
};

// Shuffles the T unit indices, hands out contiguous chunks of floor(T/K) to
// groups 0..K-1 and gives the T mod K leftovers to groups 0.. in order.
GroupMask sample_group_mask(int grid_h, int grid_w, int groups, int unit_px, std::uint64_t seed);

// K-way balanced mixing with an extra held-out group: round(T * holdout)
// shuffled units go to group `groups` (filled with the learnable unit, never
// reconstructed), the rest are split as in sample_group_mask. The returned
// mask has groups + 1 groups.
GroupMask sample_group_mask_with_holdout(int grid_h, int grid_w, int groups, int unit_px,
                                         double holdout, std::uint64_t seed);

// Output pixel (c, y, x) is sources[group_of(y / unit, x / unit)](c, y, x).
Image mix_images(std::span<const Image> sources, const GroupMask& mask);

// Units masked for one image; 1 = masked.
struct UnitMask {
  int grid_h = 0;
  int grid_w = 0;
  int unit_px = 1;
  std::vector<std::uint8_t> masked;

  static UnitMask hidden_from(const GroupMask& mask, int group);
  static UnitMask owned_by(const GroupMask& mask, int group);
};

enum class CorruptionMode { kMix, kZero, kLearnable, kShuffle, kZoomIn };

CorruptionMode parse_corruption_mode(const std::string& name);
const char* corruption_mode_name(CorruptionMode mode);

struct ZoomRange {
  double min_factor = 1.0;  // exclusive
  double max_factor = 2.0;
};

// Pixel-space corruption for the modes that need no learned content
// (zero, shuffle, zoomin).
Image corrupt_pixels(const Image& image, const UnitMask& mask, CorruptionMode mode,
                     std::uint64_t seed, ZoomRange zoom = {});

// Replaces the masked units of every image in `images` [B, C, H, W] with the
// shared learnable unit [C, unit, unit]; gradients reach the unit.
template <class T>
BasicTensor<T> fill_learnable(const BasicTensor<T>& images, std::span<const UnitMask> masks,
                              const BasicTensor<T>& unit);

// Single-image corruption covering every mode except mix; returns [C, H, W].
Tensor corrupt(const Image& image, const UnitMask& mask, CorruptionMode mode,
               const Tensor& learnable_unit, std::uint64_t seed, ZoomRange zoom = {});

// Group id per token on a finer grid.
struct TokenGroupMap {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<int> group_of;

  int at(int y, int x) const { return group_of[static_cast<std::size_t>(y) * grid_w + x]; }
  bool operator==(const TokenGroupMap&) const = default;
};

TokenGroupMap to_token_map(const GroupMask& mask);
TokenGroupMap upsample_mask(const GroupMask& mask, int factor);
TokenGroupMap upsample_map(const TokenGroupMap& map, int factor);

// Window-local attention permissions: attend[(w * n + i) * n + j] for
// window w and tokens i, j in row-major order within the window. Windows are
// enumerated row-major over the grid.
struct AttendMask {
  int windows = 0;
  int window_tokens = 0;
  std::vector<std::uint8_t> attend;

  bool allowed(int w, int i, int j) const {
    return attend[(static_cast<std::size_t>(w) * window_tokens + i) * window_tokens + j] != 0;
  }
};

AttendMask build_attention_mask(const TokenGroupMap& map, int window);

// Keeps the rows of `tokens` [B*T, D] owned by group k (per sample) and
// fills every other position with `mask_token` [D]. The result stacks one
// [B*T, D] block per entry of `groups`.
template <class T>
BasicTensor<T> unmix_tokens(const BasicTensor<T>& tokens, std::span<const GroupMask> masks,
                            std::span<const int> groups, const BasicTensor<T>& mask_token);

template <class T>
BasicTensor<T> unmix_tokens(const BasicTensor<T>& tokens, const GroupMask& mask, int group,
                            const BasicTensor<T>& mask_token) {
  const int g[] = {group};
  return unmix_tokens(tokens, std::span<const GroupMask>(&mask, 1), std::span<const int>(g),
                      mask_token);
}

}  // namespace mixmae
