#pragma once

// Binary checkpoints: little-endian throughout, magic "MXMM", version 1,
// trailing CRC-32 over every preceding byte.
//
//   magic[4] version:u32
//   config_len:u64 config_text[config_len] config_hash:u64
//   seed:u64 step:i64 epoch:i64
//   n:u32 { name_len:u32 name dtype:u8 rank:u32 dims:u64[rank] payload }
//   opt_step:i64 m:u32 { name_len:u32 name first:f32[] second:f32[] }
//   crc32:u32

#include <cstdint>
#include <string>
#include <vector>

#include "mixmae/tensor.hpp"

namespace mixmae {

constexpr char kCheckpointMagic[4] = {'M', 'X', 'M', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct MomentPair {
  std::string name;
  std::vector<float> first;
  std::vector<float> second;
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;  // root of every derived random stream
  std::int64_t step = 0;   // optimizer steps completed
  std::int64_t epoch = 0;  // epochs completed
  std::vector<NamedArray> tensors;
  std::int64_t optimizer_step = 0;
  std::vector<MomentPair> moments;

  const NamedArray* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// `origin` names the source in error messages.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                             const std::string& origin = "<memory>");

// Writes to a temporary sibling and renames, so readers never see a partial file.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Throws a configuration error when the hashes differ and `force` is false.
void check_config_hash(const Checkpoint& ckpt, std::uint64_t expected, bool force,
                       const std::string& origin);

}  // namespace mixmae
