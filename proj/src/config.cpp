#include "mixmae/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mixmae/error.hpp"

namespace mixmae {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  // Shortest text that parses back to the same value.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kConfig, key + ": expected a number, got '" + v + "'");
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    fail(ErrorKind::kConfig, key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  fail(ErrorKind::kConfig, key + ": expected true or false, got '" + v + "'");
}

std::array<int, 4> parse_quad(const std::string& key, const std::string& v) {
  std::array<int, 4> out{};
  std::stringstream ss(v);
  std::string item;
  int n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 4) break;
    out[n++] = parse_int<int>(key, trim(item));
  }
  if (n != 4 || ss.rdbuf()->in_avail() > 0)
    fail(ErrorKind::kConfig, key + ": expected four comma-separated integers, got '" + v + "'");
  return out;
}

std::string fmt_quad(const std::array<int, 4>& q) {
  return std::to_string(q[0]) + "," + std::to_string(q[1]) + "," + std::to_string(q[2]) + "," +
         std::to_string(q[3]);
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define MIXMAE_DOUBLE(k, expr)                                                   \
  Field { k, [](const RunConfig& c) { return fmt_double(c.expr); },              \
          [](RunConfig& c, const std::string& v) { c.expr = parse_double(k, v); } }
#define MIXMAE_INT(k, expr)                                                             \
  Field { k, [](const RunConfig& c) { return std::to_string(c.expr); },                 \
          [](RunConfig& c, const std::string& v) {                                      \
            c.expr = parse_int<std::remove_cvref_t<decltype(c.expr)>>(k, v);            \
          } }
#define MIXMAE_BOOL(k, expr)                                                           \
  Field { k, [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); }, \
          [](RunConfig& c, const std::string& v) { c.expr = parse_bool(k, v); } }
#define MIXMAE_QUAD(k, expr)                                                   \
  Field { k, [](const RunConfig& c) { return fmt_quad(c.expr); },              \
          [](RunConfig& c, const std::string& v) { c.expr = parse_quad(k, v); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"model.preset", [](const RunConfig& c) { return c.preset; },
            [](RunConfig& c, const std::string& v) {
              RunConfig fresh = RunConfig::for_preset(v);
              c.preset = fresh.preset;
              c.encoder = fresh.encoder;
              c.decoder = fresh.decoder;
              c.train = fresh.train;
              c.finetune = fresh.finetune;
            }},
      MIXMAE_INT("model.img_px", encoder.img_px),
      MIXMAE_INT("model.in_chans", encoder.in_chans),
      MIXMAE_INT("model.patch_px", encoder.patch_px),
      MIXMAE_QUAD("model.channels", encoder.channels),
      MIXMAE_QUAD("model.heads", encoder.heads),
      MIXMAE_QUAD("model.blocks", encoder.blocks),
      MIXMAE_QUAD("model.windows", encoder.windows),
      MIXMAE_DOUBLE("model.drop_path_rate", encoder.drop_path_rate),
      Field{"model.reduction", [](const RunConfig& c) { return std::string(reduction_name(c.reduction)); },
            [](RunConfig& c, const std::string& v) { c.reduction = parse_reduction(v); }},
      MIXMAE_INT("model.decoder_width", encoder.out_width),
      MIXMAE_INT("model.decoder_blocks", decoder.blocks),
      MIXMAE_INT("model.decoder_heads", decoder.heads),
      MIXMAE_INT("mask.k", mask.groups),
      Field{"mask.fill", [](const RunConfig& c) { return std::string(corruption_mode_name(c.mask.fill)); },
            [](RunConfig& c, const std::string& v) { c.mask.fill = parse_corruption_mode(v); }},
      MIXMAE_BOOL("mask.dual", mask.dual),
      MIXMAE_DOUBLE("mask.extra_mask_fraction", mask.extra_mask_fraction),
      MIXMAE_DOUBLE("mask.zoom_max", mask.zoom_max),
      MIXMAE_INT("train.seed", seed),
      MIXMAE_DOUBLE("train.base_lr", train.base_lr),
      MIXMAE_INT("train.batch_size", train.batch_size),
      MIXMAE_DOUBLE("train.weight_decay", train.weight_decay),
      MIXMAE_DOUBLE("train.beta1", train.beta1),
      MIXMAE_DOUBLE("train.beta2", train.beta2),
      MIXMAE_DOUBLE("train.warmup_epochs", train.warmup_epochs),
      MIXMAE_INT("train.epochs", train.epochs),
      MIXMAE_DOUBLE("train.clip_grad", train.clip_grad),
      MIXMAE_DOUBLE("train.crop_scale_min", crop_scale_min),
      MIXMAE_BOOL("train.hflip", hflip),
      MIXMAE_INT("train.checkpoint_every", checkpoint_every),
      MIXMAE_INT("train.probe_epochs", probe.epochs),
      MIXMAE_DOUBLE("train.probe_lr", probe.lr),
      MIXMAE_DOUBLE("train.probe_weight_decay", probe.weight_decay),
      MIXMAE_INT("train.probe_batch_size", probe.batch_size),
      MIXMAE_DOUBLE("train.finetune_base_lr", finetune.base_lr),
      MIXMAE_INT("train.finetune_batch_size", finetune.batch_size),
      MIXMAE_DOUBLE("train.finetune_weight_decay", finetune.weight_decay),
      MIXMAE_DOUBLE("train.finetune_beta2", finetune.beta2),
      MIXMAE_DOUBLE("train.finetune_warmup_epochs", finetune.warmup_epochs),
      MIXMAE_INT("train.finetune_epochs", finetune.epochs),
      MIXMAE_DOUBLE("train.layer_decay", finetune.layer_decay),
      MIXMAE_DOUBLE("train.finetune_clip_grad", finetune.clip_grad),
      Field{"data.source", [](const RunConfig& c) { return c.data.source; },
            [](RunConfig& c, const std::string& v) {
              if (v != "synthetic" && v != "ppm")
                fail(ErrorKind::kConfig, "data.source: expected synthetic or ppm, got '" + v + "'");
              c.data.source = v;
            }},
      Field{"data.path", [](const RunConfig& c) { return c.data.path; },
            [](RunConfig& c, const std::string& v) { c.data.path = v; }},
      MIXMAE_INT("data.count", data.count),
      MIXMAE_INT("data.seed", data.seed),
      MIXMAE_DOUBLE("data.noise", data.noise),
  };
  return table;
}

#undef MIXMAE_DOUBLE
#undef MIXMAE_INT
#undef MIXMAE_BOOL
#undef MIXMAE_QUAD

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  fail(ErrorKind::kConfig, "unknown configuration key '" + key + "'");
}

}  // namespace

RunConfig RunConfig::for_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.encoder = EncoderConfig::preset(name);
  if (name == "toy") {
    c.decoder = DecoderConfig::toy(c.encoder);
    c.train.base_lr = 4e-3;
    c.train.batch_size = 64;
    c.train.warmup_epochs = 2;
    c.train.epochs = 30;
    c.finetune = TrainConfig::finetune();
    c.finetune.base_lr = 2e-3;
    c.finetune.batch_size = 64;
    c.finetune.warmup_epochs = 1;
    c.finetune.epochs = 10;
    c.finetune.layer_decay = 0.75;
  } else {
    c.decoder = DecoderConfig::full(c.encoder);
    c.train = TrainConfig::pretrain();
    c.finetune = TrainConfig::finetune();
    c.encoder.drop_path_rate = name == "large" ? 0.2 : name == "huge" ? 0.3 : 0.15;
    c.data.count = 1281167;
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  field(key).set(*this, value);
  decoder.width = encoder.out_width;
  decoder.out_px = encoder.unit_px();
  decoder.grid = encoder.mask_grid();
  decoder.in_chans = encoder.in_chans;
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t RunConfig::model_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : fields()) {
    if (f.key.rfind("model.", 0) != 0 && f.key.rfind("mask.", 0) != 0) continue;
    for (char ch : f.key + "=" + f.get(*this) + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void RunConfig::validate() const {
  encoder.validate();
  DecoderConfig d = decoder;
  d.width = encoder.out_width;
  d.validate();
  if (decoder.out_px != encoder.unit_px() || decoder.grid != encoder.mask_grid() ||
      decoder.in_chans != encoder.in_chans || decoder.width != encoder.out_width)
    fail(ErrorKind::kConfig, "decoder geometry does not follow the encoder");
  const int t = encoder.mask_grid() * encoder.mask_grid();
  if (mask.groups < 2)
    fail(ErrorKind::kConfig, "mask.k = " + std::to_string(mask.groups) +
                                 " gives a masking ratio of 0; at least 2 groups are required");
  if (mask.groups > t)
    fail(ErrorKind::kConfig, "mask.k = " + std::to_string(mask.groups) + " exceeds the " +
                                 std::to_string(t) + " mask units");
  if (mask.extra_mask_fraction < 0.0 || mask.extra_mask_fraction * mask.groups >= 1.0)
    fail(ErrorKind::kConfig, "mask.extra_mask_fraction must lie in [0, 1/k)");
  if (mask.extra_mask_fraction > 0.0 && mask.fill != CorruptionMode::kMix)
    fail(ErrorKind::kConfig, "mask.extra_mask_fraction only applies to mask.fill = mix");
  if (!(mask.zoom_max > 1.0)) fail(ErrorKind::kConfig, "mask.zoom_max must exceed 1");
  train.validate();
  finetune.validate();
  if (train.batch_size % mask.groups != 0)
    fail(ErrorKind::kConfig, "train.batch_size " + std::to_string(train.batch_size) +
                                 " is not a multiple of mask.k " + std::to_string(mask.groups));
  if (crop_scale_min <= 0.0 || crop_scale_min > 1.0)
    fail(ErrorKind::kConfig, "train.crop_scale_min must lie in (0, 1]");
  if (probe.epochs < 0 || probe.batch_size < 1 || !(probe.lr > 0.0))
    fail(ErrorKind::kConfig, "probe settings must be positive");
  if (data.count < 1) fail(ErrorKind::kConfig, "data.count must be positive");
  if (data.source == "ppm" && data.path.empty())
    fail(ErrorKind::kConfig, "data.source = ppm needs data.path");
  if (checkpoint_every < 0) fail(ErrorKind::kConfig, "train.checkpoint_every must be >= 0");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::string preset;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::kParse, origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::kParse, origin + ":" + std::to_string(lineno) + ": missing key");
    for (const auto& [k, v] : entries)
      if (k == key)
        fail(ErrorKind::kConfig, origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
    if (key == "model.preset") preset = value;
    entries.emplace_back(std::move(key), std::move(value));
  }
  RunConfig c = RunConfig::for_preset(preset.empty() ? "toy" : preset);
  for (const auto& [k, v] : entries) {
    if (k == "model.preset") continue;
    try {
      c.set(k, v);
    } catch (const Error& e) {
      fail(e.kind(), origin + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace mixmae
