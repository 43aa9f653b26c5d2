#include "mixmae/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "mixmae/error.hpp"

namespace mixmae {

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    for (float f : v) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf, std::size_t end, const std::string& origin)
      : buf_(buf), end_(end), origin_(origin) {}

  std::size_t offset() const { return pos_; }
  void need(std::size_t n, const char* what) {
    if (end_ - pos_ < n)
      fail(ErrorKind::kIntegrity, origin_ + ": truncated at byte offset " + std::to_string(end_) +
                                      " while reading " + what + " at offset " +
                                      std::to_string(pos_) + " (" + std::to_string(n) +
                                      " bytes needed)");
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::int64_t i64(const char* what) { return static_cast<std::int64_t>(u64(what)); }
  std::string str(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::uint64_t n, const char* what) {
    if (n > (end_ - pos_) / 4) need(n * 4, what);
    std::vector<float> v(n);
    for (auto& f : v) f = std::bit_cast<float>(u32(what));
    return v;
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u64(ckpt.config_text.size());
  w.bytes().insert(w.bytes().end(), ckpt.config_text.begin(), ckpt.config_text.end());
  w.u64(ckpt.config_hash);
  w.u64(ckpt.seed);
  w.i64(ckpt.step);
  w.i64(ckpt.epoch);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (static_cast<std::int64_t>(t.data.size()) != shape_numel(t.shape))
      fail(ErrorKind::kInternal, "checkpoint tensor " + t.name + " size does not match its shape");
    w.str32(t.name);
    w.u8(kDtypeF32);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(static_cast<std::uint64_t>(d));
    w.floats(t.data);
  }
  w.i64(ckpt.optimizer_step);
  w.u32(static_cast<std::uint32_t>(ckpt.moments.size()));
  for (const auto& m : ckpt.moments) {
    const NamedArray* t = ckpt.find(m.name);
    if (!t || m.first.size() != t->data.size() || m.second.size() != t->data.size())
      fail(ErrorKind::kInternal, "optimizer state " + m.name + " does not match a tensor");
    w.str32(m.name);
    w.floats(m.first);
    w.floats(m.second);
  }
  const std::uint32_t crc = crc_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::kFormat, origin + ": bad magic (not a checkpoint)");
  // Structure first, so truncation is reported with its offset; the CRC
  // then catches corruption inside well-formed records.
  const std::size_t body = bytes.size() >= 12 ? bytes.size() - 4 : bytes.size();
  Reader r(bytes, body, origin);
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::kFormat, origin + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const std::uint64_t cfg_len = r.u64("config length");
  c.config_text = r.str(cfg_len, "config text");
  c.config_hash = r.u64("config hash");
  c.seed = r.u64("seed");
  c.step = r.i64("step");
  c.epoch = r.i64("epoch");
  const std::uint32_t n = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray t;
    t.name = r.str(r.u32("name length"), "tensor name");
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != kDtypeF32)
      fail(ErrorKind::kFormat, origin + ": tensor " + t.name + " has unknown dtype tag " +
                                   std::to_string(dtype));
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) fail(ErrorKind::kIntegrity, origin + ": tensor " + t.name + " has rank " +
                                                  std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t extent = r.u64("dims");
      if (extent > (1ULL << 40))
        fail(ErrorKind::kIntegrity, origin + ": tensor " + t.name + " has an implausible extent");
      t.shape.push_back(static_cast<std::int64_t>(extent));
      count *= extent;
    }
    t.data = r.floats(count, "tensor payload");
    c.tensors.push_back(std::move(t));
  }
  c.optimizer_step = r.i64("optimizer step");
  const std::uint32_t m = r.u32("moment count");
  for (std::uint32_t i = 0; i < m; ++i) {
    MomentPair p;
    p.name = r.str(r.u32("name length"), "moment name");
    const NamedArray* t = c.find(p.name);
    if (!t) fail(ErrorKind::kIntegrity, origin + ": optimizer state for unknown tensor " + p.name);
    p.first = r.floats(t->data.size(), "first moments");
    p.second = r.floats(t->data.size(), "second moments");
    c.moments.push_back(std::move(p));
  }
  if (bytes.size() < 12 || r.offset() != body) {
    if (r.offset() < body)
      fail(ErrorKind::kIntegrity, origin + ": " + std::to_string(body - r.offset()) +
                                      " unexpected bytes at offset " + std::to_string(r.offset()));
    fail(ErrorKind::kIntegrity, origin + ": truncated at byte offset " +
                                    std::to_string(bytes.size()) + " (checksum missing)");
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const std::uint32_t actual = crc_of(bytes.data(), body);
  if (stored != actual) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": checksum mismatch (stored %08x, computed %08x)", stored, actual);
    fail(ErrorKind::kIntegrity, origin + buf);
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

void check_config_hash(const Checkpoint& ckpt, std::uint64_t expected, bool force,
                       const std::string& origin) {
  if (ckpt.config_hash == expected || force) return;
  char buf[128];
  std::snprintf(buf, sizeof buf, ": model/mask configuration hash %016llx differs from %016llx",
                static_cast<unsigned long long>(ckpt.config_hash),
                static_cast<unsigned long long>(expected));
  fail(ErrorKind::kConfig, origin + buf + " (use --force to load anyway)");
}

}  // namespace mixmae
