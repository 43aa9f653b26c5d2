#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "mixmae/config.hpp"
#include "mixmae/error.hpp"

using namespace mixmae;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInternal;
}

}  // namespace

TEST_CASE("toy defaults") {
  const RunConfig c = RunConfig::for_preset("toy");
  c.validate();
  CHECK(c.encoder.img_px == 128);
  CHECK(c.encoder.mask_grid() == 4);
  CHECK(c.decoder.out_px == 32);
  CHECK(c.decoder.blocks == 2);
  CHECK(c.mask.groups == 4);
  CHECK(c.reduction == Reduction::kMaskedAttention);
  CHECK(c.train.epochs == 30);
  CHECK(c.train.peak_lr() == doctest::Approx(1e-3));
  CHECK(c.data.count == 2048);
}

TEST_CASE("serialize and parse round trip every key") {
  RunConfig c = RunConfig::for_preset("toy");
  c.set("mask.k", "2");
  c.set("mask.fill", "shuffle");
  c.set("train.base_lr", "0.0123456789");
  c.set("model.reduction", "mix-embedding");
  c.set("data.noise", "0.1");
  const std::string text = c.serialize();
  const RunConfig back = parse_config(text);
  CHECK(back.serialize() == text);
  CHECK(back.model_hash() == c.model_hash());
  CHECK(back.train.base_lr == 0.0123456789);
  for (const auto& k : RunConfig::keys()) CHECK(back.get(k) == c.get(k));
}

TEST_CASE("model hash covers model and mask keys only") {
  RunConfig a = RunConfig::for_preset("toy"), b = a;
  b.set("train.epochs", "3");
  b.set("data.count", "64");
  CHECK(a.model_hash() == b.model_hash());
  b.set("mask.k", "2");
  CHECK(a.model_hash() != b.model_hash());
  RunConfig c = a;
  c.set("model.decoder_blocks", "1");
  CHECK(a.model_hash() != c.model_hash());
}

TEST_CASE("presets apply before explicit keys wherever they appear") {
  const RunConfig c = parse_config("mask.k = 2\n# comment\nmodel.preset = base\n\n");
  CHECK(c.encoder.channels[0] == 128);
  CHECK(c.mask.groups == 2);
  CHECK(c.train.peak_lr() == doctest::Approx(6e-4));
  const RunConfig w = parse_config("model.preset = base-w7");
  CHECK(w.encoder.windows[0] == 7);
}

TEST_CASE("parse errors name the line") {
  try {
    parse_config("mask.k = 2\nnot a pair\n", "run.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  CHECK(kind_of([] { parse_config("= 3"); }) == ErrorKind::kParse);
  CHECK(kind_of([] { parse_config("mask.k = 2\nmask.k = 3"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("mask.bogus = 1"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("mask.k = two"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("mask.dual = maybe"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("model.channels = 1,2,3"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("model.preset = giant"); }) == ErrorKind::kConfig);
  CHECK(kind_of([] { parse_config("model.reduction = magic"); }) == ErrorKind::kConfig);
}

TEST_CASE("validation rejects inconsistent settings") {
  auto with = [](const std::string& key, const std::string& value) {
    RunConfig c = RunConfig::for_preset("toy");
    c.set(key, value);
    return c;
  };
  CHECK(kind_of([&] { with("mask.k", "1").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("mask.k", "17").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("mask.k", "3").validate(); }) == ErrorKind::kConfig);  // batch 64
  CHECK(kind_of([&] { with("mask.extra_mask_fraction", "0.3").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("model.img_px", "100").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("model.heads", "3,2,4,8").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("data.source", "ppm").validate(); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { with("train.crop_scale_min", "0").validate(); }) == ErrorKind::kConfig);
  RunConfig ok = with("mask.k", "2");
  ok.set("mask.extra_mask_fraction", "0.25");
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("decoder geometry follows the encoder") {
  RunConfig c = RunConfig::for_preset("toy");
  c.set("model.img_px", "256");
  CHECK(c.decoder.grid == 8);
  c.set("model.decoder_width", "96");
  CHECK(c.decoder.width == 96);
  c.set("model.decoder_heads", "4");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("load_config reads files and reports missing ones") {
  const std::string path = "test_config_tmp.cfg";
  {
    std::ofstream f(path);
    f << "mask.k = 2   # two groups\ntrain.epochs = 5\n";
  }
  const RunConfig c = load_config(path);
  CHECK(c.mask.groups == 2);
  CHECK(c.train.epochs == 5);
  std::remove(path.c_str());
  CHECK(kind_of([&] { load_config(path); }) == ErrorKind::kIo);
}
