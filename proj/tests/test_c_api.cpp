#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "mixmae/mixmae.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  mixmae_free_string(s);
  return out;
}

mixmae_config* micro() {
  mixmae_config* c = nullptr;
  REQUIRE(mixmae_config_create("toy", &c) == MIXMAE_OK);
  const char* kv[][2] = {{"model.img_px", "32"},          {"model.patch_px", "2"},
                         {"model.channels", "8,8,16,16"},  {"model.heads", "2,2,2,2"},
                         {"model.blocks", "1,1,1,1"},      {"model.windows", "4,4,4,2"},
                         {"model.decoder_width", "8"},     {"model.decoder_heads", "2"},
                         {"model.decoder_blocks", "1"},    {"mask.k", "2"},
                         {"train.batch_size", "8"},        {"train.epochs", "1"},
                         {"train.warmup_epochs", "0.5"},   {"train.probe_epochs", "2"},
                         {"data.count", "16"}};
  for (const auto& p : kv) REQUIRE(mixmae_config_set(c, p[0], p[1]) == MIXMAE_OK);
  return c;
}

int log_lines = 0;
void count_log(const char*, void*) { ++log_lines; }

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(mixmae_version()).size() > 0);
  CHECK(std::string(mixmae_status_name(MIXMAE_OK)) == "ok");
  CHECK(std::string(mixmae_status_name(MIXMAE_ERR_INTEGRITY)).size() > 0);
}

TEST_CASE("config handles") {
  mixmae_config* c = nullptr;
  CHECK(mixmae_config_create("giant", &c) == MIXMAE_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(mixmae_last_error()).find("giant") != std::string::npos);
  REQUIRE(mixmae_config_create("toy", &c) == MIXMAE_OK);
  char* v = nullptr;
  REQUIRE(mixmae_config_get(c, "mask.k", &v) == MIXMAE_OK);
  CHECK(take(v) == "4");
  CHECK(mixmae_config_set(c, "mask.k", "2") == MIXMAE_OK);
  REQUIRE(mixmae_config_get(c, "mask.k", &v) == MIXMAE_OK);
  CHECK(take(v) == "2");
  CHECK(mixmae_config_set(c, "mask.nope", "2") == MIXMAE_ERR_CONFIG);
  CHECK(mixmae_config_get(c, "mask.nope", &v) == MIXMAE_ERR_CONFIG);
  char* text = nullptr;
  REQUIRE(mixmae_config_serialize(c, &text) == MIXMAE_OK);
  const std::string s = take(text);
  CHECK(s.find("mask.k = 2\n") != std::string::npos);
  mixmae_config* d = nullptr;
  REQUIRE(mixmae_config_parse(s.c_str(), &d) == MIXMAE_OK);
  REQUIRE(mixmae_config_serialize(d, &text) == MIXMAE_OK);
  CHECK(take(text) == s);
  CHECK(mixmae_config_parse("what", &d) == MIXMAE_ERR_PARSE);
  CHECK(mixmae_config_load("/nonexistent/x.cfg", &d) == MIXMAE_ERR_IO);
  mixmae_config_destroy(d);
  mixmae_config_destroy(c);
  mixmae_config_destroy(nullptr);
}

TEST_CASE("null arguments are reported, not dereferenced") {
  CHECK(mixmae_config_create("toy", nullptr) == MIXMAE_ERR_NULL_ARGUMENT);
  CHECK(mixmae_config_set(nullptr, "a", "b") == MIXMAE_ERR_NULL_ARGUMENT);
  CHECK(mixmae_count_params(nullptr, nullptr) == MIXMAE_ERR_NULL_ARGUMENT);
  CHECK(mixmae_checkpoint_info(nullptr, nullptr) == MIXMAE_ERR_NULL_ARGUMENT);
  CHECK(std::string(mixmae_last_error()).size() > 0);
}

TEST_CASE("accounting through the C surface") {
  mixmae_config* c = nullptr;
  REQUIRE(mixmae_config_create("base", &c) == MIXMAE_OK);
  mixmae_param_count p{};
  REQUIRE(mixmae_count_params(c, &p) == MIXMAE_OK);
  CHECK(p.encoder_total > 83'000'000);
  CHECK(p.encoder_total < 93'000'000);
  CHECK(p.patch_embed + p.pos_embed + p.blocks + p.merging + p.final_norm + p.projection ==
        p.encoder_total);
  mixmae_flop_count f{};
  REQUIRE(mixmae_count_flops(c, 224, &f) == MIXMAE_OK);
  CHECK(f.encoder_macs > 14'600'000'000LL);
  CHECK(f.encoder_macs < 18'000'000'000LL);
  mixmae_efficiency e{};
  REQUIRE(mixmae_efficiency_report(c, 4, &e) == MIXMAE_OK);
  CHECK(e.groups == 4);
  CHECK(e.encoder_ratio <= 0.30);
  CHECK(mixmae_count_flops(c, 100, &f) == MIXMAE_ERR_CONFIG);
  mixmae_config_destroy(c);
}

TEST_CASE("grad check, schedule and report") {
  char* report = nullptr;
  int failures = -1;
  REQUIRE(mixmae_grad_check("primitives", 1, &report, &failures) == MIXMAE_OK);
  CHECK(failures == 0);
  CHECK(take(report).find("PASS") != std::string::npos);
  CHECK(mixmae_grad_check("everything", 1, &report, &failures) == MIXMAE_ERR_PARAMETER);

  mixmae_config* c = micro();
  char* csv = nullptr;
  REQUIRE(mixmae_dump_schedule(c, 3, &csv) == MIXMAE_OK);
  const std::string s = take(csv);
  CHECK(s.rfind("step,epoch,lr,indices\n", 0) == 0);
  int lines = 0;
  for (char ch : s) lines += ch == '\n';
  CHECK(lines == 3);
  mixmae_config_destroy(c);

  char* summary = nullptr;
  CHECK(mixmae_report("/nonexistent/metrics.csv", &summary) == MIXMAE_ERR_IO);
}

TEST_CASE("pretrain, inspect, probe and panel through the C surface") {
  const fs::path dir = fs::temp_directory_path() / "mixmae_test_c_api";
  fs::remove_all(dir);
  mixmae_config* c = micro();
  log_lines = 0;
  mixmae_set_log(count_log, nullptr);
  const std::string out = dir.string();
  mixmae_pretrain_options o{out.c_str(), nullptr, 0, -1};
  mixmae_pretrain_result r{};
  REQUIRE(mixmae_pretrain(c, &o, &r) == MIXMAE_OK);
  CHECK(r.steps == 2);
  CHECK(log_lines > 0);
  mixmae_set_log(nullptr, nullptr);
  CHECK(fs::exists(r.checkpoint));

  char* info = nullptr;
  REQUIRE(mixmae_checkpoint_info(r.checkpoint, &info) == MIXMAE_OK);
  CHECK(take(info).find("step 2") != std::string::npos);
  char* summary = nullptr;
  REQUIRE(mixmae_report((dir / "metrics.csv").string().c_str(), &summary) == MIXMAE_OK);
  CHECK(take(summary).size() > 0);

  mixmae_config* from = nullptr;
  REQUIRE(mixmae_config_from_checkpoint(r.checkpoint, &from) == MIXMAE_OK);
  char* k = nullptr;
  REQUIRE(mixmae_config_get(from, "mask.k", &k) == MIXMAE_OK);
  CHECK(take(k) == "2");
  mixmae_config_destroy(from);

  mixmae_eval e{};
  REQUIRE(mixmae_probe(c, r.checkpoint, 0, &e) == MIXMAE_OK);
  CHECK(e.train_count + e.test_count == 16);
  REQUIRE(mixmae_probe(c, nullptr, 0, &e) == MIXMAE_OK);

  mixmae_config_set(c, "mask.dual", "false");
  CHECK(mixmae_probe(c, r.checkpoint, 0, &e) == MIXMAE_ERR_CONFIG);
  CHECK(mixmae_probe(c, r.checkpoint, 1, &e) == MIXMAE_OK);
  mixmae_config_set(c, "mask.dual", "true");

  const std::string ppm = (dir / "panel.ppm").string();
  REQUIRE(mixmae_write_panel(c, r.checkpoint, 2, 0, ppm.c_str()) == MIXMAE_OK);
  CHECK(fs::file_size(ppm) > 2 * 32 * 96 * 3);

  // Corrupt the checkpoint: integrity error, never a crash.
  {
    std::FILE* f = std::fopen(r.checkpoint, "r+b");
    REQUIRE(f);
    std::fseek(f, -8, SEEK_END);
    std::fputc(0x5a, f);
    std::fclose(f);
  }
  CHECK(mixmae_checkpoint_info(r.checkpoint, &info) == MIXMAE_ERR_INTEGRITY);
  mixmae_config_destroy(c);
  fs::remove_all(dir);
}
