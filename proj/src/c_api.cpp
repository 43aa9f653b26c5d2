#include "mixmae/mixmae.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "mixmae/ablation.hpp"
#include "mixmae/accounting.hpp"
#include "mixmae/error.hpp"
#include "mixmae/grad_suite.hpp"
#include "mixmae/pipeline.hpp"

struct mixmae_config {
  mixmae::RunConfig cfg;
};

namespace {

using namespace mixmae;

thread_local std::string g_last_error;
mixmae_log_fn g_log = nullptr;
void* g_log_user = nullptr;

LogFn logger() {
  if (!g_log) return {};
  mixmae_log_fn fn = g_log;
  void* user = g_log_user;
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

mixmae_status to_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return MIXMAE_ERR_PARAMETER;
    case ErrorKind::kDimension: return MIXMAE_ERR_DIMENSION;
    case ErrorKind::kIndex: return MIXMAE_ERR_INDEX;
    case ErrorKind::kConfig: return MIXMAE_ERR_CONFIG;
    case ErrorKind::kContract: return MIXMAE_ERR_CONTRACT;
    case ErrorKind::kNumeric: return MIXMAE_ERR_NUMERIC;
    case ErrorKind::kIo: return MIXMAE_ERR_IO;
    case ErrorKind::kFormat: return MIXMAE_ERR_FORMAT;
    case ErrorKind::kIntegrity: return MIXMAE_ERR_INTEGRITY;
    case ErrorKind::kIngestion: return MIXMAE_ERR_INGESTION;
    case ErrorKind::kParse: return MIXMAE_ERR_PARSE;
    case ErrorKind::kInternal: return MIXMAE_ERR_INTERNAL;
  }
  return MIXMAE_ERR_INTERNAL;
}

template <class F>
mixmae_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return MIXMAE_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MIXMAE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MIXMAE_ERR_INTERNAL;
  }
}

mixmae_status null_argument(const char* what) {
  g_last_error = std::string("null argument: ") + what;
  return MIXMAE_ERR_NULL_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// Model for evaluation: a fresh one when `checkpoint` is null, else the
// checkpoint's parameters under `cfg`, or under its own configuration when
// `cfg` is null.
struct LoadedModel {
  RunConfig cfg;
  std::unique_ptr<Model> model;
};

LoadedModel load_model(const mixmae_config* config, const char* checkpoint, bool force) {
  LoadedModel lm;
  if (!checkpoint || !*checkpoint) {
    if (!config) fail(ErrorKind::kParameter, "either a configuration or a checkpoint is required");
    lm.cfg = config->cfg;
    lm.model = std::make_unique<Model>(lm.cfg, lm.cfg.seed);
    return lm;
  }
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (config) {
    lm.cfg = config->cfg;
    check_config_hash(ckpt, lm.cfg.model_hash(), force, checkpoint);
  } else {
    lm.cfg = parse_config(ckpt.config_text, std::string(checkpoint) + " (config)");
  }
  lm.model = std::make_unique<Model>(lm.cfg, ckpt.seed);
  load_parameters(ckpt, lm.model->store);
  return lm;
}

void fill_eval(const EvalResult& r, mixmae_eval* out) {
  out->train_accuracy = r.train_accuracy;
  out->test_accuracy = r.test_accuracy;
  out->train_count = r.train_count;
  out->test_count = r.test_count;
}

}  // namespace

extern "C" {

const char* mixmae_version(void) { return "1.0.0"; }

const char* mixmae_status_name(mixmae_status status) {
  switch (status) {
    case MIXMAE_OK: return "ok";
    case MIXMAE_ERR_PARAMETER: return "parameter error";
    case MIXMAE_ERR_DIMENSION: return "dimension error";
    case MIXMAE_ERR_INDEX: return "index error";
    case MIXMAE_ERR_CONFIG: return "configuration error";
    case MIXMAE_ERR_CONTRACT: return "contract error";
    case MIXMAE_ERR_NUMERIC: return "numeric error";
    case MIXMAE_ERR_IO: return "i/o error";
    case MIXMAE_ERR_FORMAT: return "format error";
    case MIXMAE_ERR_INTEGRITY: return "integrity error";
    case MIXMAE_ERR_INGESTION: return "ingestion error";
    case MIXMAE_ERR_PARSE: return "parse error";
    case MIXMAE_ERR_INTERNAL: return "internal error";
    case MIXMAE_ERR_NULL_ARGUMENT: return "null argument";
  }
  return "unknown status";
}

const char* mixmae_last_error(void) { return g_last_error.c_str(); }

void mixmae_free_string(char* s) { std::free(s); }

void mixmae_set_log(mixmae_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

mixmae_status mixmae_config_create(const char* preset, mixmae_config** out) {
  if (!out) return null_argument("out");
  return guarded([&] {
    auto c = std::make_unique<mixmae_config>();
    c->cfg = RunConfig::for_preset(preset && *preset ? preset : "toy");
    *out = c.release();
  });
}

mixmae_status mixmae_config_parse(const char* text, mixmae_config** out) {
  if (!text) return null_argument("text");
  if (!out) return null_argument("out");
  return guarded([&] {
    auto c = std::make_unique<mixmae_config>();
    c->cfg = parse_config(text);
    *out = c.release();
  });
}

mixmae_status mixmae_config_load(const char* path, mixmae_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] {
    auto c = std::make_unique<mixmae_config>();
    c->cfg = load_config(path);
    *out = c.release();
  });
}

mixmae_status mixmae_config_from_checkpoint(const char* path, mixmae_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] {
    const Checkpoint ckpt = load_checkpoint(path);
    auto c = std::make_unique<mixmae_config>();
    c->cfg = parse_config(ckpt.config_text, std::string(path) + " (config)");
    *out = c.release();
  });
}

void mixmae_config_destroy(mixmae_config* config) { delete config; }

mixmae_status mixmae_config_set(mixmae_config* config, const char* key, const char* value) {
  if (!config) return null_argument("config");
  if (!key) return null_argument("key");
  if (!value) return null_argument("value");
  return guarded([&] {
    RunConfig next = config->cfg;
    next.set(key, value);
    config->cfg = std::move(next);
  });
}

mixmae_status mixmae_config_get(const mixmae_config* config, const char* key, char** value) {
  if (!config) return null_argument("config");
  if (!key) return null_argument("key");
  if (!value) return null_argument("value");
  return guarded([&] { *value = dup_string(config->cfg.get(key)); });
}

mixmae_status mixmae_config_serialize(const mixmae_config* config, char** text) {
  if (!config) return null_argument("config");
  if (!text) return null_argument("text");
  return guarded([&] { *text = dup_string(config->cfg.serialize()); });
}

mixmae_status mixmae_count_params(const mixmae_config* config, mixmae_param_count* out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  return guarded([&] {
    const ParamBreakdown p = count_params(config->cfg.encoder);
    *out = {p.patch_embed, p.pos_embed, p.blocks,  p.merging,
            p.final_norm,  p.projection, p.total(), count_decoder_params(config->cfg.decoder)};
  });
}

mixmae_status mixmae_count_flops(const mixmae_config* config, int img_px, mixmae_flop_count* out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  return guarded([&] {
    const FlopBreakdown f = count_flops(config->cfg.encoder, img_px > 0 ? img_px : 0);
    *out = {f.patch_embed, f.projections, f.attention, f.mlp,
            f.merging,     f.head,        f.macs(),    count_decoder_macs(config->cfg.decoder)};
  });
}

mixmae_status mixmae_efficiency_report(const mixmae_config* config, int groups,
                                       mixmae_efficiency* out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  return guarded([&] {
    const int k = groups > 0 ? groups : config->cfg.mask.groups;
    const EfficiencyReport r = efficiency(config->cfg.encoder, config->cfg.decoder, k);
    *out = {r.groups, r.mixed_encoder_macs, r.masked_encoder_macs, r.encoder_ratio,
            r.decoder_macs, r.with_decoder_ratio};
  });
}

mixmae_status mixmae_pretrain(const mixmae_config* config, const mixmae_pretrain_options* options,
                              mixmae_pretrain_result* out) {
  if (!config) return null_argument("config");
  return guarded([&] {
    PretrainOptions po;
    if (options) {
      po.out_dir = options->out_dir ? options->out_dir : "";
      po.resume = options->resume ? options->resume : "";
      po.force = options->force != 0;
      po.stop_after_step = options->stop_after_step;
    }
    po.log = logger();
    const RunConfig& cfg = config->cfg;
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    Model model(cfg, cfg.seed);
    const PretrainResult r = pretrain(model, data, po);
    if (out) {
      out->steps = r.steps;
      out->final_loss = r.final_loss;
      std::snprintf(out->checkpoint, sizeof out->checkpoint, "%s", r.checkpoint.c_str());
    }
  });
}

mixmae_status mixmae_probe(const mixmae_config* config, const char* checkpoint, int force,
                           mixmae_eval* out) {
  if (!out) return null_argument("out");
  return guarded([&] {
    LoadedModel lm = load_model(config, checkpoint, force != 0);
    const Dataset data = load_dataset(lm.cfg);
    fill_eval(linear_probe(*lm.model, data, logger()), out);
  });
}

mixmae_status mixmae_finetune(const mixmae_config* config, const char* checkpoint, int force,
                              mixmae_eval* out) {
  if (!out) return null_argument("out");
  return guarded([&] {
    LoadedModel lm = load_model(config, checkpoint, force != 0);
    const Dataset data = load_dataset(lm.cfg);
    fill_eval(finetune(*lm.model, data, lm.cfg.seed, logger()), out);
  });
}

mixmae_status mixmae_ablate(const mixmae_config* config, const char* grid, const char* out_dir,
                            char** csv, int* soft_failures) {
  if (!config) return null_argument("config");
  return guarded([&] {
    const auto cells = ablation_grid(grid && *grid ? grid : "default");
    const Dataset data = load_dataset(config->cfg);
    AblationOptions ao;
    ao.log = logger();
    if (out_dir && *out_dir) {
      std::filesystem::create_directories(out_dir);
      ao.csv_path = (std::filesystem::path(out_dir) / "ablation.csv").string();
      ao.cache_dir = (std::filesystem::path(out_dir) / "cells").string();
    }
    const auto rows = ablate(config->cfg, data, cells, ao);
    int soft = 0;
    for (const auto& c : check_orderings(rows)) {
      const std::string line = std::string(c.passed ? "ordering ok: " : "SOFT FAIL ordering: ") +
                               c.higher + " >= " + c.lower + fmt(" (margin %+.4f", c.margin) +
                               ", seed " + std::to_string(config->cfg.seed) + ")";
      if (ao.log) ao.log(line);
      if (!c.passed) ++soft;
    }
    if (soft_failures) *soft_failures = soft;
    if (csv) *csv = dup_string(ablation_csv(rows));
  });
}

mixmae_status mixmae_grad_check(const char* suite, uint64_t seed, char** report, int* failures) {
  return guarded([&] {
    const std::string which = suite && *suite ? suite : "all";
    if (which != "all" && which != "primitives" && which != "composition")
      fail(ErrorKind::kParameter,
           "unknown grad-check suite '" + which + "' (expected primitives, composition or all)");
    std::vector<GradCase> cases;
    if (which != "composition") cases = primitive_grad_suite(seed);
    if (which != "primitives") {
      auto more = composition_grad_suite(seed);
      cases.insert(cases.end(), more.begin(), more.end());
    }
    std::ostringstream os;
    int failed = 0;
    for (const auto& c : cases) {
      char line[320];
      std::snprintf(line, sizeof line, "%-4s %-40s max_rel_error %.3e  (tol %.0e, %lld elements%s%s)\n",
                    c.passed() ? "PASS" : "FAIL", c.name.c_str(), c.result.max_rel_error, c.tolerance,
                    static_cast<long long>(c.result.checked),
                    c.result.worst_param.empty() ? "" : ", worst ",
                    c.result.worst_param.c_str());
      os << line;
      if (!c.passed()) ++failed;
    }
    if (failures) *failures = failed;
    if (report) *report = dup_string(os.str());
  });
}

mixmae_status mixmae_report(const char* metrics_path, char** summary) {
  if (!metrics_path) return null_argument("metrics_path");
  if (!summary) return null_argument("summary");
  return guarded([&] { *summary = dup_string(format_summary(summarize(read_metrics(metrics_path)))); });
}

mixmae_status mixmae_write_panel(const mixmae_config* config, const char* checkpoint, int count,
                                 int force, const char* ppm_path) {
  if (!ppm_path) return null_argument("ppm_path");
  return guarded([&] {
    if (count < 1) fail(ErrorKind::kParameter, "panel needs at least one row");
    LoadedModel lm = load_model(config, checkpoint, force != 0);
    const Dataset data = load_dataset(lm.cfg);
    write_ppm(ppm_path, reconstruction_panel(*lm.model, data, count, lm.cfg.seed));
  });
}

mixmae_status mixmae_dump_schedule(const mixmae_config* config, int64_t max_steps, char** csv) {
  if (!config) return null_argument("config");
  if (!csv) return null_argument("csv");
  return guarded([&] {
    const RunConfig& cfg = config->cfg;
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    BatchPlanner planner(cfg, data, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.steps_per_epoch = planner.steps_per_epoch();
    std::int64_t total = tc.total_steps();
    if (max_steps > 0) total = std::min<std::int64_t>(total, max_steps);
    std::ostringstream os;
    os << "step,epoch,lr,indices\n";
    char buf[96];
    for (std::int64_t s = 0; s < total; ++s) {
      const std::int64_t e = s / tc.steps_per_epoch;
      std::snprintf(buf, sizeof buf, "%lld,%lld,%.9g,", static_cast<long long>(s + 1),
                    static_cast<long long>(e), tc.lr_at(s));
      os << buf;
      const auto idx = planner.indices(e, s % tc.steps_per_epoch);
      for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? " " : "") << idx[i];
      os << "\n";
    }
    *csv = dup_string(os.str());
  });
}

mixmae_status mixmae_checkpoint_info(const char* path, char** text) {
  if (!path) return null_argument("path");
  if (!text) return null_argument("text");
  return guarded([&] {
    const Checkpoint c = load_checkpoint(path);
    std::int64_t values = 0;
    for (const auto& t : c.tensors) values += static_cast<std::int64_t>(t.data.size());
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "checkpoint %s\n  config hash %016llx\n  seed %llu\n  step %lld  epoch %lld\n"
                  "  tensors %zu (%lld values)\n  optimizer step %lld, %zu moment pairs\n",
                  path, static_cast<unsigned long long>(c.config_hash),
                  static_cast<unsigned long long>(c.seed), static_cast<long long>(c.step),
                  static_cast<long long>(c.epoch), c.tensors.size(), static_cast<long long>(values),
                  static_cast<long long>(c.optimizer_step), c.moments.size());
    *text = dup_string(buf);
  });
}

}  // extern "C"
