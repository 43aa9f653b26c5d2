// Command-line front end; talks to the library only through mixmae.h.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixmae/mixmae.h"

namespace {

struct CliError {
  int code;
};

void check(mixmae_status s) {
  if (s == MIXMAE_OK) return;
  std::fprintf(stderr, "error: %s: %s\n", mixmae_status_name(s), mixmae_last_error());
  throw CliError{static_cast<int>(s)};
}

struct ConfigDeleter {
  void operator()(mixmae_config* c) const { mixmae_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<mixmae_config, ConfigDeleter>;

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { mixmae_free_string(s); }
  const char* c_str() const { return s ? s : ""; }
};

// Flags shared by every subcommand.
struct Common {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  std::string resume;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool training) {
  cmd->add_option("--config", c.config, "Configuration file (key = value lines)");
  cmd->add_option("--preset", c.preset, "Model preset when no --config is given (toy, base, base-w7, large, huge)");
  cmd->add_option("--set", c.sets, "Override one configuration entry: key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "Root seed of every random stream");
  if (training) {
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--resume", c.resume, "Checkpoint to continue from");
  }
  cmd->add_flag("--force", c.force, "Accept a checkpoint whose configuration hash differs");
}

ConfigPtr make_config(const Common& c) {
  mixmae_config* raw = nullptr;
  if (!c.config.empty()) {
    check(mixmae_config_load(c.config.c_str(), &raw));
  } else {
    check(mixmae_config_create(c.preset.empty() ? "toy" : c.preset.c_str(), &raw));
  }
  ConfigPtr cfg(raw);
  if (!c.config.empty() && !c.preset.empty()) check(mixmae_config_set(raw, "model.preset", c.preset.c_str()));
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      throw CliError{2};
    }
    check(mixmae_config_set(raw, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!c.seed.empty()) check(mixmae_config_set(raw, "train.seed", c.seed.c_str()));
  return cfg;
}

// Configuration for commands that read a checkpoint: explicit flags win,
// otherwise the checkpoint's own snapshot is used.
ConfigPtr eval_config(const Common& c, const std::string& checkpoint) {
  const bool explicit_cfg = !c.config.empty() || !c.preset.empty() || !c.sets.empty();
  if (explicit_cfg || checkpoint.empty()) return make_config(c);
  mixmae_config* raw = nullptr;
  check(mixmae_config_from_checkpoint(checkpoint.c_str(), &raw));
  ConfigPtr cfg(raw);
  if (!c.seed.empty()) check(mixmae_config_set(raw, "train.seed", c.seed.c_str()));
  return cfg;
}

void log_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

void print_eval(const char* what, const mixmae_eval& e) {
  std::printf("%s top-1: train %.4f (%lld images)  test %.4f (%lld images)\n", what, e.train_accuracy,
              static_cast<long long>(e.train_count), e.test_accuracy,
              static_cast<long long>(e.test_count));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixmae: mixed-and-masked autoencoder pretraining at toy scale"};
  app.require_subcommand(1);
  mixmae_set_log(log_line, nullptr);

  Common c;
  std::string checkpoint, grid = "default", suite = "all", metrics, panel;
  std::int64_t stop_after = -1, steps = 0;
  int img_px = 0, rows = 4;
  std::uint64_t gc_seed = 1;
  bool quiet = false;

  auto* pretrain = app.add_subcommand("pretrain", "Mixed-input masked reconstruction pretraining");
  add_common(pretrain, c, true);
  pretrain->add_option("--stop-after", stop_after, "Stop once this many steps are done");

  auto* probe = app.add_subcommand("probe", "Linear probe on frozen features");
  add_common(probe, c, false);
  probe->add_option("checkpoint", checkpoint, "Pretrained checkpoint (omit for an untrained encoder)");

  auto* finetune = app.add_subcommand("finetune", "End-to-end finetuning with layer-wise lr decay");
  add_common(finetune, c, false);
  finetune->add_option("checkpoint", checkpoint, "Pretrained checkpoint (omit for an untrained encoder)");

  auto* ablate = app.add_subcommand("ablate", "Pretrain and probe every cell of an ablation grid");
  add_common(ablate, c, true);
  ablate->add_option("--grid", grid, "default, full, dual, reduction, fill or k")->capture_default_str();

  auto* params = app.add_subcommand("count-params", "Analytic encoder parameter count");
  add_common(params, c, false);

  auto* flops = app.add_subcommand("count-flops", "Analytic forward cost and mixing efficiency");
  add_common(flops, c, false);
  flops->add_option("--img-px", img_px, "Input edge (default: configured)");

  auto* gradcheck = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  gradcheck->add_option("--suite", suite, "primitives, composition or all")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "Seed of the random inputs")->capture_default_str();

  auto* report = app.add_subcommand("report", "Summarise a metrics CSV");
  add_common(report, c, false);
  report->add_option("metrics", metrics, "metrics.csv of a pretraining run")->required();
  report->add_option("--panel", panel, "Write an (original | mixed | reconstruction) PPM here");
  report->add_option("--checkpoint", checkpoint, "Checkpoint used for the panel");
  report->add_option("--rows", rows, "Panel rows")->capture_default_str();

  auto* schedule = app.add_subcommand("dump-schedule", "Print the deterministic step schedule");
  add_common(schedule, c, false);
  schedule->add_option("--steps", steps, "Number of steps (default: all)");

  auto* verify = app.add_subcommand("verify", "Check a checkpoint's integrity and describe it");
  verify->add_option("checkpoint", checkpoint, "Checkpoint file")->required();

  for (auto* cmd : {pretrain, probe, finetune, ablate})
    cmd->add_flag("--quiet", quiet, "Suppress progress lines");

  CLI11_PARSE(app, argc, argv);
  if (quiet) mixmae_set_log(nullptr, nullptr);

  try {
    if (pretrain->parsed()) {
      ConfigPtr cfg = make_config(c);
      const std::string out = c.out.empty() ? "runs/pretrain" : c.out;
      mixmae_pretrain_options opt{out.c_str(), c.resume.empty() ? nullptr : c.resume.c_str(),
                                  c.force ? 1 : 0, stop_after};
      mixmae_pretrain_result res{};
      check(mixmae_pretrain(cfg.get(), &opt, &res));
      std::printf("pretrained %lld steps, final epoch loss %.6f\ncheckpoint %s\nmetrics %s/metrics.csv\n",
                  static_cast<long long>(res.steps), res.final_loss, res.checkpoint, out.c_str());
    } else if (probe->parsed() || finetune->parsed()) {
      ConfigPtr cfg = eval_config(c, checkpoint);
      mixmae_eval e{};
      const char* ck = checkpoint.empty() ? nullptr : checkpoint.c_str();
      if (probe->parsed()) {
        check(mixmae_probe(cfg.get(), ck, c.force ? 1 : 0, &e));
        print_eval("linear probe", e);
      } else {
        check(mixmae_finetune(cfg.get(), ck, c.force ? 1 : 0, &e));
        print_eval("finetune", e);
      }
    } else if (ablate->parsed()) {
      ConfigPtr cfg = make_config(c);
      const std::string out = c.out.empty() ? "runs/ablation" : c.out;
      OwnedString csv;
      int soft = 0;
      check(mixmae_ablate(cfg.get(), grid.c_str(), out.c_str(), &csv.s, &soft));
      std::printf("%s", csv.c_str());
      std::printf("# %d soft ordering failure(s); table written to %s/ablation.csv\n", soft, out.c_str());
    } else if (params->parsed()) {
      ConfigPtr cfg = make_config(c);
      mixmae_param_count p{};
      check(mixmae_count_params(cfg.get(), &p));
      OwnedString preset;
      check(mixmae_config_get(cfg.get(), "model.preset", &preset.s));
      std::printf("preset %s\n", preset.c_str());
      std::printf("  patch embed   %12lld\n  pos embed     %12lld\n  blocks        %12lld\n"
                  "  merging       %12lld\n  final norm    %12lld\n  projection    %12lld\n",
                  static_cast<long long>(p.patch_embed), static_cast<long long>(p.pos_embed),
                  static_cast<long long>(p.blocks), static_cast<long long>(p.merging),
                  static_cast<long long>(p.final_norm), static_cast<long long>(p.projection));
      std::printf("encoder params %lld (%.2f M)\ndecoder params %lld (%.2f M)\n",
                  static_cast<long long>(p.encoder_total), p.encoder_total / 1e6,
                  static_cast<long long>(p.decoder_total), p.decoder_total / 1e6);
    } else if (flops->parsed()) {
      ConfigPtr cfg = make_config(c);
      mixmae_flop_count f{};
      check(mixmae_count_flops(cfg.get(), img_px, &f));
      mixmae_efficiency e{};
      check(mixmae_efficiency_report(cfg.get(), 0, &e));
      std::printf("multiply-accumulates per forward (reported as FLOPs)\n");
      std::printf("  patch embed   %14lld\n  projections   %14lld\n  attention     %14lld\n"
                  "  mlp           %14lld\n  merging       %14lld\n  head          %14lld\n",
                  static_cast<long long>(f.patch_embed), static_cast<long long>(f.projections),
                  static_cast<long long>(f.attention), static_cast<long long>(f.mlp),
                  static_cast<long long>(f.merging), static_cast<long long>(f.head));
      std::printf("encoder FLOPs %.3f G\ndecoder FLOPs %.3f G\n", f.encoder_macs / 1e9, f.decoder_macs / 1e9);
      std::printf("mixing K=%d: encoder cost per reconstructed image %.4fx of [MASK]-padded forwards "
                  "(%.4fx including the decoder)\n",
                  e.groups, e.encoder_ratio, e.with_decoder_ratio);
    } else if (gradcheck->parsed()) {
      OwnedString text;
      int failures = 0;
      check(mixmae_grad_check(suite.c_str(), gc_seed, &text.s, &failures));
      std::printf("%s%d failure(s)\n", text.c_str(), failures);
      return failures == 0 ? 0 : 1;
    } else if (report->parsed()) {
      OwnedString text;
      check(mixmae_report(metrics.c_str(), &text.s));
      std::printf("%s", text.c_str());
      if (!panel.empty()) {
        ConfigPtr cfg = eval_config(c, checkpoint);
        check(mixmae_write_panel(cfg.get(), checkpoint.empty() ? nullptr : checkpoint.c_str(), rows,
                                 c.force ? 1 : 0, panel.c_str()));
        std::printf("panel written to %s\n", panel.c_str());
      }
    } else if (schedule->parsed()) {
      ConfigPtr cfg = make_config(c);
      OwnedString csv;
      check(mixmae_dump_schedule(cfg.get(), steps, &csv.s));
      std::printf("%s", csv.c_str());
    } else if (verify->parsed()) {
      OwnedString text;
      check(mixmae_checkpoint_info(checkpoint.c_str(), &text.s));
      std::printf("%s", text.c_str());
    }
  } catch (const CliError& e) {
    return e.code;
  }
  return 0;
}
