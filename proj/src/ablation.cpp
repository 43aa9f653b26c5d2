#include "mixmae/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixmae/error.hpp"

namespace mixmae {

namespace fs = std::filesystem;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

const Overrides kBase = {{"mask.k", "2"},
                         {"model.reduction", "masked-attention"},
                         {"mask.dual", "true"},
                         {"mask.fill", "mix"},
                         {"mask.extra_mask_fraction", "0"}};

Overrides with(std::initializer_list<std::pair<std::string, std::string>> changes) {
  Overrides o = kBase;
  for (const auto& [k, v] : changes) {
    bool replaced = false;
    for (auto& [bk, bv] : o)
      if (bk == k) {
        bv = v;
        replaced = true;
      }
    if (!replaced) o.emplace_back(k, v);
  }
  return o;
}

std::vector<AblationCell> dual_cells() {
  return {{"dual", with({})}, {"no-dual", with({{"mask.dual", "false"}})}};
}

std::vector<AblationCell> reduction_cells() {
  return {{"masked-attention", with({})},
          {"mix-embedding", with({{"model.reduction", "mix-embedding"}})},
          {"no-unmixing", with({{"model.reduction", "none"}})}};
}

std::vector<AblationCell> fill_cells(bool all) {
  std::vector<AblationCell> c = {
      {"fill-mix", with({})},
      {"fill-zero", with({{"mask.fill", "zero"}, {"model.reduction", "none"}})},
      {"fill-shuffle", with({{"mask.fill", "shuffle"}, {"model.reduction", "none"}})}};
  if (all) {
    c.push_back({"fill-learnable", with({{"mask.fill", "learnable"}, {"model.reduction", "none"}})});
    c.push_back({"fill-zoomin", with({{"mask.fill", "zoomin"}, {"model.reduction", "none"}})});
  }
  return c;
}

std::vector<AblationCell> k_cells() {
  return {{"k2", with({})},
          {"k2-mask", with({{"mask.extra_mask_fraction", "0.25"}})},
          {"k3", with({{"mask.k", "3"}})},
          {"k4", with({{"mask.k", "4"}})},
          {"k5", with({{"mask.k", "5"}})}};
}

// Cells with identical overrides are trained once.
std::string overrides_key(const Overrides& o) {
  std::string s;
  for (const auto& [k, v] : o) s += k + "=" + v + ";";
  return s;
}

}  // namespace

std::vector<AblationCell> ablation_grid(const std::string& name) {
  std::vector<AblationCell> cells;
  auto append = [&](const std::vector<AblationCell>& more) {
    cells.insert(cells.end(), more.begin(), more.end());
  };
  if (name == "dual") {
    append(dual_cells());
  } else if (name == "reduction") {
    append(reduction_cells());
  } else if (name == "fill") {
    append(fill_cells(true));
  } else if (name == "k") {
    append(k_cells());
  } else if (name == "default") {
    append(dual_cells());
    append(reduction_cells());
    append(fill_cells(false));
  } else if (name == "full") {
    append(dual_cells());
    append(reduction_cells());
    append(fill_cells(true));
    append(k_cells());
  } else {
    fail(ErrorKind::kParameter, "unknown ablation grid '" + name +
                                    "' (expected default, full, dual, reduction, fill or k)");
  }
  return cells;
}

std::vector<OrderingCheck> check_orderings(const std::vector<AblationRow>& rows, double min_margin) {
  auto find = [&](const std::string& id) -> const AblationRow* {
    for (const auto& r : rows)
      if (r.id == id) return &r;
    return nullptr;
  };
  const std::pair<const char*, const char*> pairs[] = {
      {"dual", "no-dual"},
      {"masked-attention", "mix-embedding"},
      {"mix-embedding", "no-unmixing"},
      {"fill-mix", "fill-zero"},
      {"fill-zero", "fill-shuffle"}};
  std::vector<OrderingCheck> out;
  for (const auto& [hi, lo] : pairs) {
    const AblationRow* a = find(hi);
    const AblationRow* b = find(lo);
    if (!a || !b) continue;
    OrderingCheck c;
    c.higher = hi;
    c.lower = lo;
    c.margin = a->probe_accuracy - b->probe_accuracy;
    c.passed = c.margin >= min_margin;
    out.push_back(c);
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "cell,masking_ratio,final_loss,probe_acc,seed\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.6f,%.4f,%llu\n", r.id.c_str(), r.masking_ratio,
                  r.final_loss, r.probe_accuracy, static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

std::vector<AblationRow> ablate(const RunConfig& base, const Dataset& data,
                                const std::vector<AblationCell>& cells,
                                const AblationOptions& options) {
  std::vector<AblationRow> rows;
  std::vector<std::pair<std::string, AblationRow>> done;
  if (!options.cache_dir.empty()) fs::create_directories(options.cache_dir);
  for (const auto& cell : cells) {
    RunConfig cfg = base;
    for (const auto& [k, v] : cell.overrides) cfg.set(k, v);
    cfg.validate();
    AblationRow row;
    row.id = cell.id;
    row.seed = cfg.seed;
    const double k = cfg.mask.groups;
    row.masking_ratio = (k - 1.0) / k + cfg.mask.extra_mask_fraction;

    const std::string key = overrides_key(cell.overrides);
    bool reused = false;
    for (const auto& [dk, dr] : done)
      if (dk == key) {
        row.final_loss = dr.final_loss;
        row.probe_accuracy = dr.probe_accuracy;
        reused = true;
      }
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(std::hash<std::string>{}(cfg.serialize())));
    const std::string cache = options.cache_dir.empty()
                                  ? std::string()
                                  : (fs::path(options.cache_dir) / (std::string(hash) + ".cell")).string();
    if (!reused && !cache.empty()) {
      std::ifstream in(cache);
      if (in >> row.final_loss >> row.probe_accuracy) {
        reused = true;
        if (options.log) options.log("cell " + cell.id + ": cached in " + cache);
      }
    }
    if (!reused) {
      if (options.log) options.log("cell " + cell.id + ": pretraining");
      Model model(cfg, cfg.seed);
      PretrainOptions po;
      po.log = options.log;
      const auto res = pretrain(model, data, po);
      row.final_loss = res.final_loss;
      row.probe_accuracy = linear_probe(model, data, options.log).test_accuracy;
      if (!cache.empty()) {
        std::ofstream out(cache);
        out.precision(17);
        out << row.final_loss << " " << row.probe_accuracy << "\n";
      }
    }
    done.emplace_back(key, row);
    char buf[160];
    std::snprintf(buf, sizeof buf, "cell %s: ratio %.3f  loss %.4f  probe %.4f", row.id.c_str(),
                  row.masking_ratio, row.final_loss, row.probe_accuracy);
    if (options.log) options.log(buf);
    rows.push_back(row);
  }
  if (!options.csv_path.empty()) {
    std::ofstream out(options.csv_path);
    if (!out) fail(ErrorKind::kIo, "cannot write " + options.csv_path);
    out << ablation_csv(rows);
  }
  return rows;
}

}  // namespace mixmae
