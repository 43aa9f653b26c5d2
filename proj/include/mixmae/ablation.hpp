#pragma once

// One-factor-at-a-time ablation grid around a base configuration: every
// cell pretrains from the same seed for the same number of epochs and is
// then scored by a linear probe.

#include <string>
#include <utility>
#include <vector>

#include "mixmae/pipeline.hpp"

namespace mixmae {

struct AblationCell {
  std::string id;
  std::vector<std::pair<std::string, std::string>> overrides;  // config key, value
};

// Named grids: "default" (dual, reduction and filling factors), "dual",
// "reduction", "fill", "k" (mixing count and the [MASK]-padded variant)
// and "full" (everything).
std::vector<AblationCell> ablation_grid(const std::string& name);

struct AblationRow {
  std::string id;
  double masking_ratio = 0;  // per-image fraction of hidden units
  double final_loss = 0;     // mean loss over the last epoch
  double probe_accuracy = 0;
  std::uint64_t seed = 0;
};

struct OrderingCheck {
  std::string higher;
  std::string lower;
  double margin = 0;  // accuracy(higher) - accuracy(lower)
  bool passed = false;
};

// Expected directions: dual >= no-dual, masked-attention >= mix-embedding
// >= no-unmixing, mix >= zero >= shuffle. Pairs with a missing cell are
// skipped.
std::vector<OrderingCheck> check_orderings(const std::vector<AblationRow>& rows,
                                           double min_margin = 0.01);

struct AblationOptions {
  std::string csv_path;   // comparison table; empty: not written
  std::string cache_dir;  // finished cells are reused from here; empty: no cache
  LogFn log;
};

// The base configuration's own mask.k, reduction, dual and fill settings
// are replaced by the cell overrides; everything else is shared.
std::vector<AblationRow> ablate(const RunConfig& base, const Dataset& data,
                                const std::vector<AblationCell>& cells,
                                const AblationOptions& options);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace mixmae
