#pragma once

// Model assembly, deterministic batch preparation and the pretrain, probe
// and finetune loops.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mixmae/checkpoint.hpp"
#include "mixmae/config.hpp"
#include "mixmae/data.hpp"
#include "mixmae/decoder.hpp"
#include "mixmae/encoder.hpp"
#include "mixmae/metrics.hpp"
#include "mixmae/optim.hpp"

namespace mixmae {

using LogFn = std::function<void(const std::string&)>;

// Pixel values in [0, 1] are fed to the network as (x - 0.5) * 2.
Tensor to_network_input(std::span<const Image> images);

struct Model {
  RunConfig config;
  ParamStore<float> store;
  std::unique_ptr<Encoder<float>> encoder;
  std::unique_ptr<Decoder<float>> decoder;
  Tensor fill_unit;  // [C, unit, unit] learnable filling content, when used

  // Parameters are initialised from the stream derive_seed(seed, kInit).
  Model(const RunConfig& config, std::uint64_t seed);
  int max_depth() const { return encoder->max_depth(); }
  bool uses_fill_unit() const { return fill_unit.defined(); }
};

// Copies parameters by name; shapes must match. Parameters missing from the
// checkpoint are an error unless `partial` (e.g. a decoder-free load).
void load_parameters(const Checkpoint& ckpt, ParamStore<float>& store, bool partial = false);
Checkpoint capture(const RunConfig& config, const ParamStore<float>& store,
                   const AdamW<float>* optimizer, std::uint64_t seed, std::int64_t step,
                   std::int64_t epoch);

// One optimisation step's worth of inputs.
struct Batch {
  Tensor pixels;                     // [N, C, H, W] network input
  std::vector<GroupMask> masks;      // one per input
  std::vector<ReconTarget> targets;  // sources per input, input-major
  int sources_per_input = 1;
  std::vector<int> groups;           // reconstructed groups
  std::vector<UnitMask> fill;        // units filled with the learnable unit
  std::vector<Image> originals;      // input-major sources, when kept
  std::vector<Image> mixed;          // corrupted inputs in pixel space, when kept
};

class BatchPlanner {
 public:
  BatchPlanner(const RunConfig& config, const Dataset& data, std::uint64_t seed);
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
  // Deterministic in (seed, epoch, step) alone.
  Batch make(std::int64_t epoch, std::int64_t step_in_epoch, bool keep_images = false) const;
  // Dataset indices drawn by a step, in consumption order.
  std::vector<std::int64_t> indices(std::int64_t epoch, std::int64_t step_in_epoch) const;

 private:
  const RunConfig& config_;
  const Dataset& data_;
  std::uint64_t seed_;
  std::int64_t steps_per_epoch_;
};

struct StepResult {
  double loss = 0;
  std::vector<double> group_loss;  // one per mask group slot, 0 when not reconstructed
};

// Forward, loss and backward for one batch; gradients are left in the store.
StepResult pretrain_step(Model& model, const Batch& batch);

struct PretrainOptions {
  std::string out_dir;              // empty: no files written
  std::string resume;               // checkpoint to continue from
  bool force = false;
  std::int64_t stop_after_step = -1;  // stop once this many steps are done
  LogFn log;
};

struct PretrainResult {
  std::vector<MetricsRow> rows;  // rows produced by this invocation
  std::string checkpoint;        // last checkpoint written
  std::int64_t steps = 0;        // total steps completed
  double final_loss = 0;         // mean loss over the last epoch run
};

PretrainResult pretrain(Model& model, const Dataset& data, const PretrainOptions& options);

Dataset load_dataset(const RunConfig& config);

struct EvalResult {
  double train_accuracy = 0;
  double test_accuracy = 0;
  std::int64_t train_count = 0;
  std::int64_t test_count = 0;
};

// 80/20 split by index: the first 80% train, the rest test.
std::int64_t train_split(std::int64_t count);

// Mean-pooled final-stage features of the un-augmented, un-mixed images.
std::vector<std::vector<float>> extract_features(const Model& model, const Dataset& data);

// Linear classifier on frozen, standardised features.
EvalResult linear_probe(const Model& model, const Dataset& data, const LogFn& log = {});
// Encoder plus linear head trained end to end with layer-wise lr decay and
// drop path.
EvalResult finetune(Model& model, const Dataset& data, std::uint64_t seed, const LogFn& log = {});

// Rows of (original, mixed input, reconstruction) for `count` mixed inputs;
// each row is 3 * edge wide. Reconstructions show group 0.
Image reconstruction_panel(Model& model, const Dataset& data, int count, std::uint64_t seed);

}  // namespace mixmae
