#pragma once

// AdamW with decoupled weight decay, warmup + cosine schedule and
// layer-wise learning-rate multipliers.

#include <cstdint>
#include <string>
#include <vector>

#include "mixmae/nn.hpp"

namespace mixmae {

struct TrainConfig {
  double base_lr = 1.5e-4;  // per 256 images
  int batch_size = 1024;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double warmup_epochs = 40;
  int epochs = 600;
  std::int64_t steps_per_epoch = 1;
  double layer_decay = 1.0;
  double clip_grad = 0.0;  // global-norm clip; 0 disables

  double peak_lr() const { return base_lr * batch_size / 256.0; }
  std::int64_t warmup_steps() const;
  std::int64_t total_steps() const { return static_cast<std::int64_t>(epochs) * steps_per_epoch; }
  double lr_at(std::int64_t step) const;
  void validate() const;

  static TrainConfig pretrain();
  static TrainConfig finetune();
};

// Geometric per-depth multipliers decay^(max_depth - d) for d = 0..max_depth.
std::vector<double> layer_multipliers(int max_depth, double decay);

struct ParamGroup {
  std::vector<std::size_t> params;  // indices into the parameter list
  double lr_mult = 1.0;
  bool decay = true;
};

// One group per (depth, decay flag). Parameters of rank <= 1 (norm scales,
// biases, the mask token) are exempt from weight decay.
template <class T>
std::vector<ParamGroup> layerwise_groups(const std::vector<NamedParam<T>>& params, int max_depth,
                                         double decay);

template <class T>
class AdamW {
 public:
  AdamW(std::vector<NamedParam<T>> params, std::vector<ParamGroup> groups, const TrainConfig& cfg);

  // Applies one update at learning rate `lr` using the current gradients.
  // Parameters without a gradient are skipped. A non-finite gradient aborts
  // the step before any parameter changes, naming the parameter.
  void step(double lr);

  std::int64_t steps() const { return step_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  // Restores state saved from an optimizer over the same parameter list.
  void restore(std::int64_t step, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);
  // Global gradient norm observed before clipping at the last step.
  double last_grad_norm() const { return last_norm_; }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<ParamGroup> groups_;
  std::vector<double> lr_mult_;
  std::vector<bool> decay_;
  TrainConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
  double last_norm_ = 0.0;
};

}  // namespace mixmae
