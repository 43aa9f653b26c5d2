#include "mixmae/optim.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "mixmae/error.hpp"

namespace mixmae {

std::int64_t TrainConfig::warmup_steps() const {
  return static_cast<std::int64_t>(std::llround(warmup_epochs * static_cast<double>(steps_per_epoch)));
}

double TrainConfig::lr_at(std::int64_t step) const {
  if (step < 0) fail(ErrorKind::kParameter, "lr_at: negative step");
  const double peak = peak_lr();
  const std::int64_t w = warmup_steps(), t = total_steps();
  if (step > t) step = t;
  if (step < w) return peak * static_cast<double>(step) / static_cast<double>(w);
  if (t <= w) return peak;
  const double progress = static_cast<double>(step - w) / static_cast<double>(t - w);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) fail(ErrorKind::kConfig, "train.base_lr must be positive");
  if (batch_size < 1) fail(ErrorKind::kConfig, "train.batch_size must be positive");
  if (weight_decay < 0.0) fail(ErrorKind::kConfig, "train.weight_decay must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    fail(ErrorKind::kConfig, "train.beta1 and train.beta2 must lie in [0, 1)");
  if (warmup_epochs < 0.0) fail(ErrorKind::kConfig, "train.warmup_epochs must be non-negative");
  if (epochs < 0) fail(ErrorKind::kConfig, "train.epochs must be non-negative");
  if (!(layer_decay > 0.0 && layer_decay <= 1.0))
    fail(ErrorKind::kConfig, "train.layer_decay must lie in (0, 1]");
  if (clip_grad < 0.0) fail(ErrorKind::kConfig, "train.clip_grad must be non-negative");
}

TrainConfig TrainConfig::pretrain() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune() {
  TrainConfig c;
  c.base_lr = 5e-4;
  c.batch_size = 1024;
  c.beta2 = 0.999;
  c.warmup_epochs = 5;
  c.epochs = 100;
  c.layer_decay = 0.7;
  return c;
}

std::vector<double> layer_multipliers(int max_depth, double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) fail(ErrorKind::kParameter, "layer decay must lie in (0, 1]");
  std::vector<double> out(static_cast<std::size_t>(max_depth) + 1);
  for (int d = 0; d <= max_depth; ++d) out[d] = std::pow(decay, max_depth - d);
  return out;
}

template <class T>
std::vector<ParamGroup> layerwise_groups(const std::vector<NamedParam<T>>& params, int max_depth,
                                         double decay) {
  const auto mult = layer_multipliers(max_depth, decay);
  std::map<std::pair<int, bool>, ParamGroup> by_key;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const int d = params[i].depth;
    if (d < 0 || d > max_depth)
      fail(ErrorKind::kInternal, "parameter " + params[i].name + " has depth " +
                                     std::to_string(d) + " outside [0, " +
                                     std::to_string(max_depth) + "]");
    const bool wd = params[i].tensor.rank() > 1;
    auto& g = by_key[{d, wd}];
    g.lr_mult = mult[d];
    g.decay = wd;
    g.params.push_back(i);
  }
  std::vector<ParamGroup> out;
  for (auto& [key, g] : by_key) out.push_back(std::move(g));
  return out;
}

template <class T>
AdamW<T>::AdamW(std::vector<NamedParam<T>> params, std::vector<ParamGroup> groups,
                const TrainConfig& cfg)
    : params_(std::move(params)), groups_(std::move(groups)), cfg_(cfg) {
  const std::size_t n = params_.size();
  lr_mult_.assign(n, -1.0);
  decay_.assign(n, false);
  for (const auto& g : groups_)
    for (std::size_t i : g.params) {
      if (i >= n) fail(ErrorKind::kIndex, "parameter group references index " + std::to_string(i));
      if (lr_mult_[i] >= 0.0)
        fail(ErrorKind::kParameter, "parameter " + params_[i].name + " is in two groups");
      lr_mult_[i] = g.lr_mult;
      decay_[i] = g.decay;
    }
  for (std::size_t i = 0; i < n; ++i)
    if (lr_mult_[i] < 0.0) fail(ErrorKind::kParameter, "parameter " + params_[i].name + " has no group");
  m_.resize(n);
  v_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m_[i].assign(static_cast<std::size_t>(params_[i].tensor.numel()), T(0));
    v_[i].assign(static_cast<std::size_t>(params_[i].tensor.numel()), T(0));
  }
}

template <class T>
void AdamW<T>::step(double lr) {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g)))
        fail(ErrorKind::kNumeric, "non-finite gradient in parameter " + p.name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  last_norm_ = std::sqrt(sq);
  const double clip = (cfg_.clip_grad > 0.0 && last_norm_ > cfg_.clip_grad)
                          ? cfg_.clip_grad / (last_norm_ + 1e-6)
                          : 1.0;
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.tensor.has_grad()) continue;
    const double plr = lr * lr_mult_[i];
    const double wd = decay_[i] ? plr * cfg_.weight_decay : 0.0;
    auto data = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = static_cast<double>(grad[j]) * clip;
      double x = static_cast<double>(data[j]);
      if (wd != 0.0) x -= wd * x;
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      x -= plr * (mj / c1) / (std::sqrt(vj / c2) + cfg_.eps);
      data[j] = static_cast<T>(x);
    }
  }
}

template <class T>
void AdamW<T>::restore(std::int64_t step, std::vector<std::vector<T>> m,
                       std::vector<std::vector<T>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    fail(ErrorKind::kParameter, "optimizer state covers a different parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size())
      fail(ErrorKind::kParameter, "optimizer state size mismatch for " + params_[i].name);
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

template std::vector<ParamGroup> layerwise_groups(const std::vector<NamedParam<float>>&, int,
                                                  double);
template std::vector<ParamGroup> layerwise_groups(const std::vector<NamedParam<double>>&, int,
                                                  double);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace mixmae
