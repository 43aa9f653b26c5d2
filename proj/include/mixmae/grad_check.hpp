#pragma once

// Central finite-difference verification of reverse-mode gradients at
// 64-bit precision.

#include <cstdint>
#include <functional>
#include <string>

#include "mixmae/nn.hpp"
#include "mixmae/tensor.hpp"

namespace mixmae {

// Gradients below this magnitude are compared in absolute terms: an exactly
// zero derivative (e.g. a key bias under softmax) differences to round-off.
constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  double max_rel_error = 0;  // max |analytic - numeric| / max(|analytic|, |numeric|, floor)
  std::int64_t worst_index = -1;
  double analytic = 0;       // at the worst element
  double numeric = 0;
  std::int64_t checked = 0;  // elements compared
  std::string worst_param;   // for parameter-store checks
};

using ScalarFn = std::function<Tensor64(const Tensor64&)>;

// `f` must return a scalar; otherwise a contract error is raised.
GradCheckResult grad_check(const ScalarFn& f, const Tensor64& x, double h = 1e-5);

// Checks d loss / d parameter for every parameter of `store`, sampling at
// most `per_param` elements of each (all when <= 0).
GradCheckResult grad_check_params(const std::function<Tensor64()>& loss, ParamStore<double>& store,
                                  double h = 1e-5, std::int64_t per_param = 0,
                                  std::uint64_t seed = 0);

}  // namespace mixmae
