#pragma once

// Finite-difference checks of every autodiff primitive and of one small
// encoder + decoder + loss composition.

#include <cstdint>
#include <string>
#include <vector>

#include "mixmae/grad_check.hpp"

namespace mixmae {

constexpr double kPrimitiveTolerance = 1e-4;
constexpr double kCompositionTolerance = 1e-3;

struct GradCase {
  std::string name;
  GradCheckResult result;
  double tolerance = 0;
  bool passed() const { return result.max_rel_error < tolerance; }
};

std::vector<GradCase> primitive_grad_suite(std::uint64_t seed = 1);
std::vector<GradCase> composition_grad_suite(std::uint64_t seed = 1);

}  // namespace mixmae
