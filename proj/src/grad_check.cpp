#include "mixmae/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixmae/error.hpp"

namespace mixmae {

namespace {

void require_scalar(const Tensor64& y) {
  if (!y.defined() || y.numel() != 1)
    fail(ErrorKind::kContract, "grad_check: function must return a scalar, got " +
                                   (y.defined() ? shape_str(y.shape()) : std::string("nothing")));
}

void record(GradCheckResult& r, double a, double n, std::int64_t index, const std::string& name) {
  const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradCheckFloor});
  ++r.checked;
  if (err > r.max_rel_error || r.worst_index < 0) {
    r.max_rel_error = std::max(r.max_rel_error, err);
    r.worst_index = index;
    r.analytic = a;
    r.numeric = n;
    r.worst_param = name;
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor64& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kParameter, "grad_check: step must be positive");
  Tape<double>::current().clear();
  Tensor64 probe = x.detach();
  probe.set_requires_grad(true);
  Tensor64 y = f(probe);
  require_scalar(y);
  backward(y);
  std::vector<double> analytic(static_cast<std::size_t>(probe.numel()), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  GradCheckResult r;
  NoGrad<double> guard;
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    Tensor64 plus = x.detach(), minus = x.detach();
    plus.mutable_data()[i] += h;
    minus.mutable_data()[i] -= h;
    const Tensor64 fp = f(plus), fm = f(minus);
    require_scalar(fp);
    const double numeric = (fp.item() - fm.item()) / (2.0 * h);
    record(r, analytic[i], numeric, i, "");
  }
  return r;
}

GradCheckResult grad_check_params(const std::function<Tensor64()>& loss, ParamStore<double>& store,
                                  double h, std::int64_t per_param, std::uint64_t seed) {
  Tape<double>::current().clear();
  store.zero_grad();
  Tensor64 y = loss();
  require_scalar(y);
  backward(y);
  GradCheckResult r;
  Rng rng(seed);
  NoGrad<double> guard;
  for (auto& p : store.params()) {
    const std::int64_t n = p.tensor.numel();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (per_param > 0 && n > per_param) {
      rng.shuffle(std::span<std::int64_t>(idx));
      idx.resize(static_cast<std::size_t>(per_param));
    }
    std::vector<double> analytic(static_cast<std::size_t>(n), 0.0);
    if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
    auto data = p.tensor.mutable_data();
    for (std::int64_t i : idx) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = loss().item();
      data[i] = saved - h;
      const double fm = loss().item();
      data[i] = saved;
      record(r, analytic[i], (fp - fm) / (2.0 * h), i, p.name);
    }
  }
  store.zero_grad();
  return r;
}

}  // namespace mixmae
