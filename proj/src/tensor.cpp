#include "mixmae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mixmae/error.hpp"

namespace mixmae {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

template <class T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
NodePtr<T> new_node(Shape shape) {
  auto n = std::make_shared<TensorNode<T>>();
  n->data.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
  n->shape = std::move(shape);
  return n;
}

template <class T>
bool tracking(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (!Tape<T>::current().recording()) return false;
  for (const auto* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T>
std::vector<T>& grad_of(TensorNode<T>& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), T(0));
  return n.grad;
}

template <class T>
BasicTensor<T> finish(NodePtr<T> out, bool track) {
  out->requires_grad = track;
  return BasicTensor<T>(std::move(out));
}

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    fail(ErrorKind::kParameter, "axis " + std::to_string(axis) + " invalid for rank " +
                                    std::to_string(rank));
  return a;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Result shape of a binary elementwise op under scalar / trailing-suffix
// broadcasting.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (shape_numel(b) == 1 || is_suffix(b, a)) return a;
  if (shape_numel(a) == 1 || is_suffix(a, b)) return b;
  fail(ErrorKind::kDimension, std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                                  shape_str(b));
}

// Calls fn(i, ia, ib) for each output element, where the smaller operand
// repeats with period equal to its size.
template <class Fn>
inline void for_each_bcast(std::int64_t n, std::int64_t na, std::int64_t nb, Fn&& fn) {
  if (na == n && nb == n) {
    for (std::int64_t i = 0; i < n; ++i) fn(i, i, i);
  } else if (na == n) {
    for (std::int64_t o = 0; o < n; o += nb)
      for (std::int64_t j = 0; j < nb; ++j) fn(o + j, o + j, j);
  } else {
    for (std::int64_t o = 0; o < n; o += na)
      for (std::int64_t j = 0; j < na; ++j) fn(o + j, j, o + j);
  }
}

enum class BinOp { kAdd, kSub, kMul };

template <class T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinOp op,
                      const char* name) {
  Shape shape = broadcast_shape(a.shape(), b.shape(), name);
  auto out = new_node<T>(shape);
  const std::int64_t n = shape_numel(shape), na = a.numel(), nb = b.numel();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out->data.data();
  switch (op) {
    case BinOp::kAdd:
      for_each_bcast(n, na, nb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinOp::kSub:
      for_each_bcast(n, na, nb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinOp::kMul:
      for_each_bcast(n, na, nb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] * pb[ib]; });
      break;
  }
  const bool track = tracking({&a, &b});
  if (track) {
    Tape<T>::current().record([an = a.node(), bn = b.node(), out, op, n, na, nb] {
      if (out->grad.empty()) return;
      const T* g = out->grad.data();
      if (an->requires_grad) {
        T* ga = grad_of(*an).data();
        const T* pb = bn->data.data();
        switch (op) {
          case BinOp::kAdd:
          case BinOp::kSub:
            for_each_bcast(n, na, nb, [&](auto i, auto ia, auto) { ga[ia] += g[i]; });
            break;
          case BinOp::kMul:
            for_each_bcast(n, na, nb, [&](auto i, auto ia, auto ib) { ga[ia] += g[i] * pb[ib]; });
            break;
        }
      }
      if (bn->requires_grad) {
        T* gb = grad_of(*bn).data();
        const T* pa = an->data.data();
        switch (op) {
          case BinOp::kAdd:
            for_each_bcast(n, na, nb, [&](auto i, auto, auto ib) { gb[ib] += g[i]; });
            break;
          case BinOp::kSub:
            for_each_bcast(n, na, nb, [&](auto i, auto, auto ib) { gb[ib] -= g[i]; });
            break;
          case BinOp::kMul:
            for_each_bcast(n, na, nb, [&](auto i, auto ia, auto ib) { gb[ib] += g[i] * pa[ia]; });
            break;
        }
      }
    });
  }
  return finish(out, track);
}

// Pointwise op whose derivative is expressed from (input, output).
template <class T, class F, class D>
BasicTensor<T> unary(const BasicTensor<T>& x, F f, D dfdx) {
  auto out = new_node<T>(x.shape());
  const T* px = x.data().data();
  T* po = out->data.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out, n, dfdx] {
      if (out->grad.empty()) return;
      T* gx = grad_of(*xn).data();
      const T* g = out->grad.data();
      const T* px = xn->data.data();
      const T* py = out->data.data();
      for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * dfdx(px[i], py[i]);
    });
  }
  return finish(out, track);
}

struct AxisSplit {
  std::int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---- BasicTensor ----------------------------------------------------------

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  return BasicTensor(new_node<T>(std::move(shape)));
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  auto n = new_node<T>(std::move(shape));
  std::fill(n->data.begin(), n->data.end(), value);
  return BasicTensor(std::move(n));
}

template <class T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    fail(ErrorKind::kDimension, "shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  return BasicTensor(std::move(n));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return from({}, {value});
}

template <class T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  return node_->shape[normalize_axis(axis, rank())];
}

template <class T>
T BasicTensor<T>::item() const {
  if (numel() != 1)
    fail(ErrorKind::kContract, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <class T>
std::span<T> BasicTensor<T>::mutable_grad() {
  return grad_of(*node_);
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), node_->data);
}

// ---- Tape -----------------------------------------------------------------

template <class T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <class T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1)
    fail(ErrorKind::kContract, "backward needs a scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) {
    ops_.clear();
    fail(ErrorKind::kContract, "backward on a value with no gradient history");
  }
  grad_of(*loss.node())[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

// ---- elementwise ----------------------------------------------------------

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinOp::kAdd, "add");
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinOp::kSub, "sub");
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, BinOp::kMul, "mul");
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) {
        T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <class T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& x) {
  return unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

// ---- products -------------------------------------------------------------

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail(ErrorKind::kDimension,
         "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = new_node<T>({m, n});
  MatMap<T>(out->data.data(), m, n).noalias() =
      CMatMap<T>(a.data().data(), m, k) * CMatMap<T>(b.data().data(), k, n);
  const bool track = tracking({&a, &b});
  if (track) {
    Tape<T>::current().record([an = a.node(), bn = b.node(), out, m, k, n] {
      if (out->grad.empty()) return;
      CMatMap<T> g(out->grad.data(), m, n);
      if (an->requires_grad)
        MatMap<T>(grad_of(*an).data(), m, k).noalias() +=
            g * CMatMap<T>(bn->data.data(), k, n).transpose();
      if (bn->requires_grad)
        MatMap<T>(grad_of(*bn).data(), k, n).noalias() +=
            CMatMap<T>(an->data.data(), m, k).transpose() * g;
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1)))
    fail(ErrorKind::kDimension,
         "bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  auto out = new_node<T>({g, m, n});
  for (std::int64_t i = 0; i < g; ++i) {
    CMatMap<T> ai(a.data().data() + i * m * k, m, k);
    MatMap<T> oi(out->data.data() + i * m * n, m, n);
    if (transpose_b)
      oi.noalias() = ai * CMatMap<T>(b.data().data() + i * n * k, n, k).transpose();
    else
      oi.noalias() = ai * CMatMap<T>(b.data().data() + i * k * n, k, n);
  }
  const bool track = tracking({&a, &b});
  if (track) {
    Tape<T>::current().record([an = a.node(), bn = b.node(), out, g, m, k, n, transpose_b] {
      if (out->grad.empty()) return;
      T* ga = an->requires_grad ? grad_of(*an).data() : nullptr;
      T* gb = bn->requires_grad ? grad_of(*bn).data() : nullptr;
      for (std::int64_t i = 0; i < g; ++i) {
        CMatMap<T> go(out->grad.data() + i * m * n, m, n);
        CMatMap<T> ai(an->data.data() + i * m * k, m, k);
        if (transpose_b) {
          CMatMap<T> bi(bn->data.data() + i * n * k, n, k);
          if (ga) MatMap<T>(ga + i * m * k, m, k).noalias() += go * bi;
          if (gb) MatMap<T>(gb + i * n * k, n, k).noalias() += go.transpose() * ai;
        } else {
          CMatMap<T> bi(bn->data.data() + i * k * n, k, n);
          if (ga) MatMap<T>(ga + i * m * k, m, k).noalias() += go * bi.transpose();
          if (gb) MatMap<T>(gb + i * k * n, k, n).noalias() += ai.transpose() * go;
        }
      }
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0) ||
      (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(1))))
    fail(ErrorKind::kDimension, "linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(w.shape()));
  const std::int64_t in = w.dim(0), outw = w.dim(1), rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = outw;
  auto out = new_node<T>(shape);
  MatMap<T> o(out->data.data(), rows, outw);
  o.noalias() = CMatMap<T>(x.data().data(), rows, in) * CMatMap<T>(w.data().data(), in, outw);
  if (bias.defined())
    o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), outw);
  const bool track = tracking({&x, &w, &bias});
  if (track) {
    auto bn = bias.defined() ? bias.node() : nullptr;
    Tape<T>::current().record([xn = x.node(), wn = w.node(), bn, out, rows, in, outw] {
      if (out->grad.empty()) return;
      CMatMap<T> g(out->grad.data(), rows, outw);
      if (xn->requires_grad)
        MatMap<T>(grad_of(*xn).data(), rows, in).noalias() +=
            g * CMatMap<T>(wn->data.data(), in, outw).transpose();
      if (wn->requires_grad)
        MatMap<T>(grad_of(*wn).data(), in, outw).noalias() +=
            CMatMap<T>(xn->data.data(), rows, in).transpose() * g;
      if (bn && bn->requires_grad) {
        // Fixed row order keeps the sum independent of buffer alignment.
        T* gb = grad_of(*bn).data();
        const T* gr = out->grad.data();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < outw; ++c) gb[c] += gr[r * outw + c];
      }
    });
  }
  return finish(out, track);
}

// ---- normalisation --------------------------------------------------------

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto [outer, len, inner] = split_axis(x.shape(), ax);
  auto out = new_node<T>(x.shape());
  const T* px = x.data().data();
  T* py = out->data.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * len * inner + i;
      T mx = px[base];
      for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      T total = 0;
      for (std::int64_t j = 0; j < len; ++j) {
        T e = std::exp(px[base + j * inner] - mx);
        py[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::int64_t j = 0; j < len; ++j) py[base + j * inner] *= inv;
    }
  }
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out, outer, len, inner] {
      if (out->grad.empty()) return;
      T* gx = grad_of(*xn).data();
      const T* g = out->grad.data();
      const T* py = out->data.data();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
          const std::int64_t base = o * len * inner + i;
          T dot = 0;
          for (std::int64_t j = 0; j < len; ++j) dot += g[base + j * inner] * py[base + j * inner];
          for (std::int64_t j = 0; j < len; ++j) {
            const std::int64_t p = base + j * inner;
            gx[p] += py[p] * (g[p] - dot);
          }
        }
      }
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto [outer, len, inner] = split_axis(x.shape(), ax);
  auto out = new_node<T>(x.shape());
  const T* px = x.data().data();
  T* py = out->data.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * len * inner + i;
      T mx = px[base];
      for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      T total = 0;
      for (std::int64_t j = 0; j < len; ++j) total += std::exp(px[base + j * inner] - mx);
      const T lse = mx + std::log(total);
      for (std::int64_t j = 0; j < len; ++j) py[base + j * inner] = px[base + j * inner] - lse;
    }
  }
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out, outer, len, inner] {
      if (out->grad.empty()) return;
      T* gx = grad_of(*xn).data();
      const T* g = out->grad.data();
      const T* py = out->data.data();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
          const std::int64_t base = o * len * inner + i;
          T total = 0;
          for (std::int64_t j = 0; j < len; ++j) total += g[base + j * inner];
          for (std::int64_t j = 0; j < len; ++j) {
            const std::int64_t p = base + j * inner;
            gx[p] += g[p] - std::exp(py[p]) * total;
          }
        }
      }
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, T eps) {
  const std::int64_t width = x.dim(-1);
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != width || beta.dim(0) != width)
    fail(ErrorKind::kDimension, "layernorm: affine " + shape_str(gamma.shape()) + "/" +
                                    shape_str(beta.shape()) + " does not match " +
                                    shape_str(x.shape()));
  const std::int64_t rows = x.numel() / width;
  auto out = new_node<T>(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* py = out->data.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * width;
    T mu = 0;
    for (std::int64_t j = 0; j < width; ++j) mu += xr[j];
    mu /= T(width);
    T var = 0;
    for (std::int64_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= T(width);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* hr = xhat->data() + r * width;
    T* yr = py + r * width;
    for (std::int64_t j = 0; j < width; ++j) {
      hr[j] = (xr[j] - mu) * rs;
      yr[j] = hr[j] * pg[j] + pb[j];
    }
  }
  const bool track = tracking({&x, &gamma, &beta});
  if (track) {
    Tape<T>::current().record([xn = x.node(), gn = gamma.node(), bn = beta.node(), out, xhat,
                               rstd, rows, width] {
      if (out->grad.empty()) return;
      const T* g = out->grad.data();
      const T* pg = gn->data.data();
      T* gx = xn->requires_grad ? grad_of(*xn).data() : nullptr;
      T* gg = gn->requires_grad ? grad_of(*gn).data() : nullptr;
      T* gb = bn->requires_grad ? grad_of(*bn).data() : nullptr;
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* gr = g + r * width;
        const T* hr = xhat->data() + r * width;
        if (gg)
          for (std::int64_t j = 0; j < width; ++j) gg[j] += gr[j] * hr[j];
        if (gb)
          for (std::int64_t j = 0; j < width; ++j) gb[j] += gr[j];
        if (gx) {
          T mean_g = 0, mean_gh = 0;
          for (std::int64_t j = 0; j < width; ++j) {
            const T d = gr[j] * pg[j];
            mean_g += d;
            mean_gh += d * hr[j];
          }
          mean_g /= T(width);
          mean_gh /= T(width);
          const T rs = (*rstd)[r];
          T* gxr = gx + r * width;
          for (std::int64_t j = 0; j < width; ++j)
            gxr[j] += rs * (gr[j] * pg[j] - mean_g - hr[j] * mean_gh);
        }
      }
    });
  }
  return finish(out, track);
}

// ---- data movement --------------------------------------------------------

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    fail(ErrorKind::kDimension,
         "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  auto out = new_node<T>(std::move(shape));
  std::copy(x.data().begin(), x.data().end(), out->data.begin());
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out] {
      if (out->grad.empty()) return;
      auto& gx = grad_of(*xn);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out->grad[i];
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, const IndexMap& rows, std::int64_t row_width,
                           Shape out_shape) {
  if (row_width <= 0 || x.numel() % row_width != 0)
    fail(ErrorKind::kDimension, "gather: row width " + std::to_string(row_width) +
                                    " does not tile " + shape_str(x.shape()));
  const std::int64_t n_rows = static_cast<std::int64_t>(rows->size());
  if (shape_numel(out_shape) != n_rows * row_width)
    fail(ErrorKind::kDimension, "gather: output shape " + shape_str(out_shape) + " does not hold " +
                                    std::to_string(n_rows) + " rows");
  const std::int64_t src_rows = x.numel() / row_width;
  for (auto r : *rows)
    if (r < 0 || r >= src_rows)
      fail(ErrorKind::kIndex, "gather: index " + std::to_string(r) + " out of range [0, " +
                                  std::to_string(src_rows) + ")");
  auto out = new_node<T>(std::move(out_shape));
  const T* px = x.data().data();
  T* po = out->data.data();
  if (row_width == 1) {
    for (std::int64_t i = 0; i < n_rows; ++i) po[i] = px[(*rows)[i]];
  } else {
    for (std::int64_t i = 0; i < n_rows; ++i)
      std::copy_n(px + (*rows)[i] * row_width, row_width, po + i * row_width);
  }
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out, rows, row_width, n_rows] {
      if (out->grad.empty()) return;
      T* gx = grad_of(*xn).data();
      const T* g = out->grad.data();
      for (std::int64_t i = 0; i < n_rows; ++i) {
        T* dst = gx + (*rows)[i] * row_width;
        const T* src = g + i * row_width;
        for (std::int64_t j = 0; j < row_width; ++j) dst[j] += src[j];
      }
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> gather(const BasicTensor<T>& x, const IndexMap& index, Shape out_shape) {
  return gather_rows(x, index, 1, std::move(out_shape));
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& x, int axis0, int axis1) {
  const int r = x.rank();
  const int a0 = normalize_axis(axis0, r), a1 = normalize_axis(axis1, r);
  const Shape& in = x.shape();
  Shape out_shape = in;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<std::int64_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in[i + 1];
  std::vector<std::int64_t> stride = in_stride;  // input stride for each output axis
  std::swap(stride[a0], stride[a1]);
  auto idx = std::make_shared<std::vector<std::int64_t>>(x.numel());
  std::vector<std::int64_t> coord(r, 0);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    std::int64_t src = 0;
    for (int d = 0; d < r; ++d) src += coord[d] * stride[d];
    (*idx)[i] = src;
    for (int d = r - 1; d >= 0; --d) {
      if (++coord[d] < out_shape[d]) break;
      coord[d] = 0;
    }
  }
  return gather(x, IndexMap(idx), out_shape);
}

template <class T>
BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 1 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    fail(ErrorKind::kDimension,
         "concat: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  auto out = new_node<T>(shape);
  std::copy(a.data().begin(), a.data().end(), out->data.begin());
  std::copy(b.data().begin(), b.data().end(), out->data.begin() + a.numel());
  const bool track = tracking({&a, &b});
  if (track) {
    Tape<T>::current().record([an = a.node(), bn = b.node(), out] {
      if (out->grad.empty()) return;
      const std::size_t na = an->data.size();
      if (an->requires_grad) {
        auto& ga = grad_of(*an);
        for (std::size_t i = 0; i < na; ++i) ga[i] += out->grad[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(*bn);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += out->grad[na + i];
      }
    });
  }
  return finish(out, track);
}

// ---- reductions -----------------------------------------------------------

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  auto out = new_node<T>({});
  T total = 0;
  for (T v : x.data()) total += v;
  out->data[0] = total;
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out] {
      if (out->grad.empty()) return;
      const T g = out->grad[0];
      for (auto& v : grad_of(*xn)) v += g;
    });
  }
  return finish(out, track);
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <class T>
BasicTensor<T> mean_axis(const BasicTensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto [outer, len, inner] = split_axis(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + ax);
  auto out = new_node<T>(shape);
  const T* px = x.data().data();
  T* po = out->data.data();
  const T inv = T(1) / T(len);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < len; ++j)
      for (std::int64_t i = 0; i < inner; ++i) po[o * inner + i] += px[(o * len + j) * inner + i];
  for (auto& v : out->data) v *= inv;
  const bool track = tracking({&x});
  if (track) {
    Tape<T>::current().record([xn = x.node(), out, outer, len, inner, inv] {
      if (out->grad.empty()) return;
      T* gx = grad_of(*xn).data();
      const T* g = out->grad.data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < len; ++j)
          for (std::int64_t i = 0; i < inner; ++i)
            gx[(o * len + j) * inner + i] += g[o * inner + i] * inv;
    });
  }
  return finish(out, track);
}

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& x) {
  std::vector<To> values(x.data().begin(), x.data().end());
  return BasicTensor<To>::from(x.shape(), std::move(values));
}

// ---- instantiation --------------------------------------------------------

#define MIXMAE_INSTANTIATE(T)                                                               \
  template class BasicTensor<T>;                                                            \
  template class Tape<T>;                                                                   \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                  \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                      \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                       \
  template BasicTensor<T> log(const BasicTensor<T>&);                                       \
  template BasicTensor<T> sqrt(const BasicTensor<T>&);                                      \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> bmm(const BasicTensor<T>&, const BasicTensor<T>&, bool);          \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                 const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&, int);                              \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, int);                          \
  template BasicTensor<T> layernorm(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                    const BasicTensor<T>&, T);                              \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                            \
  template BasicTensor<T> transpose(const BasicTensor<T>&, int, int);                       \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, const IndexMap&, std::int64_t, \
                                      Shape);                                               \
  template BasicTensor<T> gather(const BasicTensor<T>&, const IndexMap&, Shape);            \
  template BasicTensor<T> concat(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                       \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                      \
  template BasicTensor<T> mean_axis(const BasicTensor<T>&, int);

MIXMAE_INSTANTIATE(float)
MIXMAE_INSTANTIATE(double)
#undef MIXMAE_INSTANTIATE

template BasicTensor<double> cast(const BasicTensor<float>&);
template BasicTensor<float> cast(const BasicTensor<double>&);
template BasicTensor<float> cast(const BasicTensor<float>&);
template BasicTensor<double> cast(const BasicTensor<double>&);

}  // namespace mixmae
