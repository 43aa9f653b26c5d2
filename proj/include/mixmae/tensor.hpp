#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// Every operation that has at least one input requiring gradients appends a
// backward closure to the calling thread's tape. `backward(loss)` replays the
// tape in reverse and then clears it. Broadcasting is limited to a scalar
// operand or an operand whose shape is a trailing suffix of the other's.
//
// The engine is instantiated for float (training) and double (finite
// difference verification).

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mixmae {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
};

template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor from(Shape shape, std::vector<T> values);
  static BasicTensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  // In-place access for optimizer updates, initialisation and finite
  // differences. Never call while a recorded graph still references this
  // tensor's values.
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::int64_t flat) const { return node_->data[flat]; }

  bool requires_grad() const { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();  // allocates zeros on first use
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values with no gradient history.
  BasicTensor detach() const;
  // Same storage, same node: identity comparison for parameter tables.
  bool same_as(const BasicTensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
  explicit BasicTensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <class T>
class Tape {
 public:
  static Tape& current();

  bool recording() const { return enabled_; }
  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1, replays every recorded op in reverse order and
  // frees the tape. `loss` must be a scalar.
  void backward(const BasicTensor<T>& loss);

 private:
  template <class>
  friend class NoGrad;
  bool enabled_ = true;
  std::vector<std::function<void()>> ops_;
};

template <class T>
void backward(const BasicTensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

// Disables recording for the current thread while in scope.
template <class T>
class NoGrad {
 public:
  NoGrad() : prev_(Tape<T>::current().enabled_) { Tape<T>::current().enabled_ = false; }
  ~NoGrad() { Tape<T>::current().enabled_ = prev_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

// Index tables are shared between forward calls and cached by the model.
using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

// ---- primitives -----------------------------------------------------------

template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <class T> BasicTensor<T> gelu(const BasicTensor<T>& x);
template <class T> BasicTensor<T> exp(const BasicTensor<T>& x);
template <class T> BasicTensor<T> log(const BasicTensor<T>& x);
template <class T> BasicTensor<T> sqrt(const BasicTensor<T>& x);

// a[m,k] . b[k,n]
template <class T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
// Batched product over the leading axis: a[g,m,k] . b[g,k,n], or b[g,n,k]
// transposed when `transpose_b`.
template <class T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b = false);
// x[..., in] . w[in, out] + bias[out]; bias may be undefined.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias);

template <class T> BasicTensor<T> softmax(const BasicTensor<T>& x, int axis = -1);
template <class T> BasicTensor<T> log_softmax(const BasicTensor<T>& x, int axis = -1);
template <class T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, T eps = T(1e-5));

template <class T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <class T> BasicTensor<T> transpose(const BasicTensor<T>& x, int axis0 = -2, int axis1 = -1);
// Views `x` as rows of `row_width` contiguous values; output row i is input
// row rows[i]. Repeated rows accumulate their adjoints.
template <class T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, const IndexMap& rows, std::int64_t row_width,
                           Shape out_shape);
template <class T>
BasicTensor<T> gather(const BasicTensor<T>& x, const IndexMap& index, Shape out_shape);
// Concatenation along axis 0.
template <class T> BasicTensor<T> concat(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <class T> BasicTensor<T> mean(const BasicTensor<T>& x);
// Mean over one axis, which is removed from the shape.
template <class T> BasicTensor<T> mean_axis(const BasicTensor<T>& x, int axis);

// Converts between precisions with no gradient history.
template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& x);

}  // namespace mixmae
