#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// Storage is row-major. A Tensor is a cheap handle onto shared storage; ops
// always allocate fresh outputs, so values seen by a recorded backward closure
// never change underneath it. Gradients are recorded only while a Tape is
// active on the current thread (see TapeScope) and at least one input
// requires a gradient; otherwise ops run in plain inference mode.
//
// Broadcasting for binary ops follows the usual right-aligned rule: shapes
// are compared from the last axis backwards, an operand with fewer axes is
// treated as having leading extents of 1, and an extent of 1 stretches to the
// other operand's extent. Anything else is a DimensionError.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gc3 {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(int axis) const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  double item() const;
  /// Copy of the values with no gradient history.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

class Tape {
 public:
  using Backward = std::function<void(TensorImpl& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<TensorImpl> out, Backward fn);

  /// Seeds d(loss)/d(loss) = 1 and replays the recorded ops in reverse order.
  /// Gradients accumulate into every reachable tensor that requires them.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Tape currently recording on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  struct Entry {
    std::shared_ptr<TensorImpl> out;
    Backward fn;
  };
  std::vector<Entry> entries_;
};

/// Makes a tape the recording tape for the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Negative axes count from the end.

// Matrix products. Rank-2 x rank-2 is the plain product; a rank>2 left
// operand against a rank-2 right operand is applied over the last axis;
// two rank-3 operands with equal leading extent are a batched product.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ with the same rank rules as matmul (b is [n×k] or [batch×n×k]).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
/// max(x,0) + slope·min(x,0) with a single learnable slope (shape [1]).
Tensor prelu(const Tensor& x, const Tensor& slope);

Tensor softmax(const Tensor& x, int axis);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x);  // rank 2
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
/// Removes `axis` by picking one index along it.
Tensor select(const Tensor& x, int axis, std::size_t index);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Inserts a new axis at `axis` and stacks equally shaped parts along it.
Tensor stack(const std::vector<Tensor>& parts, int axis);
Tensor pad(const Tensor& x, int axis, std::size_t before, std::size_t after);

/// Standardizes every vector along the last axis with population variance.
Tensor normalize_last(const Tensor& x, double eps);

/// Splits `axis` (length L) into overlapping frames: [.., L, ..] becomes
/// [.., n, size, ..] with n = (L - size) / hop + 1. L - size must be a
/// multiple of hop.
Tensor frames(const Tensor& x, int axis, std::size_t size, std::size_t hop);
/// Adjoint of frames: `axis` indexes frames and axis+1 holds their samples.
/// Overlapping samples are summed (no normalization).
Tensor overlap_add(const Tensor& x, int axis, std::size_t hop);

/// Valid cross-correlation: input [Cin×T], kernels [Cout×Cin×W].
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride);
/// Adjoint of conv1d for the same kernels: input [Cout×T'] -> [Cin×T] with
/// T = (T'-1)·stride + W.
Tensor conv_transpose1d(const Tensor& input, const Tensor& kernels, std::size_t stride);
/// Per-channel dilated convolution over axis -2 with channels on the last
/// axis: x [.., T, C], kernels [C×W] (W odd). Zero padding of
/// dilation·(W-1)/2 on both ends keeps the length at T.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernels, std::size_t dilation);

}  // namespace gc3
