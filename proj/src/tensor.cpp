#include "gc3/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gc3 {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis out of range for " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(std::shared_ptr<TensorImpl> out, Backward fn) {
  entries_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward needs a single-element loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (entries_.empty()) throw std::logic_error("backward on an empty tape");
  auto* root = loss.impl();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->fn(*it->out);
  }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  auto* tape = Tape::active();
  if (!tape) throw std::logic_error("backward called with no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

Tape* recording(const std::vector<Tensor>& inputs) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

Tensor make_output(Tape* tape, Shape shape, std::vector<double> data, Tape::Backward fn) {
  Tensor out(std::move(shape), std::move(data));
  if (tape) {
    out.set_requires_grad(true);
    tape->record(out.shared(), std::move(fn));
  }
  return out;
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

// Splits a shape around one axis into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[m×n] (+)= op(A)·op(B); A and B row-major with their untransposed shapes.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct MatmulDims {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool batched = false;
  Shape out;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b, bool b_transposed, const char* name) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  auto fail = [&] {
    return DimensionError(std::string(name) + ": incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  };
  MatmulDims d;
  if (as.size() < 2 || bs.size() < 2 || bs.size() > 3) throw fail();
  if (bs.size() == 2) {
    d.k = as.back();
    d.m = a.numel() / d.k;
    const std::size_t bk = b_transposed ? bs[1] : bs[0];
    d.n = b_transposed ? bs[0] : bs[1];
    if (bk != d.k) throw fail();
    d.out = as;
    d.out.back() = d.n;
  } else {
    if (as.size() != 3 || as[0] != bs[0]) throw fail();
    d.batched = true;
    d.batch = as[0];
    d.m = as[1];
    d.k = as[2];
    const std::size_t bk = b_transposed ? bs[2] : bs[1];
    d.n = b_transposed ? bs[1] : bs[2];
    if (bk != d.k) throw fail();
    d.out = {d.batch, d.m, d.n};
  }
  return d;
}

// Broadcast bookkeeping: per output axis, the stride of each operand (0 when
// the operand is broadcast along that axis).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* name) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  const auto as = row_major_strides(a);
  const auto bs = row_major_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ai = i + a.size() >= r ? i + a.size() - r : SIZE_MAX;
    const std::size_t bi = i + b.size() >= r ? i + b.size() - r : SIZE_MAX;
    const std::size_t ea = ai == SIZE_MAX ? 1 : a[ai];
    const std::size_t eb = bi == SIZE_MAX ? 1 : b[bi];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string(name) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(ea, eb);
    if (ea != 1) p.sa[i] = as[ai];
    if (eb != 1) p.sb[i] = bs[bi];
  }
  return p;
}

// Calls fn(out_index, a_index, b_index) for every output element in order.
template <class Fn>
void for_each_broadcast(const Broadcast& p, Fn&& fn) {
  const std::size_t total = shape_numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  const std::size_t last = p.out[r - 1];
  const std::size_t la = p.sa[r - 1], lb = p.sb[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; o += last) {
    for (std::size_t j = 0; j < last; ++j) fn(o + j, ia + j * la, ib + j * lb);
    // odometer over the leading axes
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      ia += p.sa[ax];
      ib += p.sb[ax];
      if (idx[ax] < p.out[ax]) break;
      ia -= p.sa[ax] * idx[ax];
      ib -= p.sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<double> out(shape_numel(plan.out));
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  switch (op) {
    case BinOp::Add:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] + bd[j]; });
      break;
    case BinOp::Sub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] - bd[j]; });
      break;
    case BinOp::Mul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = ad[i] * bd[j]; });
      break;
  }
  Tape* tape = recording({&a, &b});
  Shape shape = plan.out;
  return make_output(tape, std::move(shape), std::move(out),
                     [pa = a.shared(), pb = b.shared(), plan, op](TensorImpl& o) {
                       const auto& g = o.grad;
                       if (pa->requires_grad) {
                         pa->ensure_grad();
                         auto& ga = pa->grad;
                         if (op == BinOp::Mul) {
                           const auto& bd = pb->data;
                           for_each_broadcast(plan, [&](std::size_t k, std::size_t i, std::size_t j) {
                             ga[i] += g[k] * bd[j];
                           });
                         } else {
                           for_each_broadcast(plan, [&](std::size_t k, std::size_t i, std::size_t) { ga[i] += g[k]; });
                         }
                       }
                       if (pb->requires_grad) {
                         pb->ensure_grad();
                         auto& gb = pb->grad;
                         if (op == BinOp::Mul) {
                           const auto& ad = pa->data;
                           for_each_broadcast(plan, [&](std::size_t k, std::size_t i, std::size_t j) {
                             gb[j] += g[k] * ad[i];
                           });
                         } else {
                           const double sign = op == BinOp::Sub ? -1.0 : 1.0;
                           for_each_broadcast(plan,
                                              [&](std::size_t k, std::size_t, std::size_t j) { gb[j] += sign * g[k]; });
                         }
                       }
                     });
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx from input and output.
template <class F, class D>
Tensor unary(const Tensor& x, F f, D deriv) {
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_output(recording({&x}), x.shape(), std::move(out), [px = x.shared(), deriv](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < o.data.size(); ++i) px->grad[i] += o.grad[i] * deriv(px->data[i], o.data[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Products

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto d = matmul_dims(a, b, false, "matmul");
  std::vector<double> out(shape_numel(d.out), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  const std::size_t bstride = d.batched ? d.k * d.n : 0;
  for (std::size_t s = 0; s < d.batch; ++s) {
    gemm_nn(ad + s * d.m * d.k, bd + s * bstride, out.data() + s * d.m * d.n, d.m, d.k, d.n);
  }
  return make_output(recording({&a, &b}), d.out, std::move(out), [pa = a.shared(), pb = b.shared(), d](TensorImpl& o) {
    const std::size_t bstride = d.batched ? d.k * d.n : 0;
    for (std::size_t s = 0; s < d.batch; ++s) {
      const double* g = o.grad.data() + s * d.m * d.n;
      if (pa->requires_grad) {
        pa->ensure_grad();
        // dA = dC · Bᵀ
        gemm_nt(g, pb->data.data() + s * bstride, pa->grad.data() + s * d.m * d.k, d.m, d.n, d.k);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        // dB = Aᵀ · dC
        gemm_tn(pa->data.data() + s * d.m * d.k, g, pb->grad.data() + s * bstride, d.k, d.m, d.n);
      }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto d = matmul_dims(a, b, true, "matmul_nt");
  std::vector<double> out(shape_numel(d.out), 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  const std::size_t bstride = d.batched ? d.k * d.n : 0;
  for (std::size_t s = 0; s < d.batch; ++s) {
    gemm_nt(ad + s * d.m * d.k, bd + s * bstride, out.data() + s * d.m * d.n, d.m, d.k, d.n);
  }
  return make_output(recording({&a, &b}), d.out, std::move(out), [pa = a.shared(), pb = b.shared(), d](TensorImpl& o) {
    const std::size_t bstride = d.batched ? d.k * d.n : 0;
    for (std::size_t s = 0; s < d.batch; ++s) {
      const double* g = o.grad.data() + s * d.m * d.n;
      if (pa->requires_grad) {
        pa->ensure_grad();
        // dA = dC · B
        gemm_nn(g, pb->data.data() + s * bstride, pa->grad.data() + s * d.m * d.k, d.m, d.n, d.k);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        // dB = dCᵀ · A
        gemm_tn(g, pa->data.data() + s * d.m * d.k, pb->grad.data() + s * bstride, d.n, d.m, d.k);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) throw DimensionError("prelu slope must have one element, got " + shape_str(slope.shape()));
  const double a = slope.data()[0];
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] >= 0.0 ? xd[i] : a * xd[i];
  return make_output(recording({&x, &slope}), x.shape(), std::move(out),
                     [px = x.shared(), ps = slope.shared()](TensorImpl& o) {
                       const double a = ps->data[0];
                       const auto& xd = px->data;
                       if (px->requires_grad) {
                         px->ensure_grad();
                         for (std::size_t i = 0; i < xd.size(); ++i) px->grad[i] += o.grad[i] * (xd[i] >= 0.0 ? 1.0 : a);
                       }
                       if (ps->requires_grad) {
                         ps->ensure_grad();
                         double acc = 0.0;
                         for (std::size_t i = 0; i < xd.size(); ++i) {
                           if (xd[i] < 0.0) acc += o.grad[i] * xd[i];
                         }
                         ps->grad[0] += acc;
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor softmax(const Tensor& x, int axis) {
  const auto ax = norm_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = xd[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, xd[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(xd[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  return make_output(recording({&x}), x.shape(), std::move(out), [px = x.shared(), s](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = oo * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) dot += o.grad[base + e * s.inner] * o.data[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = base + e * s.inner;
          px->grad[k] += o.data[k] * (o.grad[k] - dot);
        }
      }
    }
  });
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, double factor) {
  const auto ax = norm_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (shape.empty()) shape = {1};
  const auto& xd = x.impl()->data;
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = xd.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0) {
    for (auto& v : out) v *= factor;
  }
  return make_output(recording({&x}), std::move(shape), std::move(out), [px = x.shared(), s, factor](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        double* dst = px->grad.data() + (oo * s.extent + e) * s.inner;
        const double* g = o.grad.data() + oo * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += factor * g[i];
      }
    }
  });
}

}  // namespace

Tensor sum(const Tensor& x, int axis) { return reduce_axis(x, axis, 1.0); }

Tensor mean(const Tensor& x, int axis) {
  return reduce_axis(x, axis, 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor sum_all(const Tensor& x) { return reduce_axis(reshape(x, {x.numel()}), 0, 1.0); }

Tensor mean_all(const Tensor& x) {
  return reduce_axis(reshape(x, {x.numel()}), 0, 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return make_output(recording({&x}), std::move(shape), x.impl()->data, [px = x.shared()](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const auto& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw DimensionError("permute: axis list does not match rank of " + shape_str(in));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis order for " + shape_str(in));
    seen[a] = true;
  }
  Shape out_shape(r);
  const auto in_strides = row_major_strides(in);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // out[i] = in[map[i]]
  const std::size_t total = x.numel();
  auto map = std::make_shared<std::vector<std::size_t>>(total);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
      (*map)[o] = src;
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        src += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        src -= src_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  const auto& xd = x.impl()->data;
  std::vector<double> out(total);
  for (std::size_t o = 0; o < total; ++o) out[o] = xd[(*map)[o]];
  return make_output(recording({&x}), std::move(out_shape), std::move(out), [px = x.shared(), map](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[(*map)[i]] += o.grad[i];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  auto plan = plan_broadcast(x.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw DimensionError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const auto& xd = x.impl()->data;
  std::vector<double> out(shape_numel(shape));
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xd[i]; });
  return make_output(recording({&x}), shape, std::move(out), [px = x.shared(), plan](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for_each_broadcast(plan, [&](std::size_t k, std::size_t i, std::size_t) { px->grad[i] += o.grad[k]; });
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const auto ax = norm_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  if (length == 0 || start + length > s.extent) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[ax] = length;
  const auto& xd = x.impl()->data;
  std::vector<double> out(s.outer * length * s.inner);
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * s.extent + start) * s.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return make_output(recording({&x}), std::move(shape), std::move(out), [px = x.shared(), s, start, chunk](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      double* dst = px->grad.data() + (oo * s.extent + start) * s.inner;
      const double* g = o.grad.data() + oo * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
    }
  });
}

Tensor select(const Tensor& x, int axis, std::size_t index) {
  const auto ax = norm_axis(axis, x.rank());
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (shape.empty()) shape = {1};
  return reshape(slice(x, static_cast<int>(ax), index, 1), std::move(shape));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const auto ax = norm_axis(axis, parts[0].rank());
  Shape shape = parts[0].shape();
  std::size_t total_extent = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    a[ax] = b[ax] = 0;
    if (a != b) throw DimensionError("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(shape));
    total_extent += p.shape()[ax];
  }
  shape[ax] = total_extent;
  const auto s = split_at(shape, ax);
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[ax] * s.inner;
    const auto& pd = p.impl()->data;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * s.extent * s.inner + offset * s.inner));
    }
    offset += p.shape()[ax];
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.shared());
  return make_output(recording(parts), std::move(shape), std::move(out),
                     [impls, offsets, s, ax](TensorImpl& o) {
                       for (std::size_t n = 0; n < impls.size(); ++n) {
                         auto& pi = *impls[n];
                         if (!pi.requires_grad) continue;
                         pi.ensure_grad();
                         const std::size_t chunk = pi.shape[ax] * s.inner;
                         for (std::size_t oo = 0; oo < s.outer; ++oo) {
                           const double* g = o.grad.data() + oo * s.extent * s.inner + offsets[n] * s.inner;
                           double* dst = pi.grad.data() + oo * chunk;
                           for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
                         }
                       }
                     });
}

Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  const int r = static_cast<int>(parts[0].rank()) + 1;
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("stack: axis out of range");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw DimensionError("stack: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin() + axis, 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor pad(const Tensor& x, int axis, std::size_t before, std::size_t after) {
  const auto ax = norm_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = s.extent + before + after;
  const std::size_t new_extent = shape[ax];
  const auto& xd = x.impl()->data;
  std::vector<double> out(shape_numel(shape), 0.0);
  const std::size_t chunk = s.extent * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                out.begin() + static_cast<std::ptrdiff_t>((o * new_extent + before) * s.inner));
  }
  return make_output(recording({&x}), std::move(shape), std::move(out),
                     [px = x.shared(), s, before, new_extent, chunk](TensorImpl& o) {
                       if (!px->requires_grad) return;
                       px->ensure_grad();
                       for (std::size_t oo = 0; oo < s.outer; ++oo) {
                         const double* g = o.grad.data() + (oo * new_extent + before) * s.inner;
                         double* dst = px->grad.data() + oo * chunk;
                         for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor normalize_last(const Tensor& x, double eps) {
  const std::size_t dim = x.shape().back();
  const std::size_t rows = x.numel() / dim;
  const auto& xd = x.impl()->data;
  std::vector<double> out(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = xd.data() + r * dim;
    double mu = 0.0;
    for (std::size_t i = 0; i < dim; ++i) mu += v[i];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<double>(dim);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < dim; ++i) out[r * dim + i] = (v[i] - mu) * is;
  }
  return make_output(recording({&x}), x.shape(), std::move(out), [px = x.shared(), inv_std, dim, rows](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    const double n = static_cast<double>(dim);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o.data.data() + r * dim;
      const double* g = o.grad.data() + r * dim;
      double gm = 0.0, gy = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        gm += g[i];
        gy += g[i] * y[i];
      }
      gm /= n;
      gy /= n;
      double* dst = px->grad.data() + r * dim;
      for (std::size_t i = 0; i < dim; ++i) dst[i] += (*inv_std)[r] * (g[i] - gm - y[i] * gy);
    }
  });
}

// ---------------------------------------------------------------------------
// Framing

Tensor frames(const Tensor& x, int axis, std::size_t size, std::size_t hop) {
  const auto ax = norm_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  if (size == 0 || hop == 0) throw DimensionError("frames: size and hop must be positive");
  if (s.extent < size || (s.extent - size) % hop != 0) {
    throw DimensionError("frames: length " + std::to_string(s.extent) + " is not tiled by size " +
                         std::to_string(size) + " / hop " + std::to_string(hop));
  }
  const std::size_t n = (s.extent - size) / hop + 1;
  Shape shape = x.shape();
  shape[ax] = size;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(ax), n);
  const auto& xd = x.impl()->data;
  std::vector<double> out(s.outer * n * size * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * s.extent + b * hop) * s.inner), size * s.inner,
                  out.begin() + static_cast<std::ptrdiff_t>(((o * n + b) * size) * s.inner));
    }
  }
  return make_output(recording({&x}), std::move(shape), std::move(out), [px = x.shared(), s, n, size, hop](TensorImpl& o) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* g = o.grad.data() + ((oo * n + b) * size) * s.inner;
        double* dst = px->grad.data() + (oo * s.extent + b * hop) * s.inner;
        for (std::size_t i = 0; i < size * s.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor overlap_add(const Tensor& x, int axis, std::size_t hop) {
  const auto ax = norm_axis(axis, x.rank());
  if (ax + 1 >= x.rank()) throw DimensionError("overlap_add: frame axis needs a following sample axis");
  if (hop == 0) throw DimensionError("overlap_add: hop must be positive");
  const auto& in = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= in[i];
  for (std::size_t i = ax + 2; i < in.size(); ++i) inner *= in[i];
  const std::size_t n = in[ax], size = in[ax + 1];
  const std::size_t length = (n - 1) * hop + size;
  Shape shape = in;
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  shape[ax] = length;
  const auto& xd = x.impl()->data;
  std::vector<double> out(outer * length * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t b = 0; b < n; ++b) {
      const double* src = xd.data() + ((o * n + b) * size) * inner;
      double* dst = out.data() + (o * length + b * hop) * inner;
      for (std::size_t i = 0; i < size * inner; ++i) dst[i] += src[i];
    }
  }
  return make_output(recording({&x}), std::move(shape), std::move(out),
                     [px = x.shared(), outer, inner, n, size, hop, length](TensorImpl& o) {
                       if (!px->requires_grad) return;
                       px->ensure_grad();
                       for (std::size_t oo = 0; oo < outer; ++oo) {
                         for (std::size_t b = 0; b < n; ++b) {
                           double* dst = px->grad.data() + ((oo * n + b) * size) * inner;
                           const double* g = o.grad.data() + (oo * length + b * hop) * inner;
                           for (std::size_t i = 0; i < size * inner; ++i) dst[i] += g[i];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  if (input.rank() != 2 || kernels.rank() != 3 || kernels.dim(1) != input.dim(0)) {
    throw DimensionError("conv1d: input " + shape_str(input.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()));
  }
  if (stride == 0) throw DimensionError("conv1d: stride must be positive");
  const std::size_t cin = input.dim(0), t_in = input.dim(1);
  const std::size_t cout = kernels.dim(0), w = kernels.dim(2);
  if (t_in < w) {
    throw DimensionError("conv1d: input too short (" + std::to_string(t_in) + " samples < window " +
                         std::to_string(w) + ")");
  }
  const std::size_t t_out = (t_in - w) / stride + 1;
  const auto& xd = input.impl()->data;
  const auto& kd = kernels.impl()->data;
  std::vector<double> out(cout * t_out, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* k = kd.data() + (co * cin + ci) * w;
      const double* x = xd.data() + ci * t_in;
      double* y = out.data() + co * t_out;
      for (std::size_t t = 0; t < t_out; ++t) {
        const double* xs = x + t * stride;
        double acc = 0.0;
        for (std::size_t j = 0; j < w; ++j) acc += k[j] * xs[j];
        y[t] += acc;
      }
    }
  }
  return make_output(recording({&input, &kernels}), {cout, t_out}, std::move(out),
                     [px = input.shared(), pk = kernels.shared(), cin, t_in, cout, w, t_out, stride](TensorImpl& o) {
                       if (px->requires_grad) px->ensure_grad();
                       if (pk->requires_grad) pk->ensure_grad();
                       for (std::size_t co = 0; co < cout; ++co) {
                         const double* g = o.grad.data() + co * t_out;
                         for (std::size_t ci = 0; ci < cin; ++ci) {
                           const std::size_t kbase = (co * cin + ci) * w;
                           for (std::size_t t = 0; t < t_out; ++t) {
                             const double gv = g[t];
                             if (gv == 0.0) continue;
                             const std::size_t xbase = ci * t_in + t * stride;
                             if (px->requires_grad) {
                               for (std::size_t j = 0; j < w; ++j) px->grad[xbase + j] += gv * pk->data[kbase + j];
                             }
                             if (pk->requires_grad) {
                               for (std::size_t j = 0; j < w; ++j) pk->grad[kbase + j] += gv * px->data[xbase + j];
                             }
                           }
                         }
                       }
                     });
}

Tensor conv_transpose1d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  if (!input.defined()) throw DimensionError("conv_transpose1d: empty input");
  if (input.rank() != 2 || kernels.rank() != 3 || kernels.dim(0) != input.dim(0)) {
    throw DimensionError("conv_transpose1d: input " + shape_str(input.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()));
  }
  if (stride == 0) throw DimensionError("conv_transpose1d: stride must be positive");
  const std::size_t cin = input.dim(0), t_in = input.dim(1);
  const std::size_t cout = kernels.dim(1), w = kernels.dim(2);
  const std::size_t t_out = (t_in - 1) * stride + w;
  const auto& xd = input.impl()->data;
  const auto& kd = kernels.impl()->data;
  std::vector<double> out(cout * t_out, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* k = kd.data() + (ci * cout + co) * w;
      double* y = out.data() + co * t_out;
      for (std::size_t t = 0; t < t_in; ++t) {
        const double v = xd[ci * t_in + t];
        if (v == 0.0) continue;
        double* ys = y + t * stride;
        for (std::size_t j = 0; j < w; ++j) ys[j] += v * k[j];
      }
    }
  }
  return make_output(recording({&input, &kernels}), {cout, t_out}, std::move(out),
                     [px = input.shared(), pk = kernels.shared(), cin, t_in, cout, w, t_out, stride](TensorImpl& o) {
                       if (px->requires_grad) px->ensure_grad();
                       if (pk->requires_grad) pk->ensure_grad();
                       for (std::size_t ci = 0; ci < cin; ++ci) {
                         for (std::size_t co = 0; co < cout; ++co) {
                           const std::size_t kbase = (ci * cout + co) * w;
                           const double* g = o.grad.data() + co * t_out;
                           for (std::size_t t = 0; t < t_in; ++t) {
                             const double* gs = g + t * stride;
                             if (px->requires_grad) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < w; ++j) acc += gs[j] * pk->data[kbase + j];
                               px->grad[ci * t_in + t] += acc;
                             }
                             if (pk->requires_grad) {
                               const double v = px->data[ci * t_in + t];
                               for (std::size_t j = 0; j < w; ++j) pk->grad[kbase + j] += v * gs[j];
                             }
                           }
                         }
                       }
                     });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernels, std::size_t dilation) {
  if (x.rank() < 2 || kernels.rank() != 2 || kernels.dim(0) != x.dim(-1)) {
    throw DimensionError("depthwise_conv1d: input " + shape_str(x.shape()) + " incompatible with kernels " +
                         shape_str(kernels.shape()));
  }
  const std::size_t w = kernels.dim(1);
  if (dilation == 0 || w % 2 == 0) throw DimensionError("depthwise_conv1d: needs dilation >= 1 and an odd kernel");
  const std::size_t c = x.dim(-1), t_len = x.dim(-2);
  const std::size_t batch = x.numel() / (c * t_len);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(dilation * (w - 1) / 2);
  const auto& xd = x.impl()->data;
  const auto& kd = kernels.impl()->data;
  std::vector<double> out(xd.size(), 0.0);
  auto each = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < w; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j * dilation) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
          const std::size_t o = (b * t_len + t) * c;
          const std::size_t i = (b * t_len + static_cast<std::size_t>(src)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) fn(o + ch, i + ch, ch * w + j);
        }
      }
    }
  };
  each([&](std::size_t o, std::size_t i, std::size_t k) { out[o] += kd[k] * xd[i]; });
  return make_output(recording({&x, &kernels}), x.shape(), std::move(out),
                     [px = x.shared(), pk = kernels.shared(), each](TensorImpl& o) {
                       if (px->requires_grad) {
                         px->ensure_grad();
                         each([&](std::size_t oi, std::size_t i, std::size_t k) {
                           px->grad[i] += o.grad[oi] * pk->data[k];
                         });
                       }
                       if (pk->requires_grad) {
                         pk->ensure_grad();
                         each([&](std::size_t oi, std::size_t i, std::size_t k) {
                           pk->grad[k] += o.grad[oi] * px->data[i];
                         });
                       }
                     });
}

}  // namespace gc3
