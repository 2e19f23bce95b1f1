#include "gc3/layers.hpp"

#include <cmath>

namespace gc3 {

Tensor Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng_);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor Initializer::constant(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, value));
}

LinearParams LinearParams::init(std::size_t out, std::size_t in, Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  LinearParams p;
  p.weight = init.uniform({out, in}, bound);
  p.bias = init.uniform({out}, bound);
  return p;
}

void LinearParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

PReLUParams PReLUParams::init(double slope) { return {Tensor::parameter({1}, {slope})}; }

void PReLUParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".slope", slope);
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::parameter({dim}, std::vector<double>(dim, 1.0)), Tensor::parameter({dim}, std::vector<double>(dim, 0.0)),
          1e-8};
}

void LayerNormParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

LSTMParams LSTMParams::init(std::size_t hidden, std::size_t input, Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LSTMParams p;
  p.input_weights = init.uniform({4 * hidden, input}, bound);
  p.recurrent_weights = init.uniform({4 * hidden, hidden}, bound);
  p.input_bias = init.uniform({4 * hidden}, bound);
  p.recurrent_bias = init.uniform({4 * hidden}, bound);
  auto b = p.input_bias.mutable_data();
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] += 1.0;  // forget gate
  return p;
}

void LSTMParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w_ih", input_weights);
  out.emplace_back(prefix + ".w_hh", recurrent_weights);
  out.emplace_back(prefix + ".b_ih", input_bias);
  out.emplace_back(prefix + ".b_hh", recurrent_bias);
}

ResidualBLSTMParams ResidualBLSTMParams::init(std::size_t input_dim, std::size_t hidden_dim, Initializer& init) {
  ResidualBLSTMParams p;
  p.forward_lstm = LSTMParams::init(hidden_dim, input_dim, init);
  p.backward_lstm = LSTMParams::init(hidden_dim, input_dim, init);
  p.projection = LinearParams::init(input_dim, 2 * hidden_dim, init);
  p.norm = LayerNormParams::init(input_dim);
  return p;
}

void ResidualBLSTMParams::collect(NamedParams& out, const std::string& prefix) const {
  forward_lstm.collect(out, prefix + ".fwd");
  backward_lstm.collect(out, prefix + ".bwd");
  projection.collect(out, prefix + ".proj");
  norm.collect(out, prefix + ".norm");
}

DSConvParams DSConvParams::init(std::size_t width, std::size_t hidden, Initializer& init) {
  DSConvParams p;
  p.expand = LinearParams::init(hidden, width, init);
  p.act1 = PReLUParams::init();
  p.norm1 = LayerNormParams::init(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(kKernel));
  p.depthwise = init.uniform({hidden, kKernel}, bound);
  p.depthwise_bias = init.uniform({hidden}, bound);
  p.act2 = PReLUParams::init();
  p.norm2 = LayerNormParams::init(hidden);
  p.project = LinearParams::init(width, hidden, init);
  return p;
}

void DSConvParams::collect(NamedParams& out, const std::string& prefix) const {
  expand.collect(out, prefix + ".expand");
  act1.collect(out, prefix + ".act1");
  norm1.collect(out, prefix + ".norm1");
  out.emplace_back(prefix + ".depthwise.weight", depthwise);
  out.emplace_back(prefix + ".depthwise.bias", depthwise_bias);
  act2.collect(out, prefix + ".act2");
  norm2.collect(out, prefix + ".norm2");
  project.collect(out, prefix + ".project");
}

Tensor fc(const LinearParams& params, const Tensor& x) {
  if (x.shape().back() != params.in()) {
    throw DimensionError("fc: input " + shape_str(x.shape()) + " does not end in width " + std::to_string(params.in()));
  }
  if (x.rank() == 1) return reshape(fc(params, reshape(x, {1, x.dim(0)})), {params.out()});
  return add(matmul_nt(x, params.weight), params.bias);
}

Tensor prelu(const PReLUParams& params, const Tensor& x) { return prelu(x, params.slope); }

Tensor layer_norm(const LayerNormParams& params, const Tensor& x) {
  if (x.shape().back() != params.gain.numel()) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " does not end in width " +
                         std::to_string(params.gain.numel()));
  }
  return add(mul(normalize_last(x, params.eps), params.gain), params.bias);
}

namespace {

// Views [L×I] as [1×L×I]; returns whether it did.
std::pair<Tensor, bool> as_batch(const Tensor& x, const char* who) {
  if (x.rank() == 3) return {x, false};
  if (x.rank() == 2) return {reshape(x, {1, x.dim(0), x.dim(1)}), true};
  throw DimensionError(std::string(who) + ": expected [L×I] or [S×L×I], got " + shape_str(x.shape()));
}

Tensor restore(const Tensor& y, bool squeezed) {
  return squeezed ? reshape(y, {y.dim(1), y.dim(2)}) : y;
}

}  // namespace

Tensor lstm(const LSTMParams& params, const Tensor& x_in, bool reverse) {
  auto [x, squeezed] = as_batch(x_in, "lstm");
  const std::size_t batch = x.dim(0), steps = x.dim(1), h = params.hidden();
  if (x.dim(2) != params.input()) {
    throw DimensionError("lstm: input width " + std::to_string(x.dim(2)) + " != " + std::to_string(params.input()));
  }
  // Input projections for all steps at once: [S×L×4H].
  Tensor xw = add(matmul_nt(x, params.input_weights), add(params.input_bias, params.recurrent_bias));
  std::vector<Tensor> outputs(steps);
  Tensor hidden, cell;
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    Tensor gates = select(xw, 1, t);  // [S×4H]
    if (n > 0) gates = add(gates, matmul_nt(hidden, params.recurrent_weights));
    Tensor i = sigmoid(slice(gates, 1, 0, h));
    Tensor f = sigmoid(slice(gates, 1, h, h));
    Tensor g = gc3::tanh(slice(gates, 1, 2 * h, h));
    Tensor o = sigmoid(slice(gates, 1, 3 * h, h));
    cell = n > 0 ? add(mul(f, cell), mul(i, g)) : mul(i, g);
    hidden = mul(o, gc3::tanh(cell));
    outputs[t] = hidden;
  }
  (void)batch;
  return restore(stack(outputs, 1), squeezed);
}

Tensor blstm(const LSTMParams& fwd, const LSTMParams& bwd, const Tensor& x) {
  return concat({lstm(fwd, x, false), lstm(bwd, x, true)}, -1);
}

Tensor residual_blstm(const ResidualBLSTMParams& params, const Tensor& x) {
  if (x.shape().back() != params.width()) {
    throw DimensionError("residual_blstm: input " + shape_str(x.shape()) + " does not end in width " +
                         std::to_string(params.width()));
  }
  Tensor y = blstm(params.forward_lstm, params.backward_lstm, x);
  return add(x, layer_norm(params.norm, fc(params.projection, y)));
}

Tensor ds_conv_block(const DSConvParams& params, const Tensor& x, std::size_t dilation) {
  if (dilation == 0) throw DimensionError("ds_conv_block: dilation must be >= 1");
  if (x.rank() < 2 || x.shape().back() != params.width()) {
    throw DimensionError("ds_conv_block: input " + shape_str(x.shape()) + " does not end in width " +
                         std::to_string(params.width()));
  }
  Tensor h = layer_norm(params.norm1, prelu(params.act1, fc(params.expand, x)));
  h = add(depthwise_conv1d(h, params.depthwise, dilation), params.depthwise_bias);
  h = layer_norm(params.norm2, prelu(params.act2, h));
  return add(x, fc(params.project, h));
}

std::size_t param_count(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace gc3
