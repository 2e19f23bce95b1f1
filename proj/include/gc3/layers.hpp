#pragma once

// Parameterized building blocks. Sequence inputs are frame-major:
// [L×I] for one sequence or [S×L×I] for S independent sequences of length L.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gc3/tensor.hpp"

namespace gc3 {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Deterministic parameter initializer.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(Shape shape, double bound);
  Tensor constant(Shape shape, double value);

 private:
  std::mt19937_64 rng_;
};

struct LinearParams {
  Tensor weight;  // [out×in]
  Tensor bias;    // [out]

  static LinearParams init(std::size_t out, std::size_t in, Initializer& init);
  std::size_t in() const { return weight.dim(1); }
  std::size_t out() const { return weight.dim(0); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct PReLUParams {
  Tensor slope;  // [1]

  static PReLUParams init(double slope = 0.25);
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNormParams {
  Tensor gain;  // [dim]
  Tensor bias;  // [dim]
  double eps = 1e-8;

  static LayerNormParams init(std::size_t dim);
  void collect(NamedParams& out, const std::string& prefix) const;
};

/// Gate blocks are stacked in the order (input, forget, cell, output). Two
/// bias vectors are kept (input-side and recurrent-side).
struct LSTMParams {
  Tensor input_weights;      // [4H×I]
  Tensor recurrent_weights;  // [4H×H]
  Tensor input_bias;         // [4H]
  Tensor recurrent_bias;     // [4H]

  static LSTMParams init(std::size_t hidden, std::size_t input, Initializer& init);
  std::size_t hidden() const { return recurrent_weights.dim(1); }
  std::size_t input() const { return input_weights.dim(1); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct ResidualBLSTMParams {
  LSTMParams forward_lstm;
  LSTMParams backward_lstm;
  LinearParams projection;  // [H_i×2H_o]
  LayerNormParams norm;     // [H_i]

  static ResidualBLSTMParams init(std::size_t input_dim, std::size_t hidden_dim, Initializer& init);
  std::size_t width() const { return projection.out(); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

/// Depthwise-separable convolution block of the TCN separator.
struct DSConvParams {
  LinearParams expand;   // [H_cnn×M]
  PReLUParams act1;
  LayerNormParams norm1;  // [H_cnn]
  Tensor depthwise;       // [H_cnn×3]
  Tensor depthwise_bias;  // [H_cnn]
  PReLUParams act2;
  LayerNormParams norm2;  // [H_cnn]
  LinearParams project;   // [M×H_cnn]

  static constexpr std::size_t kKernel = 3;
  static DSConvParams init(std::size_t width, std::size_t hidden, Initializer& init);
  std::size_t width() const { return expand.in(); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

Tensor fc(const LinearParams& params, const Tensor& x);
Tensor prelu(const PReLUParams& params, const Tensor& x);
Tensor layer_norm(const LayerNormParams& params, const Tensor& x);

/// Unidirectional LSTM from zero state; `reverse` runs right to left.
/// Returns the hidden state at every step, [S×L×H] (or [L×H]).
Tensor lstm(const LSTMParams& params, const Tensor& x, bool reverse);
/// Forward and backward passes concatenated per step: [S×L×2H].
Tensor blstm(const LSTMParams& fwd, const LSTMParams& bwd, const Tensor& x);
/// x + LayerNorm(Projection(BLSTM(x))); shape preserving.
Tensor residual_blstm(const ResidualBLSTMParams& params, const Tensor& x);
/// Shape-preserving residual block over x [..×T×M].
Tensor ds_conv_block(const DSConvParams& params, const Tensor& x, std::size_t dilation);

std::size_t param_count(const NamedParams& params);

}  // namespace gc3
