#pragma once

// Analytic parameter and MAC counts computed from a configuration alone.
//
// MAC convention (one multiply-accumulate = 1):
//   linear / 1x1 conv   in·out per output vector (bias adds not counted)
//   conv1d              Cin·W per output element
//   conv_transpose1d    Cin·W per output sample
//   depthwise conv      W per output element
//   LSTM                4H(I+H) + 16H per step and direction (gate matmuls,
//                       bias adds and the cell/hidden elementwise products)
//   attention           Q·Kᵀ and A·V products, K'·K'·d_k each per head
//   mask application    one product per masked feature
// Normalizations, softmax, nonlinearities, means and residual adds are free.

#include <cstdint>
#include <string>
#include <vector>

#include "gc3/config.hpp"

namespace gc3 {

struct ComplexityEntry {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct ComplexityReport {
  std::string model;
  std::size_t samples = 0;
  std::vector<ComplexityEntry> entries;

  std::uint64_t total_params() const;
  std::uint64_t total_macs() const;
};

/// Entry for a biased linear map applied to `vectors` input vectors.
ComplexityEntry count_linear(std::string name, std::uint64_t in, std::uint64_t out, std::uint64_t vectors);

/// Sum over entries whose name starts with `prefix`.
ComplexityEntry subtotal(const ComplexityReport& report, const std::string& prefix);

/// Sizes and MACs for a `samples`-long input. Parameter counts do not depend
/// on `samples`.
ComplexityReport analyze(const ModelConfig& config, std::size_t samples);
ComplexityReport count_params(const ModelConfig& config);
ComplexityReport count_macs(const ModelConfig& config, std::size_t samples);

}  // namespace gc3
