#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gc3/tensor.hpp"

namespace gc3 {

/// Denominator floor of the relative error. Central differences at step 1e-5
/// on an O(1) loss carry up to ~1e-10 of absolute roundoff, so coordinates
/// whose gradient is below this floor are judged on absolute error instead
/// (a 1e-4 relative bound becomes a 1e-9 absolute one).
inline constexpr double kGradFloor = 1e-5;

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, kGradFloor),
/// with numeric from central differences of step `epsilon`.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double epsilon = 1e-5);

struct BlockCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Coordinates probed per block; 0 probes all of them. Sampled coordinates
  /// are spread evenly over the block.
  std::size_t max_coords_per_block = 0;
  /// Applied to each block's analytic gradient before comparison. Lets a
  /// caller plant a known fault as a negative control.
  std::function<void(const std::string&, std::vector<double>&)> tamper;
};

/// Checks d(loss)/d(param) for every named parameter block. `loss` must build
/// its graph from the given parameter tensors on each call; parameters are
/// perturbed in place and restored.
std::vector<BlockCheck> grad_check_blocks(const std::function<Tensor()>& loss,
                                          const std::vector<std::pair<std::string, Tensor>>& params,
                                          const GradCheckOptions& options = {});

}  // namespace gc3
