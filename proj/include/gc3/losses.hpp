#pragma once

// Training losses and separation metrics. Signals are 1-D tensors of equal
// length; multi-source tensors put the source index on axis 0.

#include <functional>
#include <span>
#include <vector>

#include "gc3/model.hpp"

namespace gc3 {

/// Caps losses and metrics at perfect reconstruction (about 80 dB).
inline constexpr double kPerfectEps = 1e-8;

/// -10·log10(‖ref‖² / (‖ref - est‖² + ε‖ref‖²)). Throws on an all-zero reference.
Tensor neg_snr(const Tensor& estimate, const Tensor& reference);

/// Scale-invariant SDR in dB after removing the means, ε-capped like neg_snr.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

using PairLoss = std::function<Tensor(const Tensor&, const Tensor&)>;

struct PitResult {
  Tensor loss;  // mean pair loss under the best assignment
  /// permutation[i] is the reference matched to estimate i.
  std::vector<std::size_t> permutation;
};

/// Minimum over all assignments of estimates [X×L] to references [X×L] (X ≤ 4).
PitResult pit_loss(const Tensor& estimates, const Tensor& references, const PairLoss& base = neg_snr);

/// Auxiliary autoencoding term: each reference is encoded, masked with the
/// mask of the estimate it was matched to, decoded and scored with neg_snr.
/// Returns the mean over references.
Tensor a2t_loss(const SeparationModel& model, const Tensor& references, const Tensor& masks,
                const std::vector<std::size_t>& permutation);

}  // namespace gc3
