#include "gc3/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gc3 {

Tensor neg_snr(const Tensor& estimate, const Tensor& reference) {
  if (estimate.shape() != reference.shape()) {
    throw DimensionError("neg_snr: " + shape_str(estimate.shape()) + " vs " + shape_str(reference.shape()));
  }
  double ref_energy = 0;
  for (double v : reference.data()) ref_energy += v * v;
  if (ref_energy == 0.0) throw std::invalid_argument("neg_snr: reference is all zeros");
  Tensor diff = sub(reference, estimate);
  Tensor residual = add_scalar(sum_all(mul(diff, diff)), kPerfectEps * ref_energy);
  return add_scalar(scale(log(residual), 10.0 / std::log(10.0)), -10.0 * std::log10(ref_energy));
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size() || estimate.empty()) throw DimensionError("si_sdr: length mismatch");
  const double n = static_cast<double>(estimate.size());
  const double me = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  const double mr = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double dot = 0, ref_energy = 0, est_energy = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double e = estimate[i] - me, r = reference[i] - mr;
    dot += e * r;
    ref_energy += r * r;
    est_energy += e * e;
  }
  if (ref_energy == 0.0 || est_energy == 0.0) throw std::invalid_argument("si_sdr: zero signal");
  const double alpha = dot / ref_energy;
  double target = 0, error = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double s = alpha * (reference[i] - mr);
    const double d = s - (estimate[i] - me);
    target += s * s;
    error += d * d;
  }
  return 10.0 * std::log10(target / (error + kPerfectEps * target));
}

PitResult pit_loss(const Tensor& estimates, const Tensor& references, const PairLoss& base) {
  if (estimates.shape() != references.shape() || estimates.rank() != 2) {
    throw DimensionError("pit_loss: " + shape_str(estimates.shape()) + " vs " + shape_str(references.shape()));
  }
  const std::size_t x = estimates.dim(0);
  if (x == 0 || x > 4) throw DimensionError("pit_loss: supports 1 to 4 sources");
  std::vector<Tensor> pair(x * x);
  for (std::size_t i = 0; i < x; ++i)
    for (std::size_t j = 0; j < x; ++j) pair[i * x + j] = base(select(estimates, 0, i), select(references, 0, j));

  std::vector<std::size_t> perm(x), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_value = std::numeric_limits<double>::infinity();
  do {
    double v = 0;
    for (std::size_t i = 0; i < x; ++i) v += pair[i * x + perm[i]].item();
    if (v < best_value) {
      best_value = v;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Tensor total = pair[best[0]];
  for (std::size_t i = 1; i < x; ++i) total = add(total, pair[i * x + best[i]]);
  return {scale(total, 1.0 / static_cast<double>(x)), best};
}

Tensor a2t_loss(const SeparationModel& model, const Tensor& references, const Tensor& masks,
                const std::vector<std::size_t>& permutation) {
  const std::size_t x = references.dim(0), length = references.dim(1);
  if (masks.rank() != 3 || masks.dim(0) != x || permutation.size() != x) {
    throw DimensionError("a2t_loss: masks " + shape_str(masks.shape()) + " do not match references " +
                         shape_str(references.shape()));
  }
  Tensor total;
  for (std::size_t i = 0; i < x; ++i) {
    const Tensor ref = select(references, 0, permutation[i]);
    Tensor h = encode_waveform(model, ref);
    Tensor wave = conv_transpose1d(mul(select(masks, 0, i), h), model.decoder, model.config.stride);
    Tensor term = neg_snr(reshape(slice(wave, 1, 0, length), {length}), ref);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(x));
}

}  // namespace gc3
