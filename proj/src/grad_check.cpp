#include "gc3/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace gc3 {

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_coords) {
  std::vector<std::size_t> idx;
  if (max_coords == 0 || max_coords >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t i = 0; i < max_coords; ++i) idx.push_back(i * n / max_coords);
  return idx;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double epsilon) {
  Tensor x = Tensor::parameter(point.shape(), std::vector<double>(point.data().begin(), point.data().end()));
  std::vector<double> analytic(x.numel(), 0.0);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = fn(x);
    if (loss.requires_grad()) {
      tape.backward(loss);
      if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
    }
  }
  double worst = 0.0;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + epsilon;
    const double up = fn(x).item();
    values[i] = saved - epsilon;
    const double down = fn(x).item();
    values[i] = saved;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * epsilon)));
  }
  return worst;
}

std::vector<BlockCheck> grad_check_blocks(const std::function<Tensor()>& loss,
                                          const std::vector<std::pair<std::string, Tensor>>& params,
                                          const GradCheckOptions& options) {
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss();
    tape.backward(l);
  }
  std::vector<BlockCheck> report;
  for (const auto& [name, p] : params) {
    Tensor t = p;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    if (options.tamper) options.tamper(name, analytic);
    BlockCheck check{name, 0.0, 0};
    auto values = t.mutable_data();
    for (auto i : probe_indices(values.size(), options.max_coords_per_block)) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double up = loss().item();
      values[i] = saved - options.epsilon;
      const double down = loss().item();
      values[i] = saved;
      check.max_rel_error = std::max(check.max_rel_error, rel_error(analytic[i], (up - down) / (2.0 * options.epsilon)));
      ++check.coordinates;
    }
    t.zero_grad();
    report.push_back(check);
  }
  return report;
}

}  // namespace gc3
