#include <gtest/gtest.h>

#include <cmath>

#include "gc3/grad_check.hpp"
#include "gc3/separators.hpp"
#include "oracle.hpp"

using namespace gc3;
using oracle::random_tensor;

namespace {

NamedParams params_of(const SeparatorParams& p) {
  NamedParams ps;
  p.collect(ps, "sep");
  return ps;
}

void zero_all(const SeparatorParams& p) {
  for (const auto& [name, t] : params_of(p))
    for (auto& v : Tensor(t).mutable_data()) v = 0.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) w = std::max(w, std::abs(a.data()[i] - b.data()[i]));
  return w;
}

SeparatorShape grouped(std::size_t width, std::size_t hidden, GroupCommKind kind) {
  return {width, hidden, hidden, kind, 0};
}

}  // namespace

TEST(Dprnn, SegmentCounts) {
  EXPECT_EQ(dprnn_segment(random_tensor({100, 3}, 1), 24).shape(), (Shape{10, 24, 3}));
  EXPECT_EQ(dprnn_segment(random_tensor({24, 2, 3}, 2), 24).shape(), (Shape{3, 24, 2, 3}));
}

TEST(Dprnn, ZeroWeightsAreIdentity) {
  Initializer init(3);
  auto p = init_dprnn(grouped(3, 4, GroupCommKind::tac), 2, 4, init);
  zero_all(p);
  Tensor x = random_tensor({11, 2, 3}, 4);
  EXPECT_LT(max_abs_diff(dprnn_forward(p, x), x), 1e-12);
}

TEST(Dprnn, BlockPreservesShape) {
  Initializer init(5);
  auto p = init_dprnn({3, 4, 0, std::nullopt, 0}, 1, 4, init);
  for (auto shape : {Shape{3, 4, 1, 3}, Shape{5, 6, 1, 3}, Shape{1, 2, 4, 3}})
    EXPECT_EQ(dprnn_block(p.dprnn[0], random_tensor(shape, 6)).shape(), shape);
}

TEST(Dprnn, ForwardPreservesShapeForAnyGroupCount) {
  Initializer init(7);
  auto p = init_dprnn(grouped(3, 2, GroupCommKind::mhsa), 2, 6, init);
  const auto before = param_count(params_of(p));
  for (std::size_t g : {1u, 3u, 5u}) EXPECT_EQ(dprnn_forward(p, random_tensor({13, g, 3}, g)).shape(), (Shape{13, g, 3}));
  EXPECT_EQ(param_count(params_of(p)), before);
  auto base = init_dprnn({3, 2, 0, std::nullopt, 0}, 1, 4, init);
  EXPECT_EQ(dprnn_forward(base, random_tensor({9, 3}, 8)).shape(), (Shape{9, 3}));
}

TEST(Dprnn, BlockGradCheck) {
  Initializer init(9);
  auto p = init_dprnn({3, 3, 0, std::nullopt, 0}, 1, 4, init);
  Tensor x = random_tensor({3, 4, 1, 3}, 10);
  Tensor r = random_tensor({3, 4, 1, 3}, 11);
  auto loss = [&](const Tensor& in) { return sum_all(mul(dprnn_block(p.dprnn[0], in), r)); };
  for (const auto& c : grad_check_blocks([&] { return loss(x); }, params_of(p))) EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
  EXPECT_LT(grad_check(loss, x), 1e-4);
}

TEST(Dprnn, GroupedForwardGradCheck) {
  Initializer init(12);
  auto p = init_dprnn(grouped(3, 2, GroupCommKind::tac), 2, 4, init);
  Tensor x = random_tensor({7, 2, 3}, 13);
  Tensor r = random_tensor({7, 2, 3}, 14);
  auto loss = [&] { return sum_all(mul(dprnn_forward(p, x), r)); };
  for (const auto& c : grad_check_blocks(loss, params_of(p))) EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
}

TEST(Dprnn, SummarizedLengthRuns) {
  Initializer init(15);
  auto p = init_dprnn(grouped(8, 16, GroupCommKind::tac), 8, 24, init);
  Tensor y = dprnn_forward(p, random_tensor({251, 16, 8}, 16));
  EXPECT_EQ(y.shape(), (Shape{251, 16, 8}));
  for (double v : y.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Dprnn, BaselineLengthRuns) {
  Initializer init(17);
  auto p = init_dprnn({64, 128, 0, std::nullopt, 0}, 6, 100, init);
  Tensor y = dprnn_forward(p, random_tensor({3999, 64}, 18));
  EXPECT_EQ(y.shape(), (Shape{3999, 64}));
  for (double v : y.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Tcn, ZeroWeightsAreIdentity) {
  Initializer init(19);
  auto p = init_tcn(grouped(3, 6, GroupCommKind::tac), 2, 6, init);
  ASSERT_EQ(p.tcn.size(), 12u);
  EXPECT_EQ(p.tcn[5].dilation, 32u);
  EXPECT_EQ(p.tcn[6].dilation, 1u);
  zero_all(p);
  Tensor x = random_tensor({20, 2, 3}, 20);
  EXPECT_LT(max_abs_diff(tcn_forward(p, x), x), 1e-12);
}

TEST(Tcn, ImpulseSupportWithinReceptiveField) {
  Initializer init(21);
  auto p = init_tcn({2, 4, 0, std::nullopt, 0}, 2, 6, init);
  const std::size_t frames = 401, at = 200;
  Tensor base = Tensor::zeros({frames, 2});
  Tensor kicked = base.detach();
  kicked.mutable_data()[at * 2] = 1.0;
  Tensor a = tcn_forward(p, base), b = tcn_forward(p, kicked);
  std::size_t first = frames, last = 0;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < 2; ++c)
      if (a.data()[t * 2 + c] != b.data()[t * 2 + c]) {
        first = std::min(first, t);
        last = std::max(last, t);
      }
  EXPECT_LE(last - first + 1, 253u);
  EXPECT_EQ(last - first + 1, 253u);
}

TEST(Tcn, GradCheck) {
  Initializer init(22);
  auto p = init_tcn(grouped(3, 4, GroupCommKind::tac), 1, 3, init);
  Tensor x = random_tensor({9, 2, 3}, 23);
  Tensor r = random_tensor({9, 2, 3}, 24);
  auto loss = [&](const Tensor& in) { return sum_all(mul(tcn_forward(p, in), r)); };
  for (const auto& c : grad_check_blocks([&] { return loss(x); }, params_of(p))) EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
  EXPECT_LT(grad_check(loss, x), 1e-4);
}
