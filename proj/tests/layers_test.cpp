#include <gtest/gtest.h>

#include <cmath>

#include "gc3/grad_check.hpp"
#include "gc3/layers.hpp"
#include "oracle.hpp"

using namespace gc3;
using oracle::random_tensor;

namespace {

void fill(Tensor t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

void zero_all(const NamedParams& params) {
  for (const auto& [name, t] : params) fill(t, 0.0);
}

// Weighted sum keeps the loss O(1) so finite differences stay well conditioned.
Tensor probe_loss(const Tensor& y, std::uint64_t seed) { return sum_all(mul(y, random_tensor(y.shape(), seed))); }

double worst(const std::vector<BlockCheck>& checks) {
  double w = 0.0;
  for (const auto& c : checks) w = std::max(w, c.max_rel_error);
  return w;
}

}  // namespace

TEST(Fc, IdentityAndHandValue) {
  LinearParams id{Tensor::parameter({2, 2}, {1, 0, 0, 1}), Tensor::parameter({2}, {0, 0})};
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor y = fc(id, x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  LinearParams p{Tensor::parameter({1, 2}, {1, 1}), Tensor::parameter({1}, {1})};
  EXPECT_DOUBLE_EQ(fc(p, Tensor({2}, {2, 3})).item(), 6.0);
}

TEST(Fc, WidthMismatchThrows) {
  Initializer init(1);
  auto p = LinearParams::init(3, 5, init);
  EXPECT_THROW(fc(p, Tensor::zeros({2, 4})), DimensionError);
}

TEST(Fc, GradCheck) {
  Initializer init(2);
  auto p = LinearParams::init(3, 5, init);
  Tensor x = random_tensor({4, 5}, 3);
  NamedParams params;
  p.collect(params, "fc");
  EXPECT_LT(worst(grad_check_blocks([&] { return probe_loss(fc(p, x), 4); }, params)), 1e-6);
  EXPECT_LT(grad_check([&](const Tensor& in) { return probe_loss(fc(p, in), 4); }, x), 1e-6);
}

TEST(PRelu, Slopes) {
  Tensor x({2}, {-4, 2});
  auto y = prelu(PReLUParams::init(), x);
  EXPECT_DOUBLE_EQ(y.data()[0], -1.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.0);
  Tensor z({3}, {-3, 0, 5});
  auto one = prelu(PReLUParams::init(1.0), z);
  auto zero = prelu(PReLUParams::init(0.0), z);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(one.data()[i], z.data()[i]);
    EXPECT_DOUBLE_EQ(zero.data()[i], std::max(0.0, z.data()[i]));
  }
}

TEST(LayerNorm, HandValueConstantAndShift) {
  auto p = LayerNormParams::init(3);
  auto y = layer_norm(p, Tensor({3}, {1, 2, 3}));
  EXPECT_NEAR(y.data()[0], -1.224744871391589, 1e-7);
  EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
  EXPECT_NEAR(y.data()[2], 1.224744871391589, 1e-7);

  auto q = LayerNormParams::init(3);
  q.bias.mutable_data()[0] = 0.5;
  q.bias.mutable_data()[1] = -1.0;
  auto c = layer_norm(q, Tensor({3}, {7, 7, 7}));
  EXPECT_DOUBLE_EQ(c.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(c.data()[1], -1.0);
  EXPECT_DOUBLE_EQ(c.data()[2], 0.0);

  Tensor x = random_tensor({4, 6}, 5);
  auto a = layer_norm(p.gain.numel() == 6 ? p : LayerNormParams::init(6), x);
  auto b = layer_norm(LayerNormParams::init(6), add_scalar(x, 3.7));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-10);
}

TEST(LayerNorm, MomentsOfOutput) {
  Tensor x = random_tensor({5, 7}, 6, -3, 3);
  auto y = layer_norm(LayerNormParams::init(7), x);
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 7; ++c) m += y.data()[r * 7 + c];
    m /= 7;
    for (std::size_t c = 0; c < 7; ++c) v += std::pow(y.data()[r * 7 + c] - m, 2);
    v /= 7;
    EXPECT_LT(std::abs(m), 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(Lstm, ZeroWeightsGiveZeroOutput) {
  Initializer init(7);
  auto f = LSTMParams::init(3, 2, init);
  auto b = LSTMParams::init(3, 2, init);
  NamedParams ps;
  f.collect(ps, "f");
  b.collect(ps, "b");
  zero_all(ps);
  auto y = blstm(f, b, random_tensor({4, 2}, 8));
  ASSERT_EQ(y.shape(), (Shape{4, 6}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepForwardAndBackwardAgree) {
  Initializer init(9);
  auto f = LSTMParams::init(3, 2, init);
  Tensor x = random_tensor({1, 2}, 10);
  auto y = blstm(f, f, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y.data()[i], y.data()[3 + i]);
}

TEST(Lstm, HandUnrolledScalarCell) {
  LSTMParams p{Tensor::parameter({4, 1}, std::vector<double>(4, 0.5)),
               Tensor::parameter({4, 1}, std::vector<double>(4, 0.5)),
               Tensor::parameter({4}, std::vector<double>(4, 0.5)), Tensor::parameter({4}, std::vector<double>(4, 0.0))};
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  // Step 1 (x=1): every gate sees 0.5·1 + 0.5 = 1.
  const double c1 = sig(1.0) * std::tanh(1.0);
  const double h1 = sig(1.0) * std::tanh(c1);
  // Step 2 (x=2): every gate sees 0.5·2 + 0.5·h1 + 0.5.
  const double a2 = 1.5 + 0.5 * h1;
  const double c2 = sig(a2) * c1 + sig(a2) * std::tanh(a2);
  const double h2 = sig(a2) * std::tanh(c2);
  auto y = lstm(p, Tensor({2, 1}, {1, 2}), false);
  EXPECT_NEAR(y.data()[0], h1, 1e-14);
  EXPECT_NEAR(y.data()[1], h2, 1e-14);
  // Right-to-left pass starts from x=2.
  const double r1c = sig(1.5) * std::tanh(1.5);
  const double r1 = sig(1.5) * std::tanh(r1c);
  auto r = lstm(p, Tensor({2, 1}, {1, 2}), true);
  EXPECT_NEAR(r.data()[1], r1, 1e-14);
}

TEST(Lstm, ForgetBiasInitialization) {
  Initializer init(11);
  auto p = LSTMParams::init(4, 3, init);
  auto b = p.input_bias.data();
  for (std::size_t i = 0; i < 16; ++i) {
    const bool forget = i >= 4 && i < 8;
    EXPECT_LE(std::abs(b[i] - (forget ? 1.0 : 0.0)), 0.5 + 1e-12);
  }
}

TEST(ResidualBlstm, ZeroedNetworkIsIdentity) {
  Initializer init(12);
  auto p = ResidualBLSTMParams::init(2, 3, init);
  NamedParams ps;
  p.collect(ps, "rb");
  zero_all(ps);
  Tensor x = random_tensor({2, 5, 2}, 13);
  auto y = residual_blstm(p, x);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(ResidualBlstm, ShapeContract) {
  Initializer init(14);
  auto p = ResidualBLSTMParams::init(4, 3, init);
  for (std::size_t t : {1u, 2u, 7u}) EXPECT_EQ(residual_blstm(p, random_tensor({t, 4}, t)).shape(), (Shape{t, 4}));
  EXPECT_THROW(residual_blstm(p, random_tensor({3, 5}, 1)), DimensionError);
}

TEST(ResidualBlstm, GradCheck) {
  Initializer init(15);
  auto p = ResidualBLSTMParams::init(3, 3, init);
  Tensor x = random_tensor({3, 3}, 16);
  NamedParams ps;
  p.collect(ps, "rb");
  for (const auto& c : grad_check_blocks([&] { return probe_loss(residual_blstm(p, x), 17); }, ps))
    EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
  EXPECT_LT(grad_check([&](const Tensor& in) { return probe_loss(residual_blstm(p, in), 17); }, x), 1e-4);
}

// With width 2 the standardized projection is ±1 whatever the LSTM does, so
// only eps-sized gradients reach the recurrent weights. The blocks after the
// normalization are still checked.
TEST(ResidualBlstm, GradCheckWidthTwo) {
  Initializer init(15);
  auto p = ResidualBLSTMParams::init(2, 3, init);
  Tensor x = random_tensor({3, 2}, 16);
  NamedParams ps;
  p.norm.collect(ps, "rb.norm");
  EXPECT_LT(worst(grad_check_blocks([&] { return probe_loss(residual_blstm(p, x), 17); }, ps)), 1e-4);
  NamedParams lstm;
  p.forward_lstm.collect(lstm, "rb.fwd");
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(probe_loss(residual_blstm(p, x), 17));
  }
  for (const auto& [name, t] : lstm)
    for (double g : t.grad()) EXPECT_LT(std::abs(g), 1e-4) << name;
}

TEST(DsConv, ZeroedBlockIsIdentity) {
  Initializer init(18);
  auto p = DSConvParams::init(3, 12, init);
  NamedParams ps;
  p.collect(ps, "tcn");
  zero_all(ps);
  Tensor x = random_tensor({9, 3}, 19);
  auto y = ds_conv_block(p, x, 2);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(DsConv, GradCheck) {
  Initializer init(20);
  auto p = DSConvParams::init(2, 8, init);
  Tensor x = random_tensor({6, 2}, 21);
  NamedParams ps;
  p.collect(ps, "tcn");
  EXPECT_LT(worst(grad_check_blocks([&] { return probe_loss(ds_conv_block(p, x, 2), 22); }, ps)), 1e-4);
}

namespace {

// Width of the set of output frames that react to an impulse at `at`.
std::size_t response_width(const std::function<Tensor(const Tensor&)>& net, std::size_t frames, std::size_t width,
                           std::size_t at) {
  Tensor base = Tensor::zeros({frames, width});
  Tensor kicked = Tensor::zeros({frames, width});
  for (std::size_t c = 0; c < width; ++c) kicked.mutable_data()[at * width + c] = 1.0;
  auto a = net(base), b = net(kicked);
  std::size_t first = frames, last = 0;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < width; ++c)
      if (a.data()[t * width + c] != b.data()[t * width + c]) {
        first = std::min(first, t);
        last = std::max(last, t);
      }
  return first > last ? 0 : last - first + 1;
}

}  // namespace

TEST(DsConv, SingleBlockAddsTwiceTheDilation) {
  Initializer init(23);
  auto p = DSConvParams::init(2, 6, init);
  for (std::size_t d : {1u, 4u, 8u})
    EXPECT_EQ(response_width([&](const Tensor& x) { return ds_conv_block(p, x, d); }, 61, 2, 30), 1 + 2 * d);
}

TEST(DsConv, TwoStacksOfSixReach253Frames) {
  Initializer init(24);
  std::vector<DSConvParams> blocks;
  for (int i = 0; i < 12; ++i) blocks.push_back(DSConvParams::init(2, 4, init));
  auto net = [&](const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < blocks.size(); ++i) h = ds_conv_block(blocks[i], h, std::size_t{1} << (i % 6));
    return h;
  };
  EXPECT_EQ(response_width(net, 401, 2, 200), 253u);
}
