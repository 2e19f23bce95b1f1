#include <gtest/gtest.h>

#include <cmath>

#include "gc3/context_codec.hpp"
#include "gc3/grad_check.hpp"
#include "oracle.hpp"

using namespace gc3;
using oracle::random_tensor;

namespace {

void zero_all(const ContextCodecParams& p) {
  NamedParams ps;
  p.collect(ps, "codec");
  for (const auto& [name, t] : ps)
    for (auto& v : Tensor(t).mutable_data()) v = 0.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) w = std::max(w, std::abs(a.data()[i] - b.data()[i]));
  return w;
}

}  // namespace

TEST(Segmentation, BlockCounts) {
  auto s = Segmentation::plan(3999, 32);
  EXPECT_EQ(s.blocks, 251u);
  EXPECT_NEAR(3999.0 / s.blocks, 16.0, 0.5);
  EXPECT_GE(s.blocks * s.hop(), s.length);
  EXPECT_EQ(Segmentation::plan(32, 32).blocks, 3u);
  EXPECT_EQ(Segmentation::plan(100, 24).blocks, 10u);
  EXPECT_EQ(Segmentation::plan(24, 24).blocks, 3u);
  EXPECT_EQ(Segmentation::plan(1, 4).blocks, 2u);
  EXPECT_THROW(Segmentation::plan(10, 5), ConfigError);
}

TEST(Segmentation, RoundTripIsIdentity) {
  for (std::size_t t : {1u, 5u, 32u, 33u, 100u}) {
    auto seg = Segmentation::plan(t, 8);
    Tensor x = random_tensor({t, 2, 3}, t);
    Tensor blocks = segment(x, seg);
    EXPECT_EQ(blocks.shape(), (Shape{seg.blocks, 8, 2, 3}));
    EXPECT_LT(max_abs_diff(unsegment(blocks, seg), x), 1e-12) << t;
  }
}

TEST(ContextCodec, ZeroedEncoderGivesBlockMeans) {
  Initializer init(1);
  auto p = ContextCodecParams::init(4, 2, GroupCommKind::tac, 3, 2, init);
  zero_all(p);
  Tensor h = random_tensor({9, 2, 3}, 2);
  Tensor blocks = context_segment(h, 4);
  Tensor summary = context_encode(p, blocks);
  ASSERT_EQ(summary.shape(), (Shape{blocks.dim(0), 2, 3}));
  for (std::size_t r = 0; r < blocks.dim(0); ++r)
    for (std::size_t j = 0; j < 6; ++j) {
      double m = 0;
      for (std::size_t c = 0; c < 4; ++c) m += blocks.data()[(r * 4 + c) * 6 + j];
      EXPECT_NEAR(summary.data()[r * 6 + j], m / 4, 1e-15);
    }
}

TEST(ContextCodec, ConstantInputSummarizesToConstant) {
  Initializer init(3);
  auto p = ContextCodecParams::init(8, 1, GroupCommKind::blstm, 2, 2, init);
  zero_all(p);
  Tensor h = Tensor::full({40, 3, 2}, 1.75);
  Tensor summary = context_encode(p, context_segment(h, 8));
  // Interior blocks see no padding.
  for (std::size_t r = 1; r + 1 < summary.dim(0); ++r)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(summary.data()[r * 6 + j], 1.75, 1e-15);
}

TEST(ContextCodec, ZeroedRoundTripAndConstantShift) {
  Initializer init(4);
  auto p = ContextCodecParams::init(6, 1, GroupCommKind::mhsa, 3, 2, init);
  zero_all(p);
  Tensor h = random_tensor({17, 2, 3}, 5);
  Tensor blocks = context_segment(h, 6);
  const std::size_t r = blocks.dim(0);
  Tensor back = context_decode(p, Tensor::zeros({r, 2, 3}), blocks, 17);
  ASSERT_EQ(back.shape(), h.shape());
  EXPECT_LT(max_abs_diff(back, h), 1e-12);

  std::vector<double> c{0.5, -1, 2, 3, 0, -0.25};
  Tensor shift = broadcast_to(Tensor({1, 2, 3}, c), {r, 2, 3});
  Tensor shifted = context_decode(p, shift, blocks, 17);
  for (std::size_t t = 0; t < 17; ++t)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(shifted.data()[t * 6 + j], h.data()[t * 6 + j] + c[j], 1e-12);
}

TEST(ContextCodec, DecodeRejectsMismatchedBlocks) {
  Initializer init(6);
  auto p = ContextCodecParams::init(4, 1, GroupCommKind::tac, 3, 2, init);
  Tensor blocks = context_segment(random_tensor({9, 2, 3}, 7), 4);
  EXPECT_THROW(context_decode(p, Tensor::zeros({2, 2, 3}), blocks, 9), DimensionError);
  EXPECT_THROW(context_decode(p, Tensor::zeros({blocks.dim(0), 2, 3}), blocks, 20), DimensionError);
}

TEST(ContextCodec, OutputLengthMatchesInput) {
  Initializer init(8);
  auto p = ContextCodecParams::init(4, 1, GroupCommKind::tac, 3, 2, init);
  for (std::size_t t : {1u, 4u, 11u}) {
    Tensor h = random_tensor({t, 2, 3}, t);
    Tensor blocks = context_segment(h, 4);
    EXPECT_EQ(context_decode(p, context_encode(p, blocks), blocks, t).shape(), h.shape());
  }
}

TEST(ContextCodec, GradCheckThroughSummaryAndSkipPaths) {
  for (auto kind : {GroupCommKind::tac, GroupCommKind::blstm, GroupCommKind::mhsa}) {
    Initializer init(9);
    auto p = ContextCodecParams::init(4, 1, kind, 3, 2, init);
    Tensor h = random_tensor({7, 2, 3}, 10);
    Tensor r = random_tensor({7, 2, 3}, 11);
    auto run = [&](const Tensor& in) {
      Tensor blocks = context_segment(in, 4);
      return sum_all(mul(context_decode(p, context_encode(p, blocks), blocks, 7), r));
    };
    NamedParams ps;
    p.collect(ps, "codec");
    for (const auto& c : grad_check_blocks([&] { return run(h); }, ps)) EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
    EXPECT_LT(grad_check(run, h), 1e-4) << to_string(kind);
  }
}
