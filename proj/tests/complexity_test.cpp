#include <gtest/gtest.h>

#include <filesystem>

#include "gc3/complexity.hpp"
#include "gc3/model.hpp"

using namespace gc3;

namespace {

constexpr std::size_t kFourSeconds = 64000;

ModelConfig preset(const std::string& file) { return load_config(std::string(GC3_CONFIG_DIR) + "/" + file); }

std::uint64_t built_numel(const ModelConfig& c) {
  std::uint64_t n = 0;
  for (const auto& [name, t] : build_model(c, 1).parameters()) n += t.numel();
  return n;
}

void expect_within(double value, double target, double rel) {
  EXPECT_LE(std::abs(value - target), rel * target) << value << " vs " << target;
}

}  // namespace

TEST(Complexity, LinearHandCount) {
  auto e = count_linear("fc", 5, 4, 10);
  EXPECT_EQ(e.macs, 200u);
  EXPECT_EQ(e.params, 24u);
}

TEST(Complexity, TotalsAreSumsOfEntries) {
  auto r = analyze(preset("gc3_tac_k16.ini"), kFourSeconds);
  std::uint64_t p = 0, m = 0;
  for (const auto& e : r.entries) {
    p += e.params;
    m += e.macs;
  }
  EXPECT_EQ(r.total_params(), p);
  EXPECT_EQ(r.total_macs(), m);
  EXPECT_EQ(ComplexityReport{}.total_params(), 0u);
  EXPECT_EQ(ComplexityReport{}.total_macs(), 0u);
}

TEST(Complexity, ParamsMatchBuiltModelForEveryPreset) {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(GC3_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    const auto c = load_config(entry.path().string());
    EXPECT_EQ(count_params(c).total_params(), built_numel(c)) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 25u);
}

TEST(Complexity, ParamsIndependentOfLength) {
  const auto c = preset("gc3_k16_n128_ls8_lc2.ini");
  EXPECT_EQ(analyze(c, 32).total_params(), analyze(c, kFourSeconds).total_params());
}

TEST(Complexity, ZeroLayerSeparatorCountsNothing) {
  auto c = preset("groupcomm_k16_n128_ls6.ini");
  c.L_s = 0;
  auto sep = subtotal(analyze(c, kFourSeconds), "separator.");
  EXPECT_EQ(sep.params, 0u);
  EXPECT_EQ(sep.macs, 0u);
  EXPECT_EQ(count_params(c).total_params(), built_numel(c));
}

TEST(Complexity, TableSizes) {
  const double base = count_params(preset("dprnn_baseline.ini")).total_params();
  expect_within(base, 2.6e6, 0.05);
  const double gc = count_params(preset("groupcomm_k16_n128_ls6.ini")).total_params();
  const double blstm = count_params(preset("gc3_k16_n128_ls8_lc2.ini")).total_params();
  const double tac = count_params(preset("gc3_tac_k16.ini")).total_params();
  const double k32 = count_params(preset("gc3_k32_n128_ls14_lc2.ini")).total_params();
  expect_within(gc, 73.5e3, 0.05);
  expect_within(blstm, 124.1e3, 0.05);
  expect_within(tac, 123.8e3, 0.05);
  expect_within(k32, 57.1e3, 0.05);
  EXPECT_NEAR(100 * tac / base, 4.7, 0.5);
  EXPECT_NEAR(100 * gc / base, 2.8, 0.5);
  EXPECT_NEAR(100 * k32 / base, 2.2, 0.5);
}

TEST(Complexity, TableMacs) {
  const double base = count_macs(preset("dprnn_baseline.ini"), kFourSeconds).total_macs();
  const double tac = count_macs(preset("gc3_tac_k16.ini"), kFourSeconds).total_macs();
  expect_within(base, 22.1e9, 0.15);
  expect_within(tac, 3.9e9, 0.15);
  expect_within(count_macs(preset("gc3_k16_n128_ls8_lc2.ini"), kFourSeconds).total_macs(), 5.4e9, 0.15);
  expect_within(count_macs(preset("gc3_k32_n128_ls14_lc2.ini"), kFourSeconds).total_macs(), 3.6e9, 0.15);
  EXPECT_NEAR(100 * tac / base, 17.6, 3.0);
}

TEST(Complexity, GroupOverlap) {
  const auto r0 = analyze(preset("gc3_tac_k16.ini"), kFourSeconds);
  const auto r25 = analyze(preset("gc3_tac_k16_overlap25.ini"), kFourSeconds);
  const auto r50 = analyze(preset("gc3_tac_k16_overlap50.ini"), kFourSeconds);
  EXPECT_EQ(r0.total_params(), r25.total_params());
  EXPECT_EQ(r0.total_params(), r50.total_params());
  EXPECT_LT(r0.total_macs(), r25.total_macs());
  EXPECT_LT(r25.total_macs(), r50.total_macs());
  const double ratio = double(r50.total_macs()) / r0.total_macs();
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 2.0);
}

TEST(Complexity, TcnRatios) {
  const auto tcn = analyze(preset("tcn_baseline.ini"), kFourSeconds);
  const auto gc3 = analyze(preset("gc3_tcn.ini"), kFourSeconds);
  const double p = double(gc3.total_params()) / tcn.total_params();
  const double m = double(gc3.total_macs()) / tcn.total_macs();
  EXPECT_GE(p, 0.05);
  EXPECT_LE(p, 0.12);
  EXPECT_GE(m, 0.25);
  EXPECT_LE(m, 0.42);
}

TEST(Complexity, FrameWiseCountsScaleWithLength) {
  const auto c = preset("groupcomm_k16_n128_ls6.ini");
  const double two = subtotal(analyze(c, kFourSeconds / 2), "separator.").macs;
  const double four = subtotal(analyze(c, kFourSeconds), "separator.").macs;
  EXPECT_NEAR(two / four, 0.5, 0.02);
}

TEST(Complexity, ContextCodecShrinksSeparator) {
  auto grouped = preset("gc3_k16_n128_ls8_lc2.ini");
  auto plain = grouped;
  plain.variant = Variant::groupcomm;
  plain.L_c = 0;
  const double ratio = double(subtotal(analyze(plain, kFourSeconds), "separator.").macs) /
                       subtotal(analyze(grouped, kFourSeconds), "separator.").macs;
  EXPECT_NEAR(ratio, grouped.C / 2.0, 0.1 * grouped.C / 2.0);
}
