#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gc3/checkpoint.hpp"
#include "gc3/grad_check.hpp"
#include "gc3/model.hpp"
#include "oracle.hpp"

using namespace gc3;
using oracle::random_tensor;

namespace {

ModelConfig tiny(Variant variant, SeparatorKind sep = SeparatorKind::dprnn, GroupCommKind kind = GroupCommKind::tac) {
  ModelConfig c;
  c.variant = variant;
  c.separator = sep;
  c.groupcomm = kind;
  c.window = 8;
  c.stride = 4;
  c.N = 8;
  c.K = variant == Variant::baseline ? 1 : 2;
  c.M = c.N / c.K;
  c.H_i = variant == Variant::baseline ? 3 : c.M;
  c.H_o = 3;
  c.H_cnn = 6;
  c.L_s = 1;
  c.L_c = 1;
  c.C = 4;
  c.B = 4;
  c.tcn_stacks = 1;
  c.tcn_blocks = 2;
  return c;
}

std::vector<ModelConfig> all_tiny() {
  std::vector<ModelConfig> out;
  for (auto sep : {SeparatorKind::dprnn, SeparatorKind::tcn}) {
    out.push_back(tiny(Variant::baseline, sep));
    for (auto kind : {GroupCommKind::blstm, GroupCommKind::tac, GroupCommKind::mhsa}) {
      out.push_back(tiny(Variant::groupcomm, sep, kind));
      out.push_back(tiny(Variant::gc3, sep, kind));
    }
  }
  auto overlapped = tiny(Variant::gc3);
  overlapped.N = 12;
  overlapped.K = 3;
  overlapped.M = overlapped.H_i = 4;
  overlapped.group_overlap = 0.5;
  out.push_back(overlapped);
  return out;
}

std::string label(const ModelConfig& c) {
  return to_string(c.variant) + "/" + to_string(c.separator) + "/" + to_string(c.groupcomm) + "/overlap" +
         std::to_string(c.group_overlap);
}

double max_abs(const Tensor& t) {
  double w = 0;
  for (double v : t.data()) w = std::max(w, std::abs(v));
  return w;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gc3_pipeline_" + name);
}

}  // namespace

TEST(Pipeline, MasksAreNonnegativeWithExpectedShape) {
  for (const auto& c : all_tiny()) {
    auto m = build_model(c, 3);
    Tensor h = encode_waveform(m, random_tensor({61}, 4));
    Tensor masks = separate_features(m, h);
    EXPECT_EQ(masks.shape(), (Shape{c.sources, c.N, h.dim(1)})) << label(c);
    for (double v : masks.data()) ASSERT_GE(v, 0.0) << label(c);
  }
}

TEST(Pipeline, OutputLengthEqualsInputLength) {
  for (const auto& c : all_tiny())
    for (std::size_t length : {8u, 9u, 37u, 64u, 101u}) {
      auto m = build_model(c, 5);
      Tensor y = separate(m, random_tensor({length}, length));
      EXPECT_EQ(y.shape(), (Shape{c.sources, length})) << label(c);
    }
}

TEST(Pipeline, FrameCount) {
  ModelConfig c;
  EXPECT_EQ(frame_count(c, 64000), 3999u);
  EXPECT_EQ(frame_count(c, 32), 1u);
  EXPECT_EQ(frame_count(c, 33), 2u);
  EXPECT_THROW(frame_count(c, 31), DimensionError);
}

TEST(Pipeline, ShortInputRejected) {
  auto m = build_model(tiny(Variant::gc3), 1);
  EXPECT_THROW(separate(m, Tensor::zeros({7})), DimensionError);
}

TEST(Pipeline, ZeroWaveformEncodesToZero) {
  auto m = build_model(tiny(Variant::gc3), 1);
  EXPECT_EQ(max_abs(encode_waveform(m, Tensor::zeros({40}))), 0.0);
  EXPECT_EQ(max_abs(separate(m, Tensor::zeros({40}))), 0.0);
}

TEST(Pipeline, EncoderDecoderAdjoint) {
  auto m = build_model(tiny(Variant::gc3), 2);
  m.decoder = m.encoder;
  Tensor x = random_tensor({40}, 7);
  Tensor h = encode_waveform(m, x);
  Tensor y = random_tensor(h.shape(), 8);
  Tensor ones = Tensor::full({1, h.dim(0), h.dim(1)}, 1.0);
  auto one_source = m;
  one_source.config.sources = 1;
  Tensor back = decode_waveforms(one_source, y, ones, 40);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < h.numel(); ++i) lhs += h.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < 40; ++i) rhs += x.data()[i] * back.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Pipeline, MaskIdentityAndZero) {
  auto m = build_model(tiny(Variant::gc3), 2);
  Tensor h = encode_waveform(m, random_tensor({40}, 9));
  const std::size_t x = m.config.sources;
  Tensor ones = Tensor::full({x, h.dim(0), h.dim(1)}, 1.0);
  Tensor y = decode_waveforms(m, h, ones, 40);
  Tensor plain = reshape(slice(conv_transpose1d(h, m.decoder, m.config.stride), 1, 0, 40), {40});
  for (std::size_t s = 0; s < x; ++s)
    for (std::size_t i = 0; i < 40; ++i) EXPECT_DOUBLE_EQ(y.data()[s * 40 + i], plain.data()[i]);
  EXPECT_EQ(max_abs(decode_waveforms(m, h, Tensor::zeros(ones.shape()), 40)), 0.0);
  EXPECT_THROW(decode_waveforms(m, h, Tensor::zeros({x, h.dim(0), h.dim(1) + 1}), 40), DimensionError);
}

TEST(Pipeline, RoundTripIsFinite) {
  auto m = build_model(tiny(Variant::baseline), 2);
  Tensor h = encode_waveform(m, random_tensor({50}, 1));
  Tensor y = decode_waveforms(m, h, Tensor::full({2, h.dim(0), h.dim(1)}, 1.0), 50);
  EXPECT_EQ(y.dim(1), 50u);
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Pipeline, SameSeedSameModel) {
  for (const auto& c : all_tiny()) {
    auto a = build_model(c, 11).parameters(), b = build_model(c, 11).parameters(), d = build_model(c, 12).parameters();
    ASSERT_EQ(a.size(), b.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].first, b[i].first);
      EXPECT_TRUE(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
      if (!std::equal(a[i].second.data().begin(), a[i].second.data().end(), d[i].second.data().begin())) differs = true;
    }
    EXPECT_TRUE(differs) << label(c);
  }
}

TEST(Pipeline, ParameterNamesAreUnique) {
  for (const auto& c : all_tiny()) {
    std::set<std::string> names;
    for (const auto& [name, t] : build_model(c, 1).parameters()) EXPECT_TRUE(names.insert(name).second) << name;
  }
}

TEST(Pipeline, ParameterCountIndependentOfOverlap) {
  auto a = tiny(Variant::gc3);
  a.N = 16;
  a.K = 4;
  a.M = a.H_i = 4;
  auto b = a;
  b.group_overlap = 0.5;
  auto count = [](const ModelConfig& c) {
    std::size_t n = 0;
    for (const auto& [name, t] : build_model(c, 1).parameters()) n += t.numel();
    return n;
  };
  EXPECT_EQ(count(a), count(b));
}

TEST(Config, RoundTrip) {
  for (const auto& c : all_tiny()) EXPECT_EQ(parse_config_text(serialize_config(c)), c) << label(c);
  ModelConfig named = tiny(Variant::gc3);
  named.name = "desk";
  EXPECT_EQ(parse_config_text(serialize_config(named)), named);
}

TEST(Config, DefaultsParse) {
  auto c = parse_config_text("[model]\nvariant = gc3\n");
  EXPECT_EQ(c, ModelConfig{});
}

TEST(Config, ErrorsNameTheField) {
  auto field_of = [](const std::string& text) -> std::string {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return "";
  };
  EXPECT_EQ(field_of("[model]\nvariant = baseline\n[widths]\nK = 4\nM = 32\nH_i = 32\n"), "K");
  EXPECT_EQ(field_of("[widths]\nK = 16\nM = 7\n"), "M");
  EXPECT_EQ(field_of("[widths]\nH_i = 4\n"), "H_i");
  EXPECT_EQ(field_of("[widths]\nK = 1\nM = 128\nH_i = 128\n"), "K");
  EXPECT_EQ(field_of("[widths]\ngroup_overlap = 0.3\n"), "group_overlap");
  EXPECT_EQ(field_of("[depths]\nL_c = 0\n"), "L_c");
  EXPECT_EQ(field_of("[depths]\nC = 7\n"), "C");
  EXPECT_EQ(field_of("[depths]\nB = 5\n"), "B");
  EXPECT_EQ(field_of("[depths]\nL_s = many\n"), "L_s");
  EXPECT_EQ(field_of("[widths]\nQ = 3\n"), "Q");
  EXPECT_EQ(field_of("[model]\nvariant = huge\n"), "variant");
  EXPECT_EQ(field_of("[model]\nseparator = rnn\n"), "separator");
  EXPECT_EQ(field_of("[model]\ngroupcomm = lstm\n"), "groupcomm");
  EXPECT_EQ(field_of("[model]\nX = 0\n"), "X");
  EXPECT_THROW(build_model([] {
                 ModelConfig c;
                 c.M = 5;
                 return c;
               }(),
                           1),
               ConfigError);
}

TEST(Checkpoint, RoundTripWithExtras) {
  const auto path = temp_path("roundtrip.ckpt");
  auto c = tiny(Variant::gc3, SeparatorKind::dprnn, GroupCommKind::mhsa);
  c.name = "tiny";
  auto m = build_model(c, 21);
  NamedParams extras{{"train.step", Tensor({1}, {42.0})}, {"train.m.encoder", random_tensor({2, 3}, 1)}};
  save_checkpoint(path.string(), m, extras);
  auto ck = load_checkpoint(path.string());
  EXPECT_EQ(ck.model.config, c);
  auto a = m.parameters(), b = ck.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second.shape(), b[i].second.shape());
    EXPECT_TRUE(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
  ASSERT_EQ(ck.extras.size(), 2u);
  EXPECT_EQ(ck.extras[0].first, "train.step");
  EXPECT_EQ(ck.extras[0].second.item(), 42.0);
  EXPECT_EQ(ck.extras[1].second.shape(), (Shape{2, 3}));
  Tensor x = random_tensor({45}, 3);
  Tensor y1 = separate(m, x), y2 = separate(ck.model, x);
  EXPECT_TRUE(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadFiles) {
  const auto path = temp_path("bad.ckpt");
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), CheckpointError);
  {
    std::ofstream(path, std::ios::binary) << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(path.string()), CheckpointError);
  save_checkpoint(path.string(), build_model(tiny(Variant::gc3), 1));
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 5);
  EXPECT_THROW(load_checkpoint(path.string()), CheckpointError);
  std::filesystem::remove(path);
}

TEST(Pipeline, EndToEndGradCheckTinyGc3) {
  for (auto kind : {GroupCommKind::blstm, GroupCommKind::tac, GroupCommKind::mhsa}) {
    auto m = build_model(tiny(Variant::gc3, SeparatorKind::dprnn, kind), 31);
    Tensor x = random_tensor({40}, 32);
    Tensor w = random_tensor({2, 40}, 33);
    auto loss = [&] { return sum_all(mul(separate(m, x), w)); };
    for (const auto& b : grad_check_blocks(loss, m.parameters()))
      EXPECT_LT(b.max_rel_error, 1e-4) << to_string(kind) << " " << b.name;
  }
}
