#pragma once

// Model configuration, stored as INI text with keys named after the
// hyperparameter symbols (N, K, M, H_i, H_o, L_s, L_c, C, B).

#include <cstddef>
#include <iosfwd>
#include <string>

#include "gc3/errors.hpp"
#include "gc3/groupcomm.hpp"
#include "gc3/separators.hpp"

namespace gc3 {

enum class Variant { baseline, groupcomm, gc3 };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct ModelConfig {
  std::string name;
  Variant variant = Variant::gc3;
  SeparatorKind separator = SeparatorKind::dprnn;
  GroupCommKind groupcomm = GroupCommKind::tac;
  std::size_t sources = 2;  // X
  std::size_t sample_rate = 16000;
  std::size_t window = 32;
  std::size_t stride = 16;

  std::size_t N = 128;
  std::size_t K = 16;
  std::size_t M = 8;
  std::size_t H_i = 8;
  std::size_t H_o = 16;
  std::size_t H_cnn = 0;  // 0 means 4× the block input width
  std::size_t mhsa_hidden = 0;  // 0 means sized to match the BLSTM variant
  double group_overlap = 0.0;

  std::size_t L_s = 8;
  std::size_t L_c = 2;
  std::size_t C = 32;
  std::size_t B = 24;
  std::size_t tcn_stacks = 2;
  std::size_t tcn_blocks = 6;

  bool grouped() const { return variant != Variant::baseline; }
  /// Width of the tensors the separator sees (H_i for baseline, M otherwise).
  std::size_t separator_width() const { return grouped() ? M : H_i; }
  std::size_t tcn_hidden() const { return H_cnn ? H_cnn : 4 * separator_width(); }
  GroupSpec group_spec() const;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

ModelConfig parse_config(std::istream& in);
ModelConfig parse_config_text(const std::string& text);
ModelConfig load_config(const std::string& path);
std::string serialize_config(const ModelConfig& config);

}  // namespace gc3
