#pragma once

// Synthetic two-source mixtures for desk-scale training and evaluation.
//
// Source A is a sum of three sinusoids at 200-1000 Hz. Source B is a sum of
// amplitude-modulated sinusoids with carriers at 2000-4000 Hz (capped at 45%
// of the sample rate). The level ratio between the two sources is drawn from
// [snr_low, snr_high] dB with a random choice of which source is louder.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "gc3/tensor.hpp"

namespace gc3 {

struct SynthMixSpec {
  std::size_t sample_rate = 8000;
  double duration = 0.5;  // seconds
  double snr_low = 0.0;
  double snr_high = 5.0;
  bool noise = false;
  double noise_low = 10.0;  // dB below the source sum
  double noise_high = 20.0;
  std::uint64_t seed = 0;

  std::size_t samples() const;
  /// Throws ConfigError naming the first offending field.
  void validate() const;
  bool operator==(const SynthMixSpec&) const = default;
};

struct MixBatch {
  Tensor mixtures;  // [n×L]
  Tensor sources;   // [n×2×L]
  Tensor noise;     // [n×L], zero when noise is off
};

/// Utterances first .. first+n-1; each depends only on (seed, index).
MixBatch make_batch(const SynthMixSpec& spec, std::size_t n, std::size_t first = 0);

/// Reads a [data] section; other sections are ignored.
SynthMixSpec parse_mix_spec(std::istream& in);
SynthMixSpec load_mix_spec(const std::string& path);
std::string serialize_mix_spec(const SynthMixSpec& spec);

}  // namespace gc3
