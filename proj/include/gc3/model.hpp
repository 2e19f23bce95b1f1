#pragma once

// End-to-end separation model: waveform encoder, bottleneck or group split,
// optional context codec, separator, mask head and waveform decoder.

#include <cstdint>
#include <optional>
#include <string>

#include "gc3/config.hpp"
#include "gc3/context_codec.hpp"
#include "gc3/separators.hpp"

namespace gc3 {

struct SeparationModel {
  ModelConfig config;
  Tensor encoder;  // [N×1×window]
  Tensor decoder;  // [N×1×window]
  std::optional<LinearParams> bottleneck;  // baseline: N→H_i
  std::optional<ContextCodecParams> codec;  // gc3 only
  SeparatorParams separator;
  PReLUParams mask_act;
  LinearParams mask;  // H_i→X·N (baseline) or M→X·M shared by all groups

  /// Every trainable tensor with a stable name, in a fixed order.
  NamedParams parameters() const;
};

SeparationModel build_model(const ModelConfig& config, std::uint64_t seed);

/// Frame count for a waveform of `samples` samples: ceil((L - window) / stride) + 1.
std::size_t frame_count(const ModelConfig& config, std::size_t samples);

/// waveform [L] -> H [N×T]; the waveform is right-padded with zeros so the
/// last window ends on the last padded sample.
Tensor encode_waveform(const SeparationModel& model, const Tensor& waveform);
/// H [N×T] -> nonnegative masks [X×N×T].
Tensor separate_features(const SeparationModel& model, const Tensor& h);
/// Masked decoding of each source, trimmed to `length` samples: [X×L].
Tensor decode_waveforms(const SeparationModel& model, const Tensor& h, const Tensor& masks, std::size_t length);
/// waveform [L] -> estimates [X×L].
Tensor separate(const SeparationModel& model, const Tensor& waveform);

}  // namespace gc3
