#pragma once

// RIFF/WAVE reading and writing, restricted to mono 16-bit PCM.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gc3 {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Wav {
  std::uint32_t sample_rate = 0;
  std::vector<double> samples;  // in [-1, 1)
};

Wav read_wav(const std::string& path);

/// Samples are scaled by 32768, rounded and clamped to the int16 range.
void write_wav(const std::string& path, const Wav& wav);

}  // namespace gc3
