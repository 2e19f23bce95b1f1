#include "gc3/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gc3 {

namespace {

std::uint32_t u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Wav read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError("'" + path + "' is not a RIFF/WAVE file");
  }
  Wav wav;
  bool have_format = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw WavError("'" + path + "' has a truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw WavError("'" + path + "' has a malformed fmt chunk");
      const std::uint16_t format = u16(bytes.data() + body), channels = u16(bytes.data() + body + 2);
      const std::uint16_t bits = u16(bytes.data() + body + 14);
      if (format != 1) throw WavError("'" + path + "': expected PCM format (1), got " + std::to_string(format));
      if (channels != 1) throw WavError("'" + path + "': expected mono, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw WavError("'" + path + "': expected 16-bit samples, got " + std::to_string(bits));
      wav.sample_rate = u32(bytes.data() + body + 4);
      have_format = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_format) throw WavError("'" + path + "': data chunk before fmt chunk");
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(u16(bytes.data() + body + 2 * i));
        wav.samples[i] = v / 32768.0;
      }
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_format || !have_data) throw WavError("'" + path + "' lacks a fmt or data chunk");
  return wav;
}

void write_wav(const std::string& path, const Wav& wav) {
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, 1);
  put16(s, 1);
  put32(s, wav.sample_rate);
  put32(s, wav.sample_rate * 2);
  put16(s, 2);
  put16(s, 16);
  s += "data";
  put32(s, data_bytes);
  for (double x : wav.samples) {
    const double v = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(s.data(), static_cast<std::streamsize>(s.size()))) throw WavError("cannot write '" + path + "'");
}

}  // namespace gc3
