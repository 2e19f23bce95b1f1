#include "gc3/synth.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "gc3/errors.hpp"

namespace gc3 {

namespace pt = boost::property_tree;

std::size_t SynthMixSpec::samples() const {
  return static_cast<std::size_t>(std::llround(duration * static_cast<double>(sample_rate)));
}

void SynthMixSpec::validate() const {
  if (sample_rate < 4000) throw ConfigError("sample_rate", "must be at least 4000 Hz to hold the low source");
  if (!(duration > 0.0) || samples() < 32) throw ConfigError("duration", "too short");
  if (!(snr_low >= 0.0) || !(snr_high >= snr_low)) throw ConfigError("snr_high", "need 0 <= snr_low <= snr_high");
  if (noise && (!(noise_low > 0.0) || !(noise_high >= noise_low))) {
    throw ConfigError("noise_high", "need 0 < noise_low <= noise_high");
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLevel = 0.1;  // RMS of the reference source

double energy(const std::vector<double>& x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

void scale_to_energy(std::vector<double>& x, double target) {
  const double g = std::sqrt(target / energy(x));
  for (auto& v : x) v *= g;
}

struct Utterance {
  std::vector<double> a, b, noise;
};

Utterance synthesize(const SynthMixSpec& spec, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const std::size_t n = spec.samples();
  const double fs = static_cast<double>(spec.sample_rate);
  Utterance u{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};

  for (int k = 0; k < 3; ++k) {
    const double f = uniform(200.0, 1000.0), phase = uniform(0.0, kTwoPi), amp = uniform(0.2, 1.0);
    for (std::size_t t = 0; t < n; ++t) u.a[t] += amp * std::sin(kTwoPi * f * t / fs + phase);
  }
  const double carrier_high = std::min(4000.0, 0.45 * fs);
  for (int k = 0; k < 2; ++k) {
    const double fc = uniform(2000.0, carrier_high), phase = uniform(0.0, kTwoPi), amp = uniform(0.2, 1.0);
    const double fm = uniform(2.0, 10.0), mphase = uniform(0.0, kTwoPi), depth = uniform(0.3, 0.9);
    for (std::size_t t = 0; t < n; ++t) {
      const double env = 1.0 + depth * std::sin(kTwoPi * fm * t / fs + mphase);
      u.b[t] += amp * env * std::sin(kTwoPi * fc * t / fs + phase);
    }
  }
  const double ratio_db = uniform(spec.snr_low, spec.snr_high);
  const bool a_louder = uniform(0.0, 1.0) < 0.5;
  const double ref_energy = kLevel * kLevel * static_cast<double>(n);
  const double quiet_energy = ref_energy * std::pow(10.0, -ratio_db / 10.0);
  scale_to_energy(u.a, a_louder ? ref_energy : quiet_energy);
  scale_to_energy(u.b, a_louder ? quiet_energy : ref_energy);

  if (spec.noise) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : u.noise) v = gauss(rng);
    std::vector<double> sum(n);
    for (std::size_t t = 0; t < n; ++t) sum[t] = u.a[t] + u.b[t];
    scale_to_energy(u.noise, energy(sum) * std::pow(10.0, -uniform(spec.noise_low, spec.noise_high) / 10.0));
  }
  return u;
}

}  // namespace

MixBatch make_batch(const SynthMixSpec& spec, std::size_t n, std::size_t first) {
  spec.validate();
  const std::size_t len = spec.samples();
  std::vector<double> mix(n * len), src(n * 2 * len), noise(n * len);
  for (std::size_t i = 0; i < n; ++i) {
    const Utterance u = synthesize(spec, first + i);
    for (std::size_t t = 0; t < len; ++t) {
      src[(2 * i) * len + t] = u.a[t];
      src[(2 * i + 1) * len + t] = u.b[t];
      noise[i * len + t] = u.noise[t];
      mix[i * len + t] = u.a[t] + u.b[t] + u.noise[t];
    }
  }
  return {Tensor({n, len}, std::move(mix)), Tensor({n, 2, len}, std::move(src)), Tensor({n, len}, std::move(noise))};
}

namespace {

double read_real(const pt::ptree& tree, const std::string& key, double fallback) {
  auto v = tree.get_optional<std::string>("data." + key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + *v + "'");
  }
}

std::uint64_t read_uint(const pt::ptree& tree, const std::string& key, std::uint64_t fallback) {
  auto v = tree.get_optional<std::string>("data." + key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto n = std::stoull(*v, &used);
    if (used != v->size() || v->front() == '-') throw std::invalid_argument("");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a non-negative integer, got '" + *v + "'");
  }
}

}  // namespace

SynthMixSpec parse_mix_spec(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", e.message() + " at line " + std::to_string(e.line()));
  }
  SynthMixSpec s;
  if (auto data = tree.get_child_optional("data")) {
    for (const auto& [key, value] : *data) {
      static const std::set<std::string> known{"sample_rate", "duration", "snr_low",    "snr_high",
                                               "noise",       "noise_low", "noise_high", "seed"};
      if (!known.count(key)) throw ConfigError(key, "unknown key in [data]");
    }
  }
  s.sample_rate = read_uint(tree, "sample_rate", s.sample_rate);
  s.duration = read_real(tree, "duration", s.duration);
  s.snr_low = read_real(tree, "snr_low", s.snr_low);
  s.snr_high = read_real(tree, "snr_high", s.snr_high);
  if (auto v = tree.get_optional<std::string>("data.noise")) {
    if (*v == "true" || *v == "1") s.noise = true;
    else if (*v == "false" || *v == "0") s.noise = false;
    else throw ConfigError("noise", "expected true or false, got '" + *v + "'");
  }
  s.noise_low = read_real(tree, "noise_low", s.noise_low);
  s.noise_high = read_real(tree, "noise_high", s.noise_high);
  s.seed = read_uint(tree, "seed", s.seed);
  s.validate();
  return s;
}

SynthMixSpec load_mix_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("spec", "cannot open '" + path + "'");
  return parse_mix_spec(in);
}

std::string serialize_mix_spec(const SynthMixSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "[data]\nsample_rate = " << s.sample_rate << "\nduration = " << s.duration << "\nsnr_low = " << s.snr_low
      << "\nsnr_high = " << s.snr_high << "\nnoise = " << (s.noise ? "true" : "false")
      << "\nnoise_low = " << s.noise_low << "\nnoise_high = " << s.noise_high << "\nseed = " << s.seed << "\n";
  return out.str();
}

}  // namespace gc3
