#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gc3/checkpoint.hpp"
#include "gc3/complexity.hpp"
#include "gc3/grad_check.hpp"
#include "gc3/losses.hpp"
#include "gc3/train.hpp"
#include "gc3/wav.hpp"

using namespace gc3;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradCheckParamLimit = 50000;

struct Failure {
  int code;
  std::string message;
};

std::size_t env_workers() {
  const char* v = std::getenv("GC3_WORKERS");
  if (!v || !*v) return 1;
  try {
    return std::max<std::size_t>(1, std::stoul(v));
  } catch (const std::exception&) {
    throw Failure{kUsageError, std::string("GC3_WORKERS must be a positive integer, got '") + v + "'"};
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Failure{kRuntimeError, "cannot write " + path.string()};
}

std::string si(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1);
  if (v >= 1e9) s << v / 1e9 << "G";
  else if (v >= 1e6) s << v / 1e6 << "M";
  else if (v >= 1e3) s << v / 1e3 << "K";
  else s << std::setprecision(0) << v;
  return s.str();
}

json report_json(const ComplexityReport& r, std::size_t sample_rate) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({{"name", e.name}, {"params", e.params}, {"macs", e.macs}});
  const auto sep = subtotal(r, "separator.");
  return {{"model", r.model},
          {"samples", r.samples},
          {"seconds", static_cast<double>(r.samples) / static_cast<double>(sample_rate)},
          {"entries", entries},
          {"separator_params", sep.params},
          {"separator_macs", sep.macs},
          {"total_params", r.total_params()},
          {"total_macs", r.total_macs()}};
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string config, reference, out;
  double seconds = 4.0;
  bool json_only = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const ModelConfig config = load_config(a.config);
  if (!(a.seconds > 0)) throw ConfigError("seconds", "must be positive");
  const auto samples = static_cast<std::size_t>(std::llround(a.seconds * static_cast<double>(config.sample_rate)));
  if (samples < config.window) throw ConfigError("seconds", "input shorter than one encoder window");
  const ComplexityReport r = analyze(config, samples);
  json doc = report_json(r, config.sample_rate);
  if (!a.reference.empty()) {
    const ModelConfig ref_config = load_config(a.reference);
    const auto ref_samples =
        static_cast<std::size_t>(std::llround(a.seconds * static_cast<double>(ref_config.sample_rate)));
    const ComplexityReport ref = analyze(ref_config, ref_samples);
    doc["reference"] = {{"model", ref.model},
                        {"total_params", ref.total_params()},
                        {"total_macs", ref.total_macs()},
                        {"params_percent", 100.0 * r.total_params() / ref.total_params()},
                        {"macs_percent", 100.0 * r.total_macs() / ref.total_macs()}};
  }
  if (a.json_only) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::printf("%-32s %12s %16s\n", "layer", "params", "MACs");
    for (const auto& e : r.entries)
      std::printf("%-32s %12llu %16llu\n", e.name.c_str(), static_cast<unsigned long long>(e.params),
                  static_cast<unsigned long long>(e.macs));
    std::printf("%-32s %12llu %16llu\n", "total", static_cast<unsigned long long>(r.total_params()),
                static_cast<unsigned long long>(r.total_macs()));
    std::printf("\n%s: %s parameters, %s MACs on %.3g s (%zu samples)\n", r.model.empty() ? a.config.c_str() : r.model.c_str(),
                si(r.total_params()).c_str(), si(r.total_macs()).c_str(), a.seconds, samples);
    if (doc.contains("reference")) {
      const auto& ref = doc["reference"];
      std::printf("vs %s: size %s (%.1f%%), MACs %s (%.1f%%)\n", ref["model"].get<std::string>().c_str(),
                  si(r.total_params()).c_str(), ref["params_percent"].get<double>(), si(r.total_macs()).c_str(),
                  ref["macs_percent"].get<double>());
    }
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "analyze.json", doc.dump(2) + "\n");
    std::ostringstream csv;
    csv << "name,params,macs\n";
    for (const auto& e : r.entries) csv << e.name << "," << e.params << "," << e.macs << "\n";
    csv << "total," << r.total_params() << "," << r.total_macs() << "\n";
    write_text(fs::path(a.out) / "analyze.csv", csv.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string config, loss = "training", corrupt, json_path;
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  std::size_t samples = 0, coords = 0;
  bool allow_large = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const ModelConfig config = load_config(a.config);
  const auto params = count_params(config).total_params();
  if (params > kGradCheckParamLimit && !a.allow_large) {
    throw Failure{kUsageError, "model has " + std::to_string(params) + " parameters (limit " +
                                   std::to_string(kGradCheckParamLimit) + "); pass --allow-large to check it anyway"};
  }
  const std::size_t samples = a.samples ? a.samples : config.window + 8 * config.stride;
  SeparationModel model = build_model(config, a.seed);

  SynthMixSpec spec;
  spec.sample_rate = config.sample_rate;
  spec.duration = static_cast<double>(samples) / static_cast<double>(config.sample_rate);
  spec.seed = a.seed;
  const MixBatch batch = make_batch(spec, 1);
  const Tensor mix = select(batch.mixtures, 0, 0);
  Tensor refs = select(batch.sources, 0, 0);
  if (config.sources != 2) refs = stack(std::vector<Tensor>(config.sources, select(refs, 0, 0)), 0);

  std::function<Tensor()> loss;
  if (a.loss == "training") {
    loss = [&] { return training_loss(model, mix, refs, 1.0); };
  } else if (a.loss == "linear") {
    Initializer init(a.seed + 1);
    const Tensor weights = init.uniform({config.sources, mix.dim(0)}, 1.0).detach();
    loss = [&, weights] { return sum_all(mul(separate(model, mix), weights)); };
  } else {
    throw ConfigError("loss", "expected training or linear, got '" + a.loss + "'");
  }

  if (!(a.epsilon > 0)) throw ConfigError("epsilon", "must be positive");
  GradCheckOptions options;
  options.epsilon = a.epsilon;
  options.max_coords_per_block = a.coords;
  if (!a.corrupt.empty()) {
    options.tamper = [&](const std::string& name, std::vector<double>& g) {
      if (name.find(a.corrupt) == std::string::npos) return;
      for (auto& v : g) v = v * 1.01 + 1e-3;
    };
  }
  const auto started = std::chrono::steady_clock::now();
  const auto checks = grad_check_blocks(loss, model.parameters(), options);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  json blocks = json::array();
  std::vector<std::string> failed;
  double worst = 0;
  for (const auto& c : checks) {
    const bool ok = c.max_rel_error < kGradTolerance;
    if (!ok) failed.push_back(c.name);
    worst = std::max(worst, c.max_rel_error);
    std::printf("%-44s %6zu  %.3e  %s\n", c.name.c_str(), c.coordinates, c.max_rel_error, ok ? "ok" : "FAIL");
    blocks.push_back({{"name", c.name}, {"coordinates", c.coordinates}, {"max_rel_error", c.max_rel_error}, {"pass", ok}});
  }
  std::printf("%zu blocks, max relative error %.3e, %.1f s\n", checks.size(), worst, elapsed);
  if (!a.json_path.empty()) {
    json doc{{"config", a.config},       {"seed", a.seed},       {"samples", samples},
             {"loss", a.loss},           {"epsilon", a.epsilon},  {"tolerance", kGradTolerance}, {"max_rel_error", worst},
             {"pass", failed.empty()},   {"seconds", elapsed},   {"blocks", blocks}};
    write_text(a.json_path, doc.dump(2) + "\n");
  }
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    throw Failure{kRuntimeError, "gradient check failed for: " + list};
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, train_config, out;
  std::size_t max_steps = 0;
  bool resume = false, quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const ModelConfig config = load_config(a.config);
  const TrainConfig tc = load_train_config(a.train_config);
  const SynthMixSpec data = load_mix_spec(a.train_config);
  SynthMixSpec valid = data;
  valid.seed = tc.valid_seed;
  fs::create_directories(a.out);
  const fs::path out(a.out), last = out / "last.ckpt";

  std::optional<Trainer> trainer;
  if (a.resume && fs::exists(last)) {
    trainer.emplace(Trainer::resume(last.string(), tc, data, valid));
    if (!(trainer->model().config == config)) {
      throw ConfigError("config", "checkpoint " + last.string() + " was trained with a different model config");
    }
    if (!a.quiet) std::fprintf(stderr, "resumed at step %zu\n", trainer->steps_done());
  } else {
    trainer.emplace(build_model(config, tc.seed), tc, data, valid);
  }
  trainer->set_output_dir(out.string());
  write_text(out / "model.ini", serialize_config(config));
  write_text(out / "train.ini", serialize_train_config(tc) + "\n" + serialize_mix_spec(data));

  const auto started = std::chrono::steady_clock::now();
  auto log = [&](const StepRecord& r) {
    if (a.quiet || !r.valid_loss) return;
    std::fprintf(stderr, "epoch %3zu  step %6zu  train %8.3f  valid %8.3f  si-sdr %7.3f dB  lr %.3e\n", r.epoch,
                 r.step + 1, r.train_loss, *r.valid_loss, *r.si_sdr, r.lr);
  };
  auto write_history = [&] {
    std::ostringstream csv;
    write_history_csv(csv, trainer->history());
    write_text(out / "metrics.csv", csv.str());
  };
  try {
    trainer->run(a.max_steps, log);
  } catch (const TrainingDiverged& e) {
    write_history();
    throw Failure{kRuntimeError, std::string(e.what()) + "; last good checkpoint kept at " + last.string()};
  }
  write_history();
  trainer->save((out / "final.ckpt").string());
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json summary{{"steps", trainer->steps_done()},
               {"epochs", trainer->epoch()},
               {"stopped_early", trainer->stopped_early()},
               {"best_valid_loss", trainer->early_stopping().best},
               {"seconds", elapsed}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SeparateArgs {
  std::string checkpoint, input, out;
};

int cmd_separate(const SeparateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Wav in = read_wav(a.input);
  const auto& c = ck.model.config;
  if (in.sample_rate != c.sample_rate) {
    throw Failure{kUsageError, "input is " + std::to_string(in.sample_rate) + " Hz; the model expects " +
                                   std::to_string(c.sample_rate) + " Hz mono 16-bit PCM"};
  }
  if (in.samples.size() < c.window) {
    throw Failure{kUsageError, "input has " + std::to_string(in.samples.size()) + " samples; need at least " +
                                   std::to_string(c.window)};
  }
  const std::size_t n = in.samples.size();
  const Tensor est = separate(ck.model, Tensor({n}, in.samples));
  fs::create_directories(a.out);
  json files = json::array();
  for (std::size_t s = 0; s < c.sources; ++s) {
    Wav w{in.sample_rate, std::vector<double>(est.data().begin() + s * n, est.data().begin() + (s + 1) * n)};
    double peak = 0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    const bool normalized = peak >= 32767.0 / 32768.0;
    if (normalized) {
      for (auto& v : w.samples) v *= 0.999 / peak;
      std::fprintf(stderr, "source %zu peaked at %.3f; rescaled to avoid clipping\n", s + 1, peak);
    }
    const fs::path path = fs::path(a.out) / ("source" + std::to_string(s + 1) + ".wav");
    write_wav(path.string(), w);
    files.push_back({{"path", path.string()}, {"samples", n}, {"peak", peak}, {"normalized", normalized}});
  }
  std::cout << json{{"input", a.input}, {"sample_rate", in.sample_rate}, {"outputs", files}}.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, spec, out;
  std::size_t n = 32;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const SynthMixSpec spec = load_mix_spec(a.spec);
  if (a.n == 0) throw ConfigError("n", "must be positive");
  const Metrics m = evaluate(ck.model, spec, a.n, env_workers());
  json summary{{"checkpoint", a.checkpoint},
               {"utterances", a.n},
               {"seed", spec.seed},
               {"mean_neg_snr_db", m.mean_neg_snr_db},
               {"mean_si_sdr_db", m.mean_si_sdr_db},
               {"mean_mixture_si_sdr_db", m.mean_mixture_si_sdr_db},
               {"mean_si_sdr_improvement_db", m.mean_improvement_db}};
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ostringstream csv;
    write_metrics_csv(csv, m);
    write_text(fs::path(a.out) / "eval.csv", csv.str());
    write_text(fs::path(a.out) / "eval.json", summary.dump(2) + "\n");
  } else {
    write_metrics_csv(std::cerr, m);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped-communication separation models: complexity analysis, training and inference"};
  app.require_subcommand(1);

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Parameter and MAC counts for a model config");
  analyze_cmd->add_option("--config", analyze_args.config, "Model config (INI)")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--seconds", analyze_args.seconds, "Input length in seconds")->capture_default_str();
  analyze_cmd->add_option("--reference", analyze_args.reference, "Config to report ratios against")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", analyze_args.out, "Directory for analyze.json and analyze.csv");
  analyze_cmd->add_flag("--json", analyze_args.json_only, "Print the JSON report instead of the table");

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--config", grad_args.config, "Model config (INI)")->required()->check(CLI::ExistingFile);
  grad_cmd->add_option("--seed", grad_args.seed, "Seed for parameters and data")->capture_default_str();
  grad_cmd->add_option("--samples", grad_args.samples, "Waveform length (default window + 8 strides)");
  grad_cmd->add_option("--coords", grad_args.coords, "Coordinates probed per block (0 = all)")->capture_default_str();
  grad_cmd->add_option("--loss", grad_args.loss, "training or linear")->capture_default_str();
  grad_cmd->add_option("--epsilon", grad_args.epsilon, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--corrupt", grad_args.corrupt, "Perturb analytic gradients of blocks containing this name");
  grad_cmd->add_option("--json", grad_args.json_path, "Write the per-block report here");
  grad_cmd->add_flag("--allow-large", grad_args.allow_large, "Check models above 50K parameters");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train on synthetic mixtures");
  train_cmd->add_option("--config", train_args.config, "Model config (INI)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train-config", train_args.train_config, "Training config with [train] and [data]")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--max-steps", train_args.max_steps, "Stop after this many total steps (0 = no cap)");
  train_cmd->add_flag("--resume", train_args.resume, "Continue from <out>/last.ckpt if present");
  train_cmd->add_flag("-q,--quiet", train_args.quiet, "No progress output");

  SeparateArgs sep_args;
  auto* sep_cmd = app.add_subcommand("separate", "Separate a mono 16-bit PCM WAV file");
  sep_cmd->add_option("--checkpoint", sep_args.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--input", sep_args.input, "Input WAV")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--out", sep_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "SI-SDR evaluation on synthetic mixtures");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--spec", eval_args.spec, "Data spec with a [data] section")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--n", eval_args.n, "Number of utterances")->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "Directory for eval.csv and eval.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(analyze_args);
    if (*grad_cmd) return cmd_gradcheck(grad_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*sep_cmd) return cmd_separate(sep_args);
    if (*eval_cmd) return cmd_eval(eval_args);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsageError;
  } catch (const WavError& e) {
    std::fprintf(stderr, "wav error: %s\n", e.what());
    return kUsageError;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kUsageError;
}
