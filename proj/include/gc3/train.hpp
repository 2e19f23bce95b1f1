#pragma once

// Desk-scale training: Adam with global-norm clipping, a step learning-rate
// schedule, validation-based early stopping, checkpointing and evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gc3/model.hpp"
#include "gc3/synth.hpp"

namespace gc3 {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t steps_per_epoch = 50;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double decay = 0.98;
  std::size_t decay_every = 2;  // epochs
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double a2t_weight = 1.0;
  std::size_t patience = 10;  // epochs
  std::size_t valid_size = 16;
  std::uint64_t valid_seed = 1;
  std::uint64_t seed = 0;  // parameter initialization

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Reads the [train] section; other sections are ignored.
TrainConfig parse_train_config(std::istream& in);
TrainConfig load_train_config(const std::string& path);
std::string serialize_train_config(const TrainConfig& config);

/// Learning rate used throughout epoch `epoch` (0-based).
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(const NamedParams& params, double max_norm);

class Adam {
 public:
  Adam(NamedParams params, double beta1, double beta2, double eps);

  /// Applies one update from the gradients currently held by the parameters.
  void step(double lr);
  std::size_t steps() const { return t_; }

  /// Moment buffers and step counter as named tensors (prefix "train.adam.").
  NamedParams state() const;
  void load_state(const NamedParams& extras);

 private:
  NamedParams params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Tracks the best validation loss; update() returns true once `patience`
/// consecutive epochs have passed without improvement.
struct EarlyStopping {
  std::size_t patience = 10;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  bool improved(double loss) const { return loss < best; }
  bool update(double loss);
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0;
  std::optional<double> valid_loss;
  std::optional<double> si_sdr;
  double lr = 0;
};

struct UtteranceMetrics {
  std::size_t index = 0;
  double neg_snr_db = 0;
  double si_sdr_db = 0;
  double mixture_si_sdr_db = 0;
  double improvement_db = 0;
  std::vector<std::size_t> permutation;
};

struct Metrics {
  std::vector<UtteranceMetrics> utterances;
  double mean_neg_snr_db = 0;
  double mean_si_sdr_db = 0;
  double mean_mixture_si_sdr_db = 0;
  double mean_improvement_db = 0;
};

/// Maps utterance `index`'s mixture [L] to estimates [X×L].
using SeparateFn = std::function<Tensor(const Tensor& mixture, std::size_t index)>;

/// Scores utterances 0..n-1 of `spec`. With workers > 1 utterances are spread
/// over threads; results are collected in index order, so output does not
/// depend on the worker count.
Metrics evaluate_with(const SeparateFn& fn, const SynthMixSpec& spec, std::size_t n, std::size_t workers = 1);
Metrics evaluate(const SeparationModel& model, const SynthMixSpec& spec, std::size_t n, std::size_t workers = 1);
void write_metrics_csv(std::ostream& out, const Metrics& metrics);

/// Training loss for one utterance: PIT negative SNR plus the weighted A2T term.
Tensor training_loss(const SeparationModel& model, const Tensor& mixture, const Tensor& sources, double a2t_weight);

class Trainer {
 public:
  Trainer(SeparationModel model, TrainConfig config, SynthMixSpec train, SynthMixSpec valid);
  /// Restores model, optimizer and progress from a checkpoint written by save().
  static Trainer resume(const std::string& checkpoint, TrainConfig config, SynthMixSpec train, SynthMixSpec valid);

  /// Checkpoints (best.ckpt, last.ckpt) go here after every epoch; empty disables.
  void set_output_dir(std::string dir) { out_dir_ = std::move(dir); }

  /// One optimizer step; at an epoch boundary also validates, updates the
  /// learning rate and early-stopping state and writes checkpoints.
  const StepRecord& step();
  /// Steps until finished() or `max_steps` total steps (0 = no cap).
  void run(std::size_t max_steps = 0, const std::function<void(const StepRecord&)>& on_step = {});
  bool finished() const;
  bool stopped_early() const { return stopped_early_; }

  void save(const std::string& path) const;

  const SeparationModel& model() const { return model_; }
  const std::vector<StepRecord>& history() const { return history_; }
  std::size_t steps_done() const { return step_; }
  std::size_t epoch() const { return step_ / config_.steps_per_epoch; }
  double learning_rate() const { return learning_rate_at(config_, epoch()); }
  const EarlyStopping& early_stopping() const { return stopping_; }

 private:
  double validate_loss(double* si_sdr) const;

  SeparationModel model_;
  TrainConfig config_;
  SynthMixSpec train_, valid_;
  Adam adam_;
  EarlyStopping stopping_;
  std::size_t step_ = 0;
  bool stopped_early_ = false;
  std::vector<StepRecord> history_;
  std::string out_dir_;
};

/// CSV with columns epoch,step,train_loss,valid_loss,si_sdr,lr; one row per step.
void write_history_csv(std::ostream& out, const std::vector<StepRecord>& history);

}  // namespace gc3
