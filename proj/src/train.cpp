#include "gc3/train.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "gc3/checkpoint.hpp"
#include "gc3/errors.hpp"
#include "gc3/losses.hpp"

namespace gc3 {

namespace pt = boost::property_tree;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs", "must be positive");
  if (steps_per_epoch == 0) throw ConfigError("steps_per_epoch", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate", "must be non-negative");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay", "must be in (0, 1]");
  if (decay_every == 0) throw ConfigError("decay_every", "must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be positive");
  if (!(a2t_weight >= 0.0)) throw ConfigError("a2t_weight", "must be non-negative");
  if (patience == 0) throw ConfigError("patience", "must be at least 1");
  if (valid_size == 0) throw ConfigError("valid_size", "must be positive");
}

namespace {

const std::set<std::string> kTrainKeys{"epochs",     "steps_per_epoch", "batch_size", "learning_rate", "decay",
                                       "decay_every", "clip_norm",      "beta1",      "beta2",         "adam_eps",
                                       "a2t_weight", "patience",        "valid_size", "valid_seed",    "seed"};

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& value) {
  auto v = tree.get_optional<std::string>("train." + key);
  if (!v) return;
  try {
    std::size_t used = 0;
    if constexpr (std::is_floating_point_v<T>) {
      value = std::stod(*v, &used);
    } else {
      if (v->front() == '-') throw std::invalid_argument("");
      value = static_cast<T>(std::stoull(*v, &used));
    }
    if (used != v->size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError(key, "cannot parse '" + *v + "'");
  }
}

}  // namespace

TrainConfig parse_train_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", e.message() + " at line " + std::to_string(e.line()));
  }
  if (auto section = tree.get_child_optional("train"))
    for (const auto& [key, value] : *section)
      if (!kTrainKeys.count(key)) throw ConfigError(key, "unknown key in [train]");
  TrainConfig c;
  read(tree, "epochs", c.epochs);
  read(tree, "steps_per_epoch", c.steps_per_epoch);
  read(tree, "batch_size", c.batch_size);
  read(tree, "learning_rate", c.learning_rate);
  read(tree, "decay", c.decay);
  read(tree, "decay_every", c.decay_every);
  read(tree, "clip_norm", c.clip_norm);
  read(tree, "beta1", c.beta1);
  read(tree, "beta2", c.beta2);
  read(tree, "adam_eps", c.adam_eps);
  read(tree, "a2t_weight", c.a2t_weight);
  read(tree, "patience", c.patience);
  read(tree, "valid_size", c.valid_size);
  read(tree, "valid_seed", c.valid_seed);
  read(tree, "seed", c.seed);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("train_config", "cannot open '" + path + "'");
  return parse_train_config(in);
}

std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "[train]\nepochs = " << c.epochs << "\nsteps_per_epoch = " << c.steps_per_epoch
      << "\nbatch_size = " << c.batch_size << "\nlearning_rate = " << c.learning_rate << "\ndecay = " << c.decay
      << "\ndecay_every = " << c.decay_every << "\nclip_norm = " << c.clip_norm << "\nbeta1 = " << c.beta1
      << "\nbeta2 = " << c.beta2 << "\nadam_eps = " << c.adam_eps << "\na2t_weight = " << c.a2t_weight
      << "\npatience = " << c.patience << "\nvalid_size = " << c.valid_size << "\nvalid_seed = " << c.valid_seed
      << "\nseed = " << c.seed << "\n";
  return out.str();
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate * std::pow(config.decay, static_cast<double>(epoch / config.decay_every));
}

double clip_gradients(const NamedParams& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params)
    if (p.has_grad())
      for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& [name, p] : params) {
      Tensor t = p;
      if (t.has_grad())
        for (auto& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

Adam::Adam(NamedParams params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].second;
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

NamedParams Adam::state() const {
  NamedParams out;
  out.emplace_back("train.adam.t", Tensor({1}, {static_cast<double>(t_)}));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& shape = params_[k].second.shape();
    out.emplace_back("train.adam.m." + params_[k].first, Tensor(shape, m_[k]));
    out.emplace_back("train.adam.v." + params_[k].first, Tensor(shape, v_[k]));
  }
  return out;
}

void Adam::load_state(const NamedParams& extras) {
  std::map<std::string, Tensor> byname(extras.begin(), extras.end());
  auto fetch = [&](const std::string& name, std::size_t n) -> std::vector<double> {
    auto it = byname.find(name);
    if (it == byname.end()) throw CheckpointError("missing optimizer state '" + name + "'");
    if (it->second.numel() != n) throw CheckpointError("optimizer state '" + name + "' has the wrong size");
    return {it->second.data().begin(), it->second.data().end()};
  };
  t_ = static_cast<std::size_t>(fetch("train.adam.t", 1)[0]);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    m_[k] = fetch("train.adam.m." + params_[k].first, params_[k].second.numel());
    v_[k] = fetch("train.adam.v." + params_[k].first, params_[k].second.numel());
  }
}

bool EarlyStopping::update(double loss) {
  if (improved(loss)) {
    best = loss;
    bad_epochs = 0;
  } else {
    ++bad_epochs;
  }
  return bad_epochs >= patience;
}

namespace {

UtteranceMetrics score_utterance(const Tensor& est, const Tensor& refs, const Tensor& mix, std::size_t index) {
  const std::size_t x = refs.dim(0), len = refs.dim(1);
  if (est.shape() != refs.shape()) {
    throw DimensionError("evaluate: estimates " + shape_str(est.shape()) + " vs references " + shape_str(refs.shape()));
  }
  UtteranceMetrics m;
  m.index = index;
  m.neg_snr_db = pit_loss(est, refs).loss.item();
  auto row = [&](const Tensor& t, std::size_t i) { return t.data().subspan(i * len, len); };
  std::vector<double> pair(x * x);
  for (std::size_t i = 0; i < x; ++i)
    for (std::size_t j = 0; j < x; ++j) pair[i * x + j] = si_sdr(row(est, i), row(refs, j));
  std::vector<std::size_t> perm(x);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double v = 0;
    for (std::size_t i = 0; i < x; ++i) v += pair[i * x + perm[i]];
    if (v > best) {
      best = v;
      m.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  // Sum in reference order so a mixture-as-estimate scores exactly 0 dB improvement.
  std::vector<std::size_t> inverse(x);
  for (std::size_t i = 0; i < x; ++i) inverse[m.permutation[i]] = i;
  double est_sum = 0, mix_sum = 0;
  for (std::size_t j = 0; j < x; ++j) {
    est_sum += pair[inverse[j] * x + j];
    mix_sum += si_sdr(mix.data(), row(refs, j));
  }
  m.si_sdr_db = est_sum / static_cast<double>(x);
  m.mixture_si_sdr_db = mix_sum / static_cast<double>(x);
  m.improvement_db = m.si_sdr_db - m.mixture_si_sdr_db;
  return m;
}

}  // namespace

Metrics evaluate_with(const SeparateFn& fn, const SynthMixSpec& spec, std::size_t n, std::size_t workers) {
  if (n == 0) throw ConfigError("n", "must be positive");
  const MixBatch batch = make_batch(spec, n);
  std::vector<UtteranceMetrics> slots(n);
  auto work = [&](std::size_t u) {
    const Tensor mix = select(batch.mixtures, 0, u), refs = select(batch.sources, 0, u);
    slots[u] = score_utterance(fn(mix, u), refs, mix, u);
  };
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    for (std::size_t u = 0; u < n; ++u) work(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t u; (u = next++) < n;) {
          try {
            work(u);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  Metrics out;
  for (auto& m : slots) {
    out.mean_neg_snr_db += m.neg_snr_db;
    out.mean_si_sdr_db += m.si_sdr_db;
    out.mean_mixture_si_sdr_db += m.mixture_si_sdr_db;
    out.mean_improvement_db += m.improvement_db;
    out.utterances.push_back(std::move(m));
  }
  out.mean_neg_snr_db /= static_cast<double>(n);
  out.mean_si_sdr_db /= static_cast<double>(n);
  out.mean_mixture_si_sdr_db /= static_cast<double>(n);
  out.mean_improvement_db /= static_cast<double>(n);
  return out;
}

Metrics evaluate(const SeparationModel& model, const SynthMixSpec& spec, std::size_t n, std::size_t workers) {
  if (spec.sample_rate != model.config.sample_rate) {
    throw ConfigError("sample_rate", "data at " + std::to_string(spec.sample_rate) + " Hz, model expects " +
                                         std::to_string(model.config.sample_rate) + " Hz");
  }
  return evaluate_with([&](const Tensor& mix, std::size_t) { return separate(model, mix); }, spec, n, workers);
}

void write_metrics_csv(std::ostream& out, const Metrics& metrics) {
  out.precision(10);
  out << "utterance,neg_snr_db,si_sdr_db,mixture_si_sdr_db,improvement_db\n";
  for (const auto& m : metrics.utterances)
    out << m.index << "," << m.neg_snr_db << "," << m.si_sdr_db << "," << m.mixture_si_sdr_db << ","
        << m.improvement_db << "\n";
  out << "mean," << metrics.mean_neg_snr_db << "," << metrics.mean_si_sdr_db << ","
      << metrics.mean_mixture_si_sdr_db << "," << metrics.mean_improvement_db << "\n";
}

Tensor training_loss(const SeparationModel& model, const Tensor& mixture, const Tensor& sources, double a2t_weight) {
  Tensor h = encode_waveform(model, mixture);
  Tensor masks = separate_features(model, h);
  Tensor est = decode_waveforms(model, h, masks, mixture.dim(0));
  PitResult pit = pit_loss(est, sources);
  if (a2t_weight == 0.0) return pit.loss;
  return add(pit.loss, scale(a2t_loss(model, sources, masks, pit.permutation), a2t_weight));
}

Trainer::Trainer(SeparationModel model, TrainConfig config, SynthMixSpec train, SynthMixSpec valid)
    : model_(std::move(model)),
      config_(config),
      train_(train),
      valid_(valid),
      adam_(model_.parameters(), config.beta1, config.beta2, config.adam_eps) {
  config_.validate();
  train_.validate();
  valid_.validate();
  if (train_.sample_rate != model_.config.sample_rate) {
    throw ConfigError("sample_rate", "training data at " + std::to_string(train_.sample_rate) +
                                         " Hz, model expects " + std::to_string(model_.config.sample_rate) + " Hz");
  }
  if (model_.config.sources != 2) throw ConfigError("X", "synthetic mixtures have exactly 2 sources");
  stopping_.patience = config_.patience;
}

bool Trainer::finished() const { return stopped_early_ || step_ >= config_.epochs * config_.steps_per_epoch; }

double Trainer::validate_loss(double* si_sdr_out) const {
  const Metrics m = evaluate(model_, valid_, config_.valid_size);
  if (si_sdr_out) *si_sdr_out = m.mean_si_sdr_db;
  return m.mean_neg_snr_db;
}

const StepRecord& Trainer::step() {
  if (finished()) throw std::logic_error("Trainer::step: training already finished");
  const NamedParams params = model_.parameters();
  for (const auto& [name, p] : params) Tensor(p).zero_grad();

  const std::size_t n = config_.batch_size;
  const MixBatch batch = make_batch(train_, n, step_ * n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = scale(training_loss(model_, select(batch.mixtures, 0, i), select(batch.sources, 0, i),
                                      config_.a2t_weight),
                        1.0 / static_cast<double>(n));
    if (!std::isfinite(loss.item())) {
      throw TrainingDiverged("non-finite training loss at step " + std::to_string(step_) + ", utterance " +
                             std::to_string(step_ * n + i));
    }
    total += loss.item();
    tape.backward(loss);
  }
  const double lr = learning_rate();
  clip_gradients(params, config_.clip_norm);
  adam_.step(lr);

  StepRecord rec;
  rec.epoch = epoch();
  rec.step = step_;
  rec.train_loss = total;
  rec.lr = lr;
  ++step_;
  if (step_ % config_.steps_per_epoch == 0) {
    double sdr = 0;
    const double valid = validate_loss(&sdr);
    if (!std::isfinite(valid)) throw TrainingDiverged("non-finite validation loss after step " + std::to_string(step_));
    rec.valid_loss = valid;
    rec.si_sdr = sdr;
    const bool best = stopping_.improved(valid);
    stopped_early_ = stopping_.update(valid);
    history_.push_back(rec);
    if (!out_dir_.empty()) {
      std::filesystem::create_directories(out_dir_);
      if (best) save((std::filesystem::path(out_dir_) / "best.ckpt").string());
      save((std::filesystem::path(out_dir_) / "last.ckpt").string());
    }
  } else {
    history_.push_back(rec);
  }
  return history_.back();
}

void Trainer::run(std::size_t max_steps, const std::function<void(const StepRecord&)>& on_step) {
  while (!finished() && (max_steps == 0 || step_ < max_steps)) {
    const StepRecord& rec = step();
    if (on_step) on_step(rec);
  }
}

void Trainer::save(const std::string& path) const {
  NamedParams extras = adam_.state();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  extras.emplace_back("train.step", Tensor({1}, {static_cast<double>(step_)}));
  extras.emplace_back("train.best", Tensor({1}, {stopping_.best}));
  extras.emplace_back("train.bad_epochs", Tensor({1}, {static_cast<double>(stopping_.bad_epochs)}));
  extras.emplace_back("train.stopped", Tensor({1}, {stopped_early_ ? 1.0 : 0.0}));
  std::vector<double> rows;
  for (const auto& r : history_) {
    rows.insert(rows.end(), {static_cast<double>(r.epoch), static_cast<double>(r.step), r.train_loss,
                             r.valid_loss.value_or(nan), r.si_sdr.value_or(nan), r.lr});
  }
  extras.emplace_back("train.history", Tensor({history_.size(), 6}, std::move(rows)));
  save_checkpoint(path, model_, extras);
}

Trainer Trainer::resume(const std::string& checkpoint, TrainConfig config, SynthMixSpec train, SynthMixSpec valid) {
  Checkpoint ck = load_checkpoint(checkpoint);
  Trainer t(std::move(ck.model), config, train, valid);
  t.adam_.load_state(ck.extras);
  std::map<std::string, Tensor> byname(ck.extras.begin(), ck.extras.end());
  auto scalar = [&](const std::string& name) {
    auto it = byname.find(name);
    if (it == byname.end()) throw CheckpointError("checkpoint has no training state '" + name + "'");
    return it->second.item();
  };
  t.step_ = static_cast<std::size_t>(scalar("train.step"));
  t.stopping_.best = scalar("train.best");
  t.stopping_.bad_epochs = static_cast<std::size_t>(scalar("train.bad_epochs"));
  t.stopped_early_ = scalar("train.stopped") != 0.0;
  if (auto it = byname.find("train.history"); it != byname.end() && it->second.numel() > 0) {
    const auto d = it->second.data();
    for (std::size_t r = 0; r < it->second.dim(0); ++r) {
      StepRecord rec;
      rec.epoch = static_cast<std::size_t>(d[r * 6]);
      rec.step = static_cast<std::size_t>(d[r * 6 + 1]);
      rec.train_loss = d[r * 6 + 2];
      if (!std::isnan(d[r * 6 + 3])) rec.valid_loss = d[r * 6 + 3];
      if (!std::isnan(d[r * 6 + 4])) rec.si_sdr = d[r * 6 + 4];
      rec.lr = d[r * 6 + 5];
      t.history_.push_back(rec);
    }
  }
  return t;
}

void write_history_csv(std::ostream& out, const std::vector<StepRecord>& history) {
  out.precision(10);
  out << "epoch,step,train_loss,valid_loss,si_sdr,lr\n";
  for (const auto& r : history) {
    out << r.epoch << "," << r.step << "," << r.train_loss << ",";
    if (r.valid_loss) out << *r.valid_loss;
    out << ",";
    if (r.si_sdr) out << *r.si_sdr;
    out << "," << r.lr << "\n";
  }
}

}  // namespace gc3
