// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/hpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "lnnfama/common.hpp"
#include "lnnfama/fama.hpp"

namespace lnnfama::hpo {

namespace {

int log_uniform_int(Rng& rng, int lo, int hi) {
  std::uniform_real_distribution<double> u(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi)));
  return std::clamp(static_cast<int>(std::lround(std::exp(u(rng)))), lo, hi);
}

nlohmann::json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json trial_json(const Trial& t) {
  nlohmann::json j;
  j["index"] = t.index;
  j["seed"] = t.seed;
  j["config"] = {{"ltc_units", t.config.ltc_units},
                 {"dense_layers", t.config.dense_layers},
                 {"learning_rate", t.config.learning_rate},
                 {"loss", std::string(nn::to_string(t.config.loss))},
                 {"pca", t.config.pca},
                 {"m_labels", t.config.m_labels}};
  j["objective"] = number_or_null(t.objective);
  j["validation_loss"] = number_or_null(t.validation_loss);
  j["validation_outage"] = number_or_null(t.validation_outage);
  j["failed"] = t.failed;
  j["error"] = t.error;
  j["seconds"] = t.seconds;
  j["epochs_run"] = t.history.train_loss.size();
  j["best_epoch"] = t.history.best_epoch;
  j["diverged"] = t.history.diverged;
  j["stopped_early"] = t.history.stopped_early;
  nlohmann::json train_curve = nlohmann::json::array(), val_curve = nlohmann::json::array();
  for (double v : t.history.train_loss) train_curve.push_back(number_or_null(v));
  for (double v : t.history.validation_loss) val_curve.push_back(number_or_null(v));
  j["train_loss"] = std::move(train_curve);
  j["validation_loss_curve"] = std::move(val_curve);
  j["weights_file"] = t.weights_file;
  return j;
}

bool better(const Trial& a, const Trial& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  if (a.validation_loss != b.validation_loss) return a.validation_loss < b.validation_loss;
  return a.index < b.index;
}

}  // namespace

void SearchSpace::validate() const {
  if (ltc_units_min < 1 || ltc_units_max < ltc_units_min) throw ConfigError("invalid LTC unit range");
  if (dense_layers_min < 1 || dense_layers_max < dense_layers_min) throw ConfigError("invalid dense layer range");
  if (dense_width_min < 1 || dense_width_max < dense_width_min) throw ConfigError("invalid dense width range");
  if (!(learning_rate_min > 0.0) || !(learning_rate_max >= learning_rate_min))
    throw ConfigError("invalid learning rate range");
  if (losses.empty()) throw ConfigError("search space has no loss functions");
  if (!(pca_probability >= 0.0 && pca_probability <= 1.0)) throw ConfigError("pca_probability must lie in [0, 1]");
  if (m_labels.empty()) throw ConfigError("search space has no label counts");
  for (int m : m_labels)
    if (m < 1) throw ConfigError("label counts must be positive");
  if (epochs < 1 || batch_size < 1 || patience < 1) throw ConfigError("invalid training budget");
}

TrialConfig sample_trial(const SearchSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng(seed);
  TrialConfig c;
  c.ltc_units = log_uniform_int(rng, space.ltc_units_min, space.ltc_units_max);
  const int layers = std::uniform_int_distribution<int>(space.dense_layers_min, space.dense_layers_max)(rng);
  for (int i = 0; i < layers; ++i) c.dense_layers.push_back(log_uniform_int(rng, space.dense_width_min, space.dense_width_max));
  std::uniform_real_distribution<double> lr(std::log(space.learning_rate_min), std::log(space.learning_rate_max));
  c.learning_rate = std::exp(lr(rng));
  c.loss = space.losses[std::uniform_int_distribution<std::size_t>(0, space.losses.size() - 1)(rng)];
  c.pca = std::bernoulli_distribution(space.pca_probability)(rng);
  c.m_labels = space.m_labels[std::uniform_int_distribution<std::size_t>(0, space.m_labels.size() - 1)(rng)];
  if (c.pca) c.ltc_units = 0;
  return c;
}

ModelPredictor::ModelPredictor(nn::Weights weights, dataset::Normalizer normalizer, int n_ports, int m_observed)
    : weights_(std::move(weights)), normalizer_(std::move(normalizer)), n_ports_(n_ports), m_observed_(m_observed) {
  if (weights_.spec.output_dim != n_ports_) throw ShapeError("model output size does not match the port count");
  if (weights_.spec.input_dim != normalizer_.step_dim()) throw ShapeError("model input size does not match the features");
  if (m_observed_ < 2 || m_observed_ > n_ports_) throw ConfigError("invalid observed-port count for predictor");
}

std::vector<double> ModelPredictor::probabilities(const selection::ObservedSequence& observed) const {
  if (observed.n_ports != n_ports_) throw ShapeError("predictor trained for a different port count");
  if (static_cast<int>(observed.ports.size()) != m_observed_)
    throw ShapeError("predictor trained for a different observed-port count");
  const auto raw = dataset::raw_features(observed.ports, observed.sinr, n_ports_);
  const Eigen::VectorXd p = nn::model_forward(weights_, normalizer_.transform(raw, m_observed_));
  return {p.data(), p.data() + p.size()};
}

std::string ModelPredictor::metadata_json() const {
  nlohmann::json j;
  j["kind"] = "port_predictor";
  j["n_ports"] = n_ports_;
  j["m_observed"] = m_observed_;
  j["normalizer"] = nlohmann::json::parse(dataset::normalizer_to_json(normalizer_));
  return j.dump();
}

void ModelPredictor::save(const std::string& path) const { nn::save_weights(weights_, metadata_json(), path); }

ModelPredictor ModelPredictor::load(const std::string& path) {
  auto loaded = nn::load_weights(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(loaded.metadata_json);
    if (meta.value("kind", std::string{}) != "port_predictor")
      throw IntegrityError("'" + path + "' does not hold a port predictor");
    return ModelPredictor(std::move(loaded.weights), dataset::normalizer_from_json(meta.at("normalizer").dump()),
                          meta.at("n_ports").get<int>(), meta.at("m_observed").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("'" + path + "': bad predictor metadata: " + e.what());
  }
}

fama::OutageEstimate sample_outage(const ModelPredictor& predictor, std::span<const dataset::Sample> samples,
                                   std::span<const int> observed_ports, double threshold_linear, int lookup_budget) {
  if (samples.empty()) throw ConfigError("no samples to score");
  if (static_cast<int>(observed_ports.size()) != predictor.m_observed())
    throw ShapeError("observed ports do not match the predictor");
  const int n = predictor.n_ports();
  const auto sets = selection::PortSets::from_observed(n, {observed_ports.begin(), observed_ports.end()});
  if (lookup_budget < 0 || lookup_budget > static_cast<int>(sets.unobserved.size()))
    throw ConfigError("lookup budget exceeds the unobserved ports");

  const nn::TensorSet tensors = dataset::to_tensors(samples, predictor.normalizer(), predictor.m_observed());
  std::uint64_t outages = 0;
  constexpr Eigen::Index kChunk = 512;
  for (Eigen::Index start = 0; start < tensors.size(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, tensors.size() - start);
    const Eigen::MatrixXd probs =
        nn::model_forward(predictor.weights(), tensors.inputs.middleCols(start, len), tensors.steps);
    for (Eigen::Index c = 0; c < len; ++c) {
      const auto& s = samples[static_cast<std::size_t>(start + c)];
      if (static_cast<int>(s.sinr.size()) != n) throw ShapeError("sample SINR length does not match the port count");
      double best = -std::numeric_limits<double>::infinity();
      for (int p : observed_ports) best = std::max(best, s.sinr[static_cast<std::size_t>(p)]);
      const auto col = probs.col(c);
      const std::span<const double> ranked(col.data(), static_cast<std::size_t>(col.size()));
      for (int p : top_indices_among(ranked, sets.unobserved, lookup_budget))
        best = std::max(best, s.sinr[static_cast<std::size_t>(p)]);
      if (best < threshold_linear) ++outages;
    }
  }
  return fama::wilson_estimate(outages, samples.size());
}

Trial run_trial(const TrialConfig& config, const SearchSpace& space, const dataset::DatasetSplit& data,
                std::uint64_t seed, const StudyOptions& options) {
  Trial t;
  t.seed = seed;
  t.config = config;
  const auto started = std::chrono::steady_clock::now();
  try {
    if (data.meta.m_labels != config.m_labels) throw ConfigError("dataset labels do not match the trial's M");
    const int m = data.meta.m_observed;
    dataset::Normalizer norm;
    norm.fit(data.train, m, config.pca);

    nn::ModelSpec spec;
    spec.input_dim = norm.step_dim();
    spec.ltc_units = config.pca ? 0 : config.ltc_units;
    spec.dense_layers = config.dense_layers;
    spec.output_dim = data.meta.n_ports;
    spec.activation = space.activation;

    nn::TrainConfig tc;
    tc.learning_rate = config.learning_rate;
    tc.epochs = space.epochs;
    tc.batch_size = space.batch_size;
    tc.loss = config.loss;
    tc.patience = space.patience;
    tc.seed = seed;

    const auto train_set = dataset::to_tensors(data.train, norm, m);
    const auto val_set = dataset::to_tensors(data.validation, norm, m);
    auto result = nn::train(spec, train_set, val_set, tc);
    t.history = std::move(result.history);
    if (t.history.best_epoch < 0) throw NumericError("training diverged before the first checkpoint");
    t.validation_loss = t.history.best_validation_loss;
    ModelPredictor predictor(std::move(result.weights), std::move(norm), data.meta.n_ports, m);
    if (options.objective == Objective::outage) {
      t.validation_outage =
          sample_outage(predictor, data.validation, data.meta.observed_ports, options.threshold_linear).probability;
      t.objective = t.validation_outage;
    } else {
      t.objective = t.validation_loss;
    }
    t.model = std::move(predictor);
  } catch (const Error& e) {
    t.failed = true;
    t.error = e.what();
  } catch (const std::invalid_argument& e) {
    t.failed = true;
    t.error = e.what();
  }
  if (!t.failed && !std::isfinite(t.objective)) {
    t.failed = true;
    t.error = "non-finite objective";
  }
  if (t.failed) {
    t.objective = std::numeric_limits<double>::infinity();
    t.model.reset();
  }
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return t;
}

StudyResult run_study(const SearchSpace& space, const DatasetFactory& factory, int budget, std::uint64_t master_seed,
                      const StudyOptions& options) {
  if (budget < 1) throw ConfigError("study budget must be at least 1");
  space.validate();
  StudyResult out;
  out.trials.resize(static_cast<std::size_t>(budget));
  std::vector<TrialConfig> configs;
  std::map<int, const dataset::DatasetSplit*> datasets;
  for (int i = 0; i < budget; ++i) {
    const auto seed = derive_seed(master_seed, streams::kTrial, static_cast<std::uint64_t>(i));
    configs.push_back(sample_trial(space, seed));
    // Datasets are resolved up front so the factory never runs concurrently.
    if (!datasets.count(configs.back().m_labels)) datasets[configs.back().m_labels] = &factory(configs.back().m_labels);
  }
  if (!options.log_dir.empty()) std::filesystem::create_directories(options.log_dir);

  parallel_for(static_cast<std::size_t>(budget), options.workers, [&](std::size_t i) {
    const auto seed = derive_seed(master_seed, streams::kTrial, i);
    Trial t = run_trial(configs[i], space, *datasets.at(configs[i].m_labels), seed, options);
    t.index = static_cast<int>(i);
    if (!options.log_dir.empty()) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "trial_%04zu", i);
      const auto dir = std::filesystem::path(options.log_dir);
      if (t.model) {
        t.weights_file = std::string(stem) + ".weights";
        t.model->save((dir / t.weights_file).string());
      }
      std::ofstream log(dir / (std::string(stem) + ".json"));
      if (!log) throw IoError("cannot write trial log in '" + options.log_dir + "'");
      log << trial_json(t).dump(2) << '\n';
    }
    out.trials[i] = std::move(t);
  });

  for (const auto& t : out.trials) {
    if (t.failed) continue;
    if (out.best < 0 || better(t, out.trials[static_cast<std::size_t>(out.best)])) out.best = t.index;
  }
  if (out.best < 0) throw NumericError("every trial in the study failed");
  return out;
}

SweepTable class_count_sweep(const std::vector<int>& observed_counts, const std::vector<int>& m_values,
                             const SearchSpace& space, const SweepDatasetFactory& factory, int budget_per_cell,
                             std::uint64_t seed, const StudyOptions& options) {
  if (observed_counts.empty() || m_values.empty()) throw ConfigError("sweep needs observed counts and label counts");
  SweepTable table;
  table.observed_counts = observed_counts;
  table.m_values = m_values;
  for (std::size_t row = 0; row < observed_counts.size(); ++row) {
    const dataset::DatasetSplit base = factory(observed_counts[row]);
    std::vector<SweepCell> cells;
    for (std::size_t col = 0; col < m_values.size(); ++col) {
      SearchSpace cell_space = space;
      cell_space.m_labels = {m_values[col]};
      dataset::DatasetSplit data = base;
      dataset::relabel(data, m_values[col]);
      StudyOptions cell_options = options;
      if (!options.log_dir.empty()) {
        char sub[64];
        std::snprintf(sub, sizeof(sub), "m%d_M%d", observed_counts[row], m_values[col]);
        cell_options.log_dir = (std::filesystem::path(options.log_dir) / sub).string();
      }
      SweepCell cell;
      try {
        const auto study =
            run_study(cell_space, [&](int) -> const dataset::DatasetSplit& { return data; }, budget_per_cell,
                      derive_seed(seed, streams::kTrial, row * 1000 + col), cell_options);
        cell.outage = sample_outage(*study.best_trial().model, data.test, data.meta.observed_ports,
                                    options.threshold_linear)
                          .probability;
      } catch (const NumericError&) {
        cell.failed = true;
      }
      cells.push_back(cell);
    }
    table.cells.push_back(std::move(cells));
  }
  table.best_m = row_argmin(table);
  return table;
}

std::vector<int> row_argmin(const SweepTable& table) {
  std::vector<int> best;
  for (const auto& row : table.cells) {
    int arg = 0;
    double value = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c].failed || !std::isfinite(row[c].outage)) continue;
      if (arg == 0 || row[c].outage < value) {
        value = row[c].outage;
        arg = table.m_values[c];
      }
    }
    best.push_back(arg);
  }
  return best;
}

void write_sweep_csv(const SweepTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "m_observed";
  for (int m : table.m_values) out << ",M_" << m;
  out << ",best_M\n";
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    out << table.observed_counts[r];
    for (const auto& cell : table.cells[r]) {
      char buf[32];
      if (cell.failed)
        std::snprintf(buf, sizeof(buf), "failed");
      else
        std::snprintf(buf, sizeof(buf), "%.6g", cell.outage);
      out << ',' << buf;
    }
    out << ',' << (r < table.best_m.size() ? table.best_m[r] : 0) << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace lnnfama::hpo
