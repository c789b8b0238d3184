// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lnnfama/dataset.hpp"
#include "lnnfama/nn.hpp"
#include "lnnfama/selection.hpp"
#include "lnnfama/system.hpp"

namespace lnnfama::hpo {

/// Random-search space. Integer axes marked log-uniform are sampled as
/// round(exp(U(ln lo, ln hi))). Choosing PCA preprocessing makes the trial a
/// dense baseline (no LTC stage).
struct SearchSpace {
  int ltc_units_min = 8;
  int ltc_units_max = 128;
  int dense_layers_min = 1;
  int dense_layers_max = 3;
  int dense_width_min = 16;
  int dense_width_max = 256;
  double learning_rate_min = 1e-4;
  double learning_rate_max = 1e-2;
  std::vector<nn::LossKind> losses{nn::LossKind::bce, nn::LossKind::soft_f1};
  double pca_probability = 0.25;
  std::vector<int> m_labels{1, 2, 3, 4, 5, 10};

  // Fixed per-trial training budget.
  int epochs = 20;
  int batch_size = 64;
  int patience = 4;
  nn::Activation activation = nn::Activation::relu;

  void validate() const;
};

struct TrialConfig {
  int ltc_units = 0;
  std::vector<int> dense_layers;
  double learning_rate = 0.0;
  nn::LossKind loss = nn::LossKind::bce;
  bool pca = false;
  int m_labels = 0;

  bool operator==(const TrialConfig&) const = default;
};

TrialConfig sample_trial(const SearchSpace& space, std::uint64_t seed);

/// Observed-port model wrapped as a selection predictor: raw observed SINR is
/// turned into features, normalized and run through the network.
class ModelPredictor final : public selection::PortPredictor {
 public:
  ModelPredictor(nn::Weights weights, dataset::Normalizer normalizer, int n_ports, int m_observed);

  int n_ports() const override { return n_ports_; }
  std::vector<double> probabilities(const selection::ObservedSequence& observed) const override;

  const nn::Weights& weights() const { return weights_; }
  const dataset::Normalizer& normalizer() const { return normalizer_; }
  int m_observed() const { return m_observed_; }

  /// Metadata object stored alongside the weights (normalizer, N, m).
  std::string metadata_json() const;
  void save(const std::string& path) const;
  static ModelPredictor load(const std::string& path);

 private:
  nn::Weights weights_;
  dataset::Normalizer normalizer_;
  int n_ports_;
  int m_observed_;
};

/// Outage fraction of the model-assisted policy (lookup budget J, single
/// port) over a set of samples with stored ground-truth SINR.
fama::OutageEstimate sample_outage(const ModelPredictor& predictor, std::span<const dataset::Sample> samples,
                                   std::span<const int> observed_ports, double threshold_linear, int lookup_budget = 1);

enum class Objective { outage, loss };

struct Trial {
  int index = 0;
  std::uint64_t seed = 0;
  TrialConfig config;
  /// Validation outage (Objective::outage) or validation loss.
  double objective = std::numeric_limits<double>::infinity();
  double validation_loss = std::numeric_limits<double>::infinity();
  double validation_outage = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
  double seconds = 0.0;
  std::string weights_file;
  nn::TrainHistory history;
  std::optional<ModelPredictor> model;
};

/// Returns the dataset a trial trains on, already labelled with config.m_labels.
using DatasetFactory = std::function<const dataset::DatasetSplit&(int m_labels)>;

struct StudyOptions {
  Objective objective = Objective::outage;
  double threshold_linear = 1.0;
  int workers = 1;
  /// When set, one JSON log and one weights file per trial are written here.
  std::string log_dir;
};

struct StudyResult {
  std::vector<Trial> trials;
  int best = -1;

  const Trial& best_trial() const { return trials.at(static_cast<std::size_t>(best)); }
};

/// Trains one configuration on `data` and scores it on the validation split.
Trial run_trial(const TrialConfig& config, const SearchSpace& space, const dataset::DatasetSplit& data,
                std::uint64_t seed, const StudyOptions& options);

/// `budget` independently sampled trials; trial i uses derive_seed(master, kTrial, i).
/// Best = lowest objective, ties broken by validation loss then trial index.
/// Failed trials are kept in the log and never chosen.
StudyResult run_study(const SearchSpace& space, const DatasetFactory& factory, int budget, std::uint64_t master_seed,
                      const StudyOptions& options);

struct SweepCell {
  double outage = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
};

struct SweepTable {
  std::vector<int> observed_counts;
  std::vector<int> m_values;
  /// cells[row][col] for observed_counts[row], m_values[col].
  std::vector<std::vector<SweepCell>> cells;
  /// Per row, the M with the lowest outage (ties to the smaller M); 0 if every cell failed.
  std::vector<int> best_m;
};

/// Builds one dataset per observed-port count.
using SweepDatasetFactory = std::function<dataset::DatasetSplit(int m_observed)>;

/// For every (observed count, M) cell: a study with M fixed, then the test-set
/// outage of the best model under the single-port, J = 1 policy.
SweepTable class_count_sweep(const std::vector<int>& observed_counts, const std::vector<int>& m_values,
                             const SearchSpace& space, const SweepDatasetFactory& factory, int budget_per_cell,
                             std::uint64_t seed, const StudyOptions& options);

/// Argmin per row over the cells that did not fail.
std::vector<int> row_argmin(const SweepTable& table);

/// Table layout: m_observed, M_1, ..., M_k, best_M.
void write_sweep_csv(const SweepTable& table, const std::string& path);

}  // namespace lnnfama::hpo
