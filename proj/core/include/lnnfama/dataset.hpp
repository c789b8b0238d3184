// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lnnfama/channel.hpp"
#include "lnnfama/nn.hpp"
#include "lnnfama/system.hpp"

namespace lnnfama::dataset {

/// Per-step raw features: [SINR in dB, port position n / (N - 1)].
inline constexpr int kFeatureDim = 2;

/// One channel realization seen through the observed ports.
/// Values are rounded to float32 precision so that in-memory and on-disk
/// datasets compare equal.
struct Sample {
  /// m_observed x kFeatureDim, step-major (ascending port index).
  std::vector<double> features;
  /// N-entry multi-hot mask of the m_labels highest-SINR ports.
  std::vector<std::uint8_t> labels;
  /// Ground-truth linear SINR of every port; used for outage scoring only.
  std::vector<double> sinr;

  bool operator==(const Sample&) const = default;
};

struct DatasetMeta {
  int n_ports = 0;
  int m_observed = 0;
  int m_labels = 0;
  double alpha = 0.0;
  int mu = 0;
  double aperture = 0.0;
  int n_users = 0;
  double signal_power = 0.0;
  double noise_power = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> observed_ports;

  bool operator==(const DatasetMeta&) const = default;
};

/// Standardization of the two feature channels (statistics pooled over
/// steps, training split only), optionally followed by PCA on the flattened
/// sequence. With PCA the result is a single step of `components` features.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool fitted = false;
  bool pca = false;
  double variance_threshold = 0.95;
  Eigen::VectorXd pca_mean;
  /// flattened_dim x k, orthonormal columns.
  Eigen::MatrixXd components;

  void fit(std::span<const Sample> train, int m_observed, bool enable_pca);
  /// Raw step-major features -> model input (step_dim x steps).
  Eigen::MatrixXd transform(std::span<const double> raw_features, int m_observed) const;
  int step_dim() const;
  int steps(int m_observed) const;

  bool operator==(const Normalizer&) const;
};

struct DatasetSplit {
  DatasetMeta meta;
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  Normalizer normalizer;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
};

/// Multi-hot mask with ones at the m_labels largest entries (ties to the lower index).
std::vector<std::uint8_t> top_m_labels(std::span<const double> sinr, int m_labels);

/// Raw per-step features for the observed ports.
std::vector<double> raw_features(std::span<const int> ports, std::span<const double> observed_sinr, int n_ports);

/// Split sizes for `count` samples: round(0.70 count), round(0.15 count), remainder.
std::array<std::size_t, 3> split_sizes(std::size_t count);

/// `count` independent realizations split 70/15/15 by a seeded shuffle; the
/// normalizer (standardization only) is fit on the training split.
DatasetSplit build_dataset(const SystemConfig& system, const channel::AntennaConfig& antenna,
                           const channel::FadingParams& params, int m_observed, int m_labels, std::size_t count,
                           std::uint64_t seed, int workers = 1);

/// Recomputes every label mask for a different label count.
void relabel(DatasetSplit& split, int m_labels);

/// Fits `normalizer` on `train` and returns the transformed training features.
std::vector<Eigen::MatrixXd> fit_transform(Normalizer& normalizer, std::span<const Sample> train, int m_observed,
                                           bool enable_pca);

/// Packs samples into the stacked layout consumed by nn::train.
nn::TensorSet to_tensors(std::span<const Sample> samples, const Normalizer& normalizer, int m_observed);

struct LoadExpectations {
  std::optional<int> n_ports;
  std::optional<int> m_observed;
};

/// Dataset file: one JSON header line (format version, N, m, M, fading and
/// system parameters, seed, split counts, normalizer, checksum) followed by
/// little-endian blocks for train, validation and test in turn: float32
/// features, uint8 label masks, float32 ground-truth SINR.
void save_dataset(const DatasetSplit& split, const std::string& path);
DatasetSplit load_dataset(const std::string& path, const LoadExpectations& expect = {});

/// JSON text for a normalizer, as embedded in dataset and weights headers.
std::string normalizer_to_json(const Normalizer& normalizer);
Normalizer normalizer_from_json(const std::string& json_text);

/// CSV mirror of the dataset content for inspection.
void export_csv(const DatasetSplit& split, const std::string& path);

}  // namespace lnnfama::dataset
