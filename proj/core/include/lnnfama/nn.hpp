// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lnnfama::nn {

enum class Activation { relu, tanh };
enum class LossKind { bce, soft_f1 };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind k);
Activation parse_activation(std::string_view text);
LossKind parse_loss(std::string_view text);

/// Liquid time-constant recurrent stage followed by a dense stack and a
/// sigmoid multi-label head. ltc_units == 0 gives the dense baseline, which
/// consumes a single input step.
struct ModelSpec {
  int input_dim = 2;
  int ltc_units = 32;
  std::vector<int> dense_layers{64};
  int output_dim = 100;
  Activation activation = Activation::relu;
  double dt = 1.0;
  double tau_init = 1.0;

  void validate() const;
  bool has_ltc() const { return ltc_units > 0; }
};

/// One named block of the flat parameter vector, stored column-major.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

/// Canonical parameter order:
///   ltc.input_kernel (H x D), ltc.recurrent_kernel (H x H), ltc.bias (H),
///   ltc.amplitude (H), ltc.tau (H),
///   dense<i>.kernel (W_i x W_{i-1}), dense<i>.bias (W_i), ...,
///   output.kernel (N x W_last), output.bias (N).
/// LTC blocks are absent when ltc_units == 0.
std::vector<ParamBlock> param_layout(const ModelSpec& spec);
Eigen::Index param_count(const ModelSpec& spec);

struct Weights {
  ModelSpec spec;
  Eigen::VectorXd params;
};

/// Dense kernels uniform in +-sqrt(6 / (fan_in + fan_out)); LTC kernels uniform
/// in +-0.1; amplitudes 1; tau = spec.tau_init; biases 0.
Weights initialize(const ModelSpec& spec, std::uint64_t seed);

/// Fused LTC update for a single sample:
///   f  = sigmoid(W_in x + W_rec h + b)
///   h' = (h + dt f * A) / (1 + dt (1 / tau + f))
Eigen::VectorXd ltc_step(const Eigen::VectorXd& h, const Eigen::VectorXd& x, const Weights& weights);

/// Inputs for `count` samples: rows [t*D, (t+1)*D) of column s hold step t of
/// sample s. Labels are N x count in {0, 1}.
struct TensorSet {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd labels;
  int steps = 1;
  int step_dim = 0;

  Eigen::Index size() const { return inputs.cols(); }
};

/// Probabilities (N x batch) for stacked inputs laid out as in TensorSet.
Eigen::MatrixXd model_forward(const Weights& weights, const Eigen::MatrixXd& inputs, int steps);

/// Single sample: `sequence` is D x T, one column per step.
Eigen::VectorXd model_forward(const Weights& weights, const Eigen::MatrixXd& sequence);

/// Mean loss over a batch.
///   bce:     -mean(y ln p + (1-y) ln(1-p)), p clamped to [1e-7, 1 - 1e-7]
///   soft_f1: mean over samples of 1 - 2 sum(p y) / (sum p + sum y + 1e-7)
double loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels, LossKind kind);

struct Gradients {
  Eigen::VectorXd values;
  double loss = 0.0;
};

/// Exact reverse-mode gradient of the mean batch loss w.r.t. every
/// parameter, backpropagated through the unrolled recurrence.
Gradients backward_gradients(const Weights& weights, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& labels,
                             int steps, LossKind kind);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam step. Time constants are kept >= 1e-3 afterwards.
void adam_update(Weights& weights, const Eigen::VectorXd& gradients, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 64;
  LossKind loss = LossKind::bce;
  int patience = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;
  double best_validation_loss = 0.0;
  bool diverged = false;
  bool stopped_early = false;
};

struct TrainResult {
  Weights weights;
  TrainHistory history;
};

/// Mini-batch Adam with early stopping on validation loss; returns the
/// best-validation checkpoint. A non-finite training loss stops training and
/// keeps the last finite checkpoint.
TrainResult train(const ModelSpec& spec, const TensorSet& train_set, const TensorSet& validation_set,
                  const TrainConfig& config);

/// Mean loss over a whole set, evaluated in chunks.
double evaluate_loss(const Weights& weights, const TensorSet& set, LossKind kind);

/// Indices of the m_labels largest outputs, descending, ties to the lower index.
std::vector<int> predict_top_indices(const Weights& weights, const Eigen::MatrixXd& sequence, int m_labels);

/// Weights file: one JSON header line (spec, metadata, checksum) followed by
/// the little-endian float64 parameter blob in canonical order.
/// `metadata_json` must be a JSON object; it is stored verbatim under "metadata".
void save_weights(const Weights& weights, const std::string& metadata_json, const std::string& path);

struct LoadedWeights {
  Weights weights;
  std::string metadata_json;
};
LoadedWeights load_weights(const std::string& path);

}  // namespace lnnfama::nn
