// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "binary_io.hpp"
#include "lnnfama/common.hpp"

namespace lnnfama::nn {

namespace {

constexpr double kClamp = 1e-7;
constexpr double kSoftF1Eps = 1e-7;
constexpr double kMinTau = 1e-3;

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using CMapVec = Eigen::Map<const Vec>;
using MapVec = Eigen::Map<Vec>;

Mat sigmoid(const Mat& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

template <class MatMap, class VecMap>
struct LtcBlocks {
  MatMap w_in;
  MatMap w_rec;
  VecMap bias;
  VecMap amplitude;
  VecMap tau;
};

/// Maps every parameter block of `spec` onto the flat vector at `base`.
template <class MatMap, class VecMap, class Ptr>
struct BlockViews {
  std::optional<LtcBlocks<MatMap, VecMap>> ltc;
  std::vector<MatMap> kernels;  // dense layers, then the output layer
  std::vector<VecMap> biases;

  BlockViews(const ModelSpec& spec, Ptr base) {
    const auto layout = param_layout(spec);
    auto mat = [&](const ParamBlock& b) { return MatMap(base + b.offset, b.rows, b.cols); };
    auto vec = [&](const ParamBlock& b) { return VecMap(base + b.offset, b.rows); };
    std::size_t i = 0;
    if (spec.has_ltc()) {
      ltc.emplace(LtcBlocks<MatMap, VecMap>{mat(layout[0]), mat(layout[1]), vec(layout[2]), vec(layout[3]),
                                            vec(layout[4])});
      i = 5;
    }
    for (; i < layout.size(); i += 2) {
      kernels.push_back(mat(layout[i]));
      biases.push_back(vec(layout[i + 1]));
    }
  }
};

struct View : BlockViews<CMapMat, CMapVec, const double*> {
  const ModelSpec* spec;
  View(const ModelSpec& s, const Vec& params) : BlockViews(s, checked(s, params)), spec(&s) {}

  static const double* checked(const ModelSpec& s, const Vec& params) {
    if (params.size() != param_count(s)) throw ShapeError("parameter vector does not match model spec");
    return params.data();
  }
};

using GradView = BlockViews<MapMat, MapVec, double*>;

/// Intermediate values kept for the backward pass.
struct Tape {
  std::vector<Mat> hidden;  // hidden[t] is the state entering step t; hidden[T] is final
  std::vector<Mat> gate;    // f_t
  std::vector<Mat> denom;   // 1 + dt (1/tau + f_t)
  std::vector<Mat> pre;     // dense pre-activations (hidden layers and output)
  std::vector<Mat> act;     // act[0] is the dense input; act[l+1] the output of hidden layer l
  Mat probs;
};

void check_inputs(const ModelSpec& spec, const Mat& inputs, int steps) {
  if (steps < 1) throw ShapeError("sequence must have at least one step");
  if (!spec.has_ltc() && steps != 1) throw ShapeError("dense baseline expects a single input step");
  if (inputs.rows() != static_cast<Eigen::Index>(steps) * spec.input_dim)
    throw ShapeError("input rows " + std::to_string(inputs.rows()) + " != steps * input_dim = " +
                     std::to_string(steps * spec.input_dim));
}

void apply_activation(Activation a, Mat& z) {
  if (a == Activation::relu)
    z = z.cwiseMax(0.0);
  else
    z = z.array().tanh().matrix();
}

void run_forward(const View& w, const Mat& inputs, int steps, Tape& tape) {
  const ModelSpec& spec = *w.spec;
  check_inputs(spec, inputs, steps);
  const Eigen::Index batch = inputs.cols();
  tape.hidden.clear();
  tape.gate.clear();
  tape.denom.clear();
  tape.pre.clear();
  tape.act.clear();

  if (spec.has_ltc()) {
    const Eigen::Index h = spec.ltc_units;
    const Eigen::Index d = spec.input_dim;
    const auto& ltc = *w.ltc;
    const Vec inv_tau = ltc.tau.cwiseInverse();
    tape.hidden.emplace_back(Mat::Zero(h, batch));
    for (int t = 0; t < steps; ++t) {
      const Mat& state = tape.hidden.back();
      Mat pre = ltc.w_in * inputs.middleRows(t * d, d);
      pre.noalias() += ltc.w_rec * state;
      pre.colwise() += ltc.bias;
      Mat f = sigmoid(pre);
      Mat den = (spec.dt * f).array() + 1.0;
      den.colwise() += spec.dt * inv_tau;
      Mat next = state + spec.dt * (f.array().colwise() * ltc.amplitude.array()).matrix();
      next.array() /= den.array();
      tape.gate.push_back(std::move(f));
      tape.denom.push_back(std::move(den));
      tape.hidden.push_back(std::move(next));
    }
    tape.act.push_back(tape.hidden.back());
  } else {
    tape.act.push_back(inputs);
  }

  const std::size_t n_layers = w.kernels.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Mat z = w.kernels[l] * tape.act.back();
    z.colwise() += w.biases[l];
    tape.pre.push_back(z);
    if (l + 1 < n_layers) {
      apply_activation(spec.activation, z);
      tape.act.push_back(std::move(z));
    } else {
      tape.probs = sigmoid(z);
    }
  }
}

/// dLoss/dlogits for the sigmoid head.
Mat output_delta(const Mat& p, const Mat& y, LossKind kind) {
  const double batch = static_cast<double>(p.cols());
  if (kind == LossKind::bce) {
    const double scale = 1.0 / (batch * static_cast<double>(p.rows()));
    Mat d = (p - y) * scale;
    // The clamp is flat outside [kClamp, 1 - kClamp].
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        if (p(i, j) < kClamp || p(i, j) > 1.0 - kClamp) d(i, j) = 0.0;
    return d;
  }
  Mat d(p.rows(), p.cols());
  for (Eigen::Index s = 0; s < p.cols(); ++s) {
    const double overlap = p.col(s).dot(y.col(s));
    const double denom = p.col(s).sum() + y.col(s).sum() + kSoftF1Eps;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double dl_dp = -2.0 * (y(i, s) * denom - overlap) / (denom * denom) / batch;
      d(i, s) = dl_dp * p(i, s) * (1.0 - p(i, s));
    }
  }
  return d;
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string_view to_string(LossKind k) { return k == LossKind::bce ? "bce" : "soft_f1"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

LossKind parse_loss(std::string_view text) {
  if (text == "bce") return LossKind::bce;
  if (text == "soft_f1" || text == "f1") return LossKind::soft_f1;
  throw ConfigError("unknown loss '" + std::string(text) + "'");
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw ConfigError("model input_dim must be >= 1");
  if (ltc_units < 0) throw ConfigError("model ltc_units must be >= 0");
  if (output_dim < 1) throw ConfigError("model output_dim must be >= 1");
  for (int w : dense_layers)
    if (w < 1) throw ConfigError("dense layer widths must be >= 1");
  // dt == 0 is accepted: the solver degenerates to the identity map.
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw ConfigError("LTC dt must be non-negative");
  if (!(tau_init > 0.0)) throw ConfigError("LTC tau must be positive");
}

std::vector<ParamBlock> param_layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<ParamBlock> out;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    out.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  Eigen::Index width = spec.input_dim;
  if (spec.has_ltc()) {
    const Eigen::Index h = spec.ltc_units;
    add("ltc.input_kernel", h, spec.input_dim);
    add("ltc.recurrent_kernel", h, h);
    add("ltc.bias", h, 1);
    add("ltc.amplitude", h, 1);
    add("ltc.tau", h, 1);
    width = h;
  }
  for (std::size_t i = 0; i < spec.dense_layers.size(); ++i) {
    add("dense" + std::to_string(i) + ".kernel", spec.dense_layers[i], width);
    add("dense" + std::to_string(i) + ".bias", spec.dense_layers[i], 1);
    width = spec.dense_layers[i];
  }
  add("output.kernel", spec.output_dim, width);
  add("output.bias", spec.output_dim, 1);
  return out;
}

Eigen::Index param_count(const ModelSpec& spec) {
  const auto layout = param_layout(spec);
  return layout.back().offset + layout.back().size();
}

Weights initialize(const ModelSpec& spec, std::uint64_t seed) {
  Weights w{spec, Vec::Zero(param_count(spec))};
  Rng rng(seed);
  auto fill_uniform = [&](const ParamBlock& b, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < b.size(); ++i) w.params(b.offset + i) = dist(rng);
  };
  for (const auto& b : param_layout(spec)) {
    if (b.name == "ltc.input_kernel" || b.name == "ltc.recurrent_kernel") {
      fill_uniform(b, 0.1);
    } else if (b.name == "ltc.amplitude") {
      w.params.segment(b.offset, b.size()).setOnes();
    } else if (b.name == "ltc.tau") {
      w.params.segment(b.offset, b.size()).setConstant(spec.tau_init);
    } else if (b.name.ends_with(".kernel")) {
      fill_uniform(b, std::sqrt(6.0 / static_cast<double>(b.rows + b.cols)));
    }
  }
  return w;
}

Eigen::VectorXd ltc_step(const Eigen::VectorXd& h, const Eigen::VectorXd& x, const Weights& weights) {
  const ModelSpec& spec = weights.spec;
  if (!spec.has_ltc()) throw ShapeError("model has no LTC stage");
  if (h.size() != spec.ltc_units || x.size() != spec.input_dim) throw ShapeError("ltc_step: shape mismatch");
  if (!h.allFinite() || !x.allFinite()) throw NumericError("ltc_step: non-finite input");
  const View w(spec, weights.params);
  const auto& ltc = *w.ltc;
  const Vec f = sigmoid(ltc.w_in * x + ltc.w_rec * h + ltc.bias);
  const Vec num = h + spec.dt * f.cwiseProduct(ltc.amplitude);
  const Vec den = (1.0 + spec.dt * (ltc.tau.cwiseInverse() + f).array()).matrix();
  return num.cwiseQuotient(den);
}

Eigen::MatrixXd model_forward(const Weights& weights, const Eigen::MatrixXd& inputs, int steps) {
  const View w(weights.spec, weights.params);
  Tape tape;
  run_forward(w, inputs, steps, tape);
  return tape.probs;
}

Eigen::VectorXd model_forward(const Weights& weights, const Eigen::MatrixXd& sequence) {
  if (sequence.rows() != weights.spec.input_dim) throw ShapeError("sequence step dimension does not match model");
  const Mat stacked = sequence.reshaped(sequence.size(), 1);
  return model_forward(weights, stacked, static_cast<int>(sequence.cols())).col(0);
}

double loss(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y, LossKind kind) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw ShapeError("loss: prediction/label shape mismatch");
  if (p.size() == 0) return 0.0;
  if (kind == LossKind::bce) {
    const auto pc = p.array().max(kClamp).min(1.0 - kClamp);
    const double total = -(y.array() * pc.log() + (1.0 - y.array()) * (1.0 - pc).log()).sum();
    return total / static_cast<double>(p.size());
  }
  double total = 0.0;
  for (Eigen::Index s = 0; s < p.cols(); ++s) {
    const double overlap = p.col(s).dot(y.col(s));
    total += 1.0 - 2.0 * overlap / (p.col(s).sum() + y.col(s).sum() + kSoftF1Eps);
  }
  return total / static_cast<double>(p.cols());
}

Gradients backward_gradients(const Weights& weights, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& labels,
                             int steps, LossKind kind) {
  const ModelSpec& spec = weights.spec;
  const View w(spec, weights.params);
  Tape tape;
  run_forward(w, inputs, steps, tape);
  if (labels.rows() != spec.output_dim || labels.cols() != inputs.cols())
    throw ShapeError("labels shape does not match model output");

  Gradients out;
  out.loss = loss(tape.probs, labels, kind);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss at output layer");
  out.values = Vec::Zero(weights.params.size());
  GradView g(spec, out.values.data());

  Mat delta = output_delta(tape.probs, labels, kind);
  for (std::size_t l = w.kernels.size(); l-- > 0;) {
    g.kernels[l].noalias() += delta * tape.act[l].transpose();
    g.biases[l] += delta.rowwise().sum();
    Mat upstream = w.kernels[l].transpose() * delta;
    if (l == 0) {
      delta = std::move(upstream);
      break;
    }
    const Mat& z = tape.pre[l - 1];
    if (spec.activation == Activation::relu)
      delta = (z.array() > 0.0).select(upstream, 0.0);
    else
      delta = upstream.array() * (1.0 - z.array().tanh().square());
    if (!delta.allFinite())
      throw NumericError("non-finite gradient in dense layer " + std::to_string(l - 1));
  }

  if (spec.has_ltc()) {
    const Eigen::Index d = spec.input_dim;
    const double dt = spec.dt;
    const auto& ltc = *w.ltc;
    auto& gl = *g.ltc;
    const Vec inv_tau2 = ltc.tau.cwiseInverse().cwiseAbs2();
    Mat grad_h = std::move(delta);
    for (int t = steps; t-- > 0;) {
      const Mat& f = tape.gate[t];
      const Mat& den = tape.denom[t];
      const Mat& next = tape.hidden[t + 1];
      const Mat& prev = tape.hidden[t];
      const Mat d_num = grad_h.cwiseQuotient(den);
      const Mat d_den = -(grad_h.array() * next.array() / den.array()).matrix();
      gl.amplitude += dt * d_num.cwiseProduct(f).rowwise().sum();
      gl.tau -= dt * d_den.rowwise().sum().cwiseProduct(inv_tau2);
      Mat d_f = dt * (d_num.array().colwise() * ltc.amplitude.array() + d_den.array()).matrix();
      const Mat d_pre = (d_f.array() * f.array() * (1.0 - f.array())).matrix();
      gl.w_in.noalias() += d_pre * inputs.middleRows(t * d, d).transpose();
      gl.w_rec.noalias() += d_pre * prev.transpose();
      gl.bias += d_pre.rowwise().sum();
      grad_h = d_num;
      grad_h.noalias() += ltc.w_rec.transpose() * d_pre;
      if (!grad_h.allFinite()) throw NumericError("non-finite gradient in LTC step " + std::to_string(t));
    }
  }
  return out;
}

void adam_update(Weights& weights, const Eigen::VectorXd& gradients, AdamState& state, const AdamConfig& config) {
  const Eigen::Index n = weights.params.size();
  if (gradients.size() != n) throw ShapeError("adam_update: gradient size mismatch");
  if (state.m.size() != n) {
    state.m = Vec::Zero(n);
    state.v = Vec::Zero(n);
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * gradients;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * gradients.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  weights.params.array() -=
      config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
  if (weights.spec.has_ltc()) {
    for (const auto& b : param_layout(weights.spec)) {
      if (b.name != "ltc.tau") continue;
      auto tau = weights.params.segment(b.offset, b.size());
      tau = tau.cwiseMax(kMinTau);
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
}

double evaluate_loss(const Weights& weights, const TensorSet& set, LossKind kind) {
  const Eigen::Index n = set.size();
  if (n == 0) return 0.0;
  constexpr Eigen::Index chunk = 512;
  double total = 0.0;
  for (Eigen::Index begin = 0; begin < n; begin += chunk) {
    const Eigen::Index len = std::min(chunk, n - begin);
    const Mat p = model_forward(weights, set.inputs.middleCols(begin, len), set.steps);
    // bce averages over elements, soft_f1 over samples; both are per-sample means.
    total += loss(p, set.labels.middleCols(begin, len), kind) * static_cast<double>(len);
  }
  return total / static_cast<double>(n);
}

TrainResult train(const ModelSpec& spec, const TensorSet& train_set, const TensorSet& validation_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw ConfigError("training split is empty");
  if (train_set.labels.rows() != spec.output_dim) throw ShapeError("label width does not match model output");

  TrainResult result{initialize(spec, derive_seed(config.seed, streams::kTraining, 0)), {}};
  Weights current = result.weights;
  AdamState adam;
  const AdamConfig adam_cfg{config.learning_rate};
  Rng rng(derive_seed(config.seed, streams::kTraining, 1));
  const TensorSet& val = validation_set.size() > 0 ? validation_set : train_set;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), 0);
  Mat batch_in;
  Mat batch_lab;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    bool finite = true;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - begin);
      batch_in.resize(train_set.inputs.rows(), static_cast<Eigen::Index>(len));
      batch_lab.resize(train_set.labels.rows(), static_cast<Eigen::Index>(len));
      for (std::size_t i = 0; i < len; ++i) {
        batch_in.col(static_cast<Eigen::Index>(i)) = train_set.inputs.col(order[begin + i]);
        batch_lab.col(static_cast<Eigen::Index>(i)) = train_set.labels.col(order[begin + i]);
      }
      Gradients grads;
      try {
        grads = backward_gradients(current, batch_in, batch_lab, train_set.steps, config.loss);
      } catch (const NumericError&) {
        finite = false;
        break;
      }
      if (!std::isfinite(grads.loss) || !grads.values.allFinite()) {
        finite = false;
        break;
      }
      epoch_loss += grads.loss * static_cast<double>(len);
      adam_update(current, grads.values, adam, adam_cfg);
    }
    if (!finite || !current.params.allFinite()) {
      result.history.diverged = true;
      break;
    }
    const double val_loss = evaluate_loss(current, val, config.loss);
    if (!std::isfinite(val_loss)) {
      result.history.diverged = true;
      break;
    }
    result.history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    result.history.validation_loss.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      since_best = 0;
      result.weights = current;
      result.history.best_epoch = epoch;
      result.history.best_validation_loss = val_loss;
    } else if (++since_best >= config.patience) {
      result.history.stopped_early = true;
      break;
    }
  }
  if (result.history.best_epoch < 0) result.history.best_validation_loss = evaluate_loss(result.weights, val, config.loss);
  return result;
}

std::vector<int> predict_top_indices(const Weights& weights, const Eigen::MatrixXd& sequence, int m_labels) {
  const Vec p = model_forward(weights, sequence);
  return top_indices(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), m_labels);
}

namespace {

nlohmann::json spec_to_json(const ModelSpec& s) {
  return {{"input_dim", s.input_dim},   {"ltc_units", s.ltc_units},
          {"dense_layers", s.dense_layers}, {"output_dim", s.output_dim},
          {"activation", std::string(to_string(s.activation))},
          {"dt", s.dt},                 {"tau_init", s.tau_init}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.ltc_units = j.at("ltc_units").get<int>();
  s.dense_layers = j.at("dense_layers").get<std::vector<int>>();
  s.output_dim = j.at("output_dim").get<int>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.dt = j.at("dt").get<double>();
  s.tau_init = j.at("tau_init").get<double>();
  s.validate();
  return s;
}

}  // namespace

void save_weights(const Weights& weights, const std::string& metadata_json, const std::string& path) {
  nlohmann::json header;
  header["format"] = "lnnfama.weights";
  header["version"] = 1;
  header["spec"] = spec_to_json(weights.spec);
  header["param_count"] = weights.params.size();
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& b : param_layout(weights.spec))
    layout.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"order", "column_major"}});
  header["layout"] = std::move(layout);
  try {
    header["metadata"] = metadata_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("weights metadata is not valid JSON: ") + e.what());
  }
  detail::BlobWriter blob;
  for (Eigen::Index i = 0; i < weights.params.size(); ++i) blob.put(weights.params(i));
  detail::write_artifact(path, std::move(header), blob.data());
}

LoadedWeights load_weights(const std::string& path) {
  auto artifact = detail::read_artifact(path, "lnnfama.weights", 1);
  LoadedWeights out;
  try {
    out.weights.spec = spec_from_json(artifact.header.at("spec"));
    out.metadata_json = artifact.header.value("metadata", nlohmann::json::object()).dump();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("'" + path + "': bad weights header: " + e.what());
  }
  const Eigen::Index n = param_count(out.weights.spec);
  if (artifact.blob.size() != static_cast<std::size_t>(n) * sizeof(double))
    throw ShapeError("'" + path + "': parameter blob does not match model spec");
  out.weights.params.resize(n);
  detail::BlobReader reader(artifact.blob);
  for (Eigen::Index i = 0; i < n; ++i) out.weights.params(i) = reader.get<double>();
  return out;
}

}  // namespace lnnfama::nn
