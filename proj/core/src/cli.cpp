// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lnnfama/dataset.hpp"
#include "lnnfama/outage.hpp"
#include "lnnfama/selection.hpp"

namespace lnnfama::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config I/O

json threshold_to_json(double db) {
  if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
  return db;
}

double threshold_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ConfigError("system.gamma_th_db: expected a number, \"inf\" or \"-inf\", got \"" + s + "\"");
  }
  return j.get<double>();
}

std::vector<std::string> loss_names(const std::vector<nn::LossKind>& losses) {
  std::vector<std::string> out;
  for (auto l : losses) out.emplace_back(nn::to_string(l));
  return out;
}

std::string_view objective_name(hpo::Objective o) { return o == hpo::Objective::outage ? "outage" : "loss"; }

hpo::Objective parse_objective(const std::string& s) {
  if (s == "outage") return hpo::Objective::outage;
  if (s == "loss") return hpo::Objective::loss;
  throw ConfigError("hpo.objective must be \"outage\" or \"loss\", got \"" + s + "\"");
}

json config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["channel"] = {{"alpha", c.fading.alpha},
                  {"mu", c.fading.mu},
                  {"n_ports", c.antenna.n_ports},
                  {"aperture", c.antenna.aperture}};
  j["system"] = {{"n_users", c.system.n_users},
                 {"signal_power", c.system.signal_power},
                 {"noise_power", c.system.noise_power},
                 {"gamma_th_db", threshold_to_json(c.system.gamma_th_db)},
                 {"interference_mode", std::string(to_string(c.system.interference_mode))}};
  j["dataset"] = {{"count", c.dataset.count},
                  {"m_observed", c.dataset.m_observed},
                  {"m_labels", c.dataset.m_labels},
                  {"path", c.dataset.path},
                  {"export_csv", c.dataset.export_csv}};
  const auto& t = c.train;
  j["train"] = {{"ltc_units", t.ltc_units},
                {"dense_layers", t.dense_layers},
                {"activation", std::string(nn::to_string(t.activation))},
                {"dt", t.dt},
                {"tau_init", t.tau_init},
                {"pca", t.pca},
                {"learning_rate", t.optimizer.learning_rate},
                {"epochs", t.optimizer.epochs},
                {"batch_size", t.optimizer.batch_size},
                {"loss", std::string(nn::to_string(t.optimizer.loss))},
                {"patience", t.optimizer.patience}};
  const auto& s = c.hpo.space;
  j["hpo"] = {{"budget", c.hpo.budget},
              {"objective", std::string(objective_name(c.hpo.objective))},
              {"ltc_units_min", s.ltc_units_min},
              {"ltc_units_max", s.ltc_units_max},
              {"dense_layers_min", s.dense_layers_min},
              {"dense_layers_max", s.dense_layers_max},
              {"dense_width_min", s.dense_width_min},
              {"dense_width_max", s.dense_width_max},
              {"learning_rate_min", s.learning_rate_min},
              {"learning_rate_max", s.learning_rate_max},
              {"losses", loss_names(s.losses)},
              {"pca_probability", s.pca_probability},
              {"m_labels", s.m_labels},
              {"epochs", s.epochs},
              {"batch_size", s.batch_size},
              {"patience", s.patience},
              {"activation", std::string(nn::to_string(s.activation))},
              {"sweep_m_values", c.hpo.sweep_m_values}};
  const auto& e = c.eval;
  j["eval"] = {{"trials", e.trials},
               {"policy", e.policy},
               {"lookup_budget", e.lookup_budget},
               {"k_combine", e.k_combine},
               {"model_path", e.model_path},
               {"models_dir", e.models_dir},
               {"observed_counts", e.observed_counts},
               {"j_values", e.j_values},
               {"k_values", e.k_values},
               {"mrc_policies", e.mrc_policies},
               {"alphas", e.alphas},
               {"mus", e.mus},
               {"fading_policies", e.fading_policies}};
  return j;
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    return;
  }
  if (prefix.empty()) throw ConfigError("configuration must be a JSON object");
  if (out.count(prefix)) throw ConfigError("config key '" + prefix + "' given twice");
  out[prefix] = j;
}

template <class T>
T get_as(const std::map<std::string, json>& flat, const std::string& key) {
  try {
    return flat.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

RunConfig from_flat(const std::map<std::string, json>& f) {
  RunConfig c;
  c.seed = get_as<std::uint64_t>(f, "seed");
  c.output_dir = get_as<std::string>(f, "output_dir");
  c.workers = get_as<int>(f, "workers");
  c.fading = channel::FadingParams::unit_power(get_as<double>(f, "channel.alpha"), get_as<int>(f, "channel.mu"));
  c.antenna.n_ports = get_as<int>(f, "channel.n_ports");
  c.antenna.aperture = get_as<double>(f, "channel.aperture");
  c.system.n_users = get_as<int>(f, "system.n_users");
  c.system.signal_power = get_as<double>(f, "system.signal_power");
  c.system.noise_power = get_as<double>(f, "system.noise_power");
  try {
    c.system.gamma_th_db = threshold_from_json(f.at("system.gamma_th_db"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key 'system.gamma_th_db': ") + e.what());
  }
  c.system.interference_mode = parse_interference_mode(get_as<std::string>(f, "system.interference_mode"));
  c.dataset.count = get_as<std::size_t>(f, "dataset.count");
  c.dataset.m_observed = get_as<int>(f, "dataset.m_observed");
  c.dataset.m_labels = get_as<int>(f, "dataset.m_labels");
  c.dataset.path = get_as<std::string>(f, "dataset.path");
  c.dataset.export_csv = get_as<bool>(f, "dataset.export_csv");
  auto& t = c.train;
  t.ltc_units = get_as<int>(f, "train.ltc_units");
  t.dense_layers = get_as<std::vector<int>>(f, "train.dense_layers");
  t.activation = nn::parse_activation(get_as<std::string>(f, "train.activation"));
  t.dt = get_as<double>(f, "train.dt");
  t.tau_init = get_as<double>(f, "train.tau_init");
  t.pca = get_as<bool>(f, "train.pca");
  t.optimizer.learning_rate = get_as<double>(f, "train.learning_rate");
  t.optimizer.epochs = get_as<int>(f, "train.epochs");
  t.optimizer.batch_size = get_as<int>(f, "train.batch_size");
  t.optimizer.loss = nn::parse_loss(get_as<std::string>(f, "train.loss"));
  t.optimizer.patience = get_as<int>(f, "train.patience");
  auto& s = c.hpo.space;
  c.hpo.budget = get_as<int>(f, "hpo.budget");
  c.hpo.objective = parse_objective(get_as<std::string>(f, "hpo.objective"));
  s.ltc_units_min = get_as<int>(f, "hpo.ltc_units_min");
  s.ltc_units_max = get_as<int>(f, "hpo.ltc_units_max");
  s.dense_layers_min = get_as<int>(f, "hpo.dense_layers_min");
  s.dense_layers_max = get_as<int>(f, "hpo.dense_layers_max");
  s.dense_width_min = get_as<int>(f, "hpo.dense_width_min");
  s.dense_width_max = get_as<int>(f, "hpo.dense_width_max");
  s.learning_rate_min = get_as<double>(f, "hpo.learning_rate_min");
  s.learning_rate_max = get_as<double>(f, "hpo.learning_rate_max");
  s.losses.clear();
  for (const auto& name : get_as<std::vector<std::string>>(f, "hpo.losses")) s.losses.push_back(nn::parse_loss(name));
  s.pca_probability = get_as<double>(f, "hpo.pca_probability");
  s.m_labels = get_as<std::vector<int>>(f, "hpo.m_labels");
  s.epochs = get_as<int>(f, "hpo.epochs");
  s.batch_size = get_as<int>(f, "hpo.batch_size");
  s.patience = get_as<int>(f, "hpo.patience");
  s.activation = nn::parse_activation(get_as<std::string>(f, "hpo.activation"));
  c.hpo.sweep_m_values = get_as<std::vector<int>>(f, "hpo.sweep_m_values");
  auto& e = c.eval;
  e.trials = get_as<std::int64_t>(f, "eval.trials");
  e.policy = get_as<std::string>(f, "eval.policy");
  e.lookup_budget = get_as<int>(f, "eval.lookup_budget");
  e.k_combine = get_as<int>(f, "eval.k_combine");
  e.model_path = get_as<std::string>(f, "eval.model_path");
  e.models_dir = get_as<std::string>(f, "eval.models_dir");
  e.observed_counts = get_as<std::vector<int>>(f, "eval.observed_counts");
  e.j_values = get_as<std::vector<int>>(f, "eval.j_values");
  e.k_values = get_as<std::vector<int>>(f, "eval.k_values");
  e.mrc_policies = get_as<std::vector<std::string>>(f, "eval.mrc_policies");
  e.alphas = get_as<std::vector<double>>(f, "eval.alphas");
  e.mus = get_as<std::vector<int>>(f, "eval.mus");
  e.fading_policies = get_as<std::vector<std::string>>(f, "eval.fading_policies");
  return c;
}

RunConfig merge(const RunConfig& base, const std::map<std::string, json>& updates) {
  std::map<std::string, json> flat;
  flatten(config_json(base), "", flat);
  for (const auto& [key, value] : updates) {
    auto it = flat.find(key);
    if (it == flat.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }
  RunConfig c = from_flat(flat);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- artifacts

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string threshold_text(double db) {
  if (std::isinf(db)) return db > 0 ? "inf" : "-inf";
  return fmt_g(db);
}

std::string policy_name(selection::PolicyKind k) { return std::string(selection::to_string(k)); }

struct CurveRow {
  int m_observed;
  selection::Policy policy;
  double alpha;
  int mu;
  double gamma_th_db;
  fama::OutageEstimate estimate;
  std::uint64_t seed;
};

class CurveWriter {
 public:
  explicit CurveWriter(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    out_ << kCurveHeader << '\n';
  }
  void write(const CurveRow& r) {
    const int j = r.policy.kind == selection::PolicyKind::model_assisted ? r.policy.lookup_budget : 0;
    out_ << r.m_observed << ',' << policy_name(r.policy.kind) << ',' << j << ',' << r.policy.k << ','
         << fmt_g(r.alpha) << ',' << r.mu << ',' << threshold_text(r.gamma_th_db) << ','
         << fmt_g(r.estimate.probability) << ',' << fmt_g(r.estimate.ci_low) << ',' << fmt_g(r.estimate.ci_high)
         << ',' << r.estimate.trials << ',' << r.seed << '\n';
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

fs::path output_root(const RunConfig& c) {
  fs::path root = c.output_dir.empty() ? fs::path(default_output_dir()) : fs::path(c.output_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create output directory '" + root.string() + "': " + ec.message());
  return root;
}

fs::path models_dir(const RunConfig& c, const fs::path& root) {
  fs::path dir = c.eval.models_dir.empty() ? root / "models" : fs::path(c.eval.models_dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- pipeline pieces

dataset::DatasetSplit make_dataset(const RunConfig& c, const channel::FadingParams& fading, int m_observed) {
  return dataset::build_dataset(c.system, c.antenna, fading, m_observed, c.dataset.m_labels, c.dataset.count,
                                derive_seed(c.seed, streams::kDataset, static_cast<std::uint64_t>(m_observed)),
                                c.workers);
}

dataset::DatasetSplit input_dataset(const RunConfig& c, std::ostream& log) {
  if (c.dataset.path.empty()) {
    log << "building dataset: " << c.dataset.count << " samples, m=" << c.dataset.m_observed << '\n';
    return make_dataset(c, c.fading, c.dataset.m_observed);
  }
  if (!fs::exists(c.dataset.path)) throw IoError("dataset '" + c.dataset.path + "' does not exist");
  auto data = dataset::load_dataset(c.dataset.path, {c.antenna.n_ports, c.dataset.m_observed});
  if (data.meta.m_labels != c.dataset.m_labels) dataset::relabel(data, c.dataset.m_labels);
  return data;
}

hpo::StudyOptions study_options(const RunConfig& c, const fs::path& log_dir) {
  hpo::StudyOptions o;
  o.objective = c.hpo.objective;
  o.threshold_linear = c.system.threshold_linear();
  o.workers = c.workers;
  o.log_dir = log_dir.string();
  return o;
}

/// Study over one base dataset; each label count gets its own relabelled copy.
hpo::StudyResult study_on(const RunConfig& c, const dataset::DatasetSplit& base, std::uint64_t seed,
                          const fs::path& log_dir) {
  std::map<int, dataset::DatasetSplit> relabelled;
  auto factory = [&](int m_labels) -> const dataset::DatasetSplit& {
    auto it = relabelled.find(m_labels);
    if (it == relabelled.end()) {
      dataset::DatasetSplit copy = base;
      if (copy.meta.m_labels != m_labels) dataset::relabel(copy, m_labels);
      it = relabelled.emplace(m_labels, std::move(copy)).first;
    }
    return it->second;
  };
  return hpo::run_study(c.hpo.space, factory, c.hpo.budget, seed, study_options(c, log_dir));
}

std::string model_stem(const channel::FadingParams& fading, int m_observed) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "m%d_a%g_u%d", m_observed, fading.alpha, fading.mu);
  return buf;
}

/// Reuses <models_dir>/<stem>.weights when present; otherwise runs a study and stores its best model.
hpo::ModelPredictor obtain_predictor(const RunConfig& c, const fs::path& dir, const channel::FadingParams& fading,
                                     int m_observed, std::ostream& log) {
  const fs::path file = dir / (model_stem(fading, m_observed) + ".weights");
  if (fs::exists(file)) {
    auto model = hpo::ModelPredictor::load(file.string());
    if (model.n_ports() != c.antenna.n_ports || model.m_observed() != m_observed)
      throw ShapeError("'" + file.string() + "' was trained for N=" + std::to_string(model.n_ports()) +
                       ", m=" + std::to_string(model.m_observed()));
    log << "reusing model " << file.string() << '\n';
    return model;
  }
  log << "training model for m=" << m_observed << " (alpha=" << fading.alpha << ", mu=" << fading.mu
      << "): study of " << c.hpo.budget << " trials\n";
  const auto started = std::chrono::steady_clock::now();
  const auto data = make_dataset(c, fading, m_observed);
  const auto study = study_on(c, data, derive_seed(c.seed, streams::kTrial, static_cast<std::uint64_t>(m_observed)),
                              dir / ("study_" + model_stem(fading, m_observed)));
  const auto& best = study.best_trial();
  best.model->save(file.string());
  log << "  best trial " << best.index << ": objective " << best.objective << ", "
      << std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() << " s\n";
  return *best.model;
}

selection::Policy make_policy(const std::string& name, int j, int k) {
  selection::Policy p;
  p.kind = selection::parse_policy_kind(name);
  p.lookup_budget = j;
  p.k = k;
  return p;
}

bool needs_model(const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (selection::parse_policy_kind(n) == selection::PolicyKind::model_assisted) return true;
  return false;
}

json estimate_json(const fama::OutageEstimate& e) {
  return {{"op", e.probability}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}, {"outages", e.outages},
          {"trials", e.trials}};
}

/// Evaluates `policies` on one paired stream and appends rows plus a paired record.
void evaluate_block(const RunConfig& c, const channel::FadingParams& fading, int m_observed,
                    const std::vector<fama::PolicyUnderTest>& policies, CurveWriter& csv, json& paired) {
  const auto observed = selection::observed_indices(c.antenna.n_ports, m_observed);
  const auto result = fama::evaluate_policies(policies, c.system, c.antenna, fading, observed, c.eval.trials, c.seed,
                                              c.workers);
  json block;
  block["m_observed"] = m_observed;
  block["alpha"] = fading.alpha;
  block["mu"] = fading.mu;
  json labels = json::array();
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto& p = policies[i].policy;
    csv.write({m_observed, p, fading.alpha, fading.mu, c.system.gamma_th_db, result.estimates[i], c.seed});
    labels.push_back({{"policy", policy_name(p.kind)},
                      {"j_budget", p.kind == selection::PolicyKind::model_assisted ? p.lookup_budget : 0},
                      {"k_combine", p.k},
                      {"estimate", estimate_json(result.estimates[i])}});
  }
  block["policies"] = std::move(labels);
  block["discordant"] = result.discordant;
  paired.push_back(std::move(block));
}

void finish_paired(const fs::path& path, const RunConfig& c, const json& blocks) {
  json doc;
  doc["seed"] = c.seed;
  doc["trials"] = c.eval.trials;
  doc["note"] = "discordant[i][j] counts realizations where policy i was in outage and policy j was not";
  doc["blocks"] = blocks;
  write_text(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------- commands

void cmd_generate_data(const RunConfig& c, const fs::path& root, std::ostream& log) {
  log << "building dataset: " << c.dataset.count << " samples, m=" << c.dataset.m_observed << '\n';
  const auto data = make_dataset(c, c.fading, c.dataset.m_observed);
  dataset::save_dataset(data, (root / "dataset.bin").string());
  if (c.dataset.export_csv) dataset::export_csv(data, (root / "dataset.csv").string());
  log << "wrote " << (root / "dataset.bin").string() << " (" << data.train.size() << '/' << data.validation.size()
      << '/' << data.test.size() << ")\n";
}

void cmd_train(const RunConfig& c, const fs::path& root, std::ostream& log) {
  const auto data = input_dataset(c, log);
  const int m = data.meta.m_observed;
  dataset::Normalizer norm;
  norm.fit(data.train, m, c.train.pca);
  nn::ModelSpec spec;
  spec.input_dim = norm.step_dim();
  spec.ltc_units = c.train.pca ? 0 : c.train.ltc_units;
  spec.dense_layers = c.train.dense_layers;
  spec.output_dim = data.meta.n_ports;
  spec.activation = c.train.activation;
  spec.dt = c.train.dt;
  spec.tau_init = c.train.tau_init;
  nn::TrainConfig tc = c.train.optimizer;
  tc.seed = derive_seed(c.seed, streams::kTraining, 0);

  const auto train_set = dataset::to_tensors(data.train, norm, m);
  const auto val_set = dataset::to_tensors(data.validation, norm, m);
  const auto test_set = dataset::to_tensors(data.test, norm, m);
  auto result = nn::train(spec, train_set, val_set, tc);
  if (result.history.best_epoch < 0) throw NumericError("training diverged before the first checkpoint");
  const hpo::ModelPredictor model(result.weights, norm, data.meta.n_ports, m);
  model.save((root / "model.weights").string());

  json h;
  h["train_loss"] = result.history.train_loss;
  h["validation_loss"] = result.history.validation_loss;
  h["best_epoch"] = result.history.best_epoch;
  h["best_validation_loss"] = result.history.best_validation_loss;
  h["diverged"] = result.history.diverged;
  h["stopped_early"] = result.history.stopped_early;
  h["test_loss"] = nn::evaluate_loss(result.weights, test_set, tc.loss);
  h["test_outage"] =
      estimate_json(hpo::sample_outage(model, data.test, data.meta.observed_ports, c.system.threshold_linear()));
  write_text(root / "train_history.json", h.dump(2) + "\n");
  log << "best epoch " << result.history.best_epoch << ", validation loss " << result.history.best_validation_loss
      << "; wrote " << (root / "model.weights").string() << '\n';
}

void cmd_study(const RunConfig& c, const fs::path& root, std::ostream& log) {
  const auto data = input_dataset(c, log);
  log << "study: " << c.hpo.budget << " trials\n";
  const auto study = study_on(c, data, derive_seed(c.seed, streams::kTrial, 0), root / "study");
  const auto& best = study.best_trial();
  best.model->save((root / "model.weights").string());
  json s;
  s["best_trial"] = best.index;
  s["best_objective"] = best.objective;
  s["best_validation_loss"] = best.validation_loss;
  s["best_config"] = {{"ltc_units", best.config.ltc_units},
                      {"dense_layers", best.config.dense_layers},
                      {"learning_rate", best.config.learning_rate},
                      {"loss", std::string(nn::to_string(best.config.loss))},
                      {"pca", best.config.pca},
                      {"m_labels", best.config.m_labels}};
  json trials = json::array();
  for (const auto& t : study.trials)
    trials.push_back({{"index", t.index},
                      {"failed", t.failed},
                      {"objective", std::isfinite(t.objective) ? json(t.objective) : json(nullptr)}});
  s["trials"] = std::move(trials);
  write_text(root / "study_summary.json", s.dump(2) + "\n");
  log << "best trial " << best.index << " (objective " << best.objective << ")\n";
}

void cmd_eval_op(const RunConfig& c, const fs::path& root, std::ostream& log) {
  const auto policy = make_policy(c.eval.policy, c.eval.lookup_budget, c.eval.k_combine);
  const bool model = policy.kind == selection::PolicyKind::model_assisted;
  CurveWriter csv(root / "eval_op.csv");
  json paired = json::array();
  for (int m : c.eval.observed_counts) {
    std::optional<hpo::ModelPredictor> predictor;
    if (model) {
      if (!c.eval.model_path.empty()) {
        if (!fs::exists(c.eval.model_path)) throw IoError("model '" + c.eval.model_path + "' does not exist");
        predictor = hpo::ModelPredictor::load(c.eval.model_path);
      } else {
        predictor = obtain_predictor(c, models_dir(c, root), c.fading, m, log);
      }
    }
    log << "eval-op: m=" << m << ", " << c.eval.trials << " trials\n";
    evaluate_block(c, c.fading, m, {{policy, predictor ? &*predictor : nullptr}}, csv, paired);
  }
  csv.close();
  finish_paired(root / "eval_op_paired.json", c, paired);
}

void cmd_curve_observed(const RunConfig& c, const fs::path& root, std::ostream& log) {
  CurveWriter csv(root / "curve_observed.csv");
  json paired = json::array();
  const auto dir = models_dir(c, root);
  for (int m : c.eval.observed_counts) {
    const auto predictor = obtain_predictor(c, dir, c.fading, m, log);
    std::vector<fama::PolicyUnderTest> policies{{make_policy("ideal", 1, 1), nullptr},
                                                {make_policy("reference", 1, 1), nullptr}};
    for (int j : c.eval.j_values) policies.push_back({make_policy("model", j, 1), &predictor});
    log << "curve-observed: m=" << m << ", " << c.eval.trials << " trials\n";
    evaluate_block(c, c.fading, m, policies, csv, paired);
  }
  csv.close();
  finish_paired(root / "curve_observed_paired.json", c, paired);
}

void cmd_curve_mrc(const RunConfig& c, const fs::path& root, std::ostream& log) {
  CurveWriter csv(root / "curve_mrc.csv");
  json paired = json::array();
  const bool model = needs_model(c.eval.mrc_policies);
  const auto dir = models_dir(c, root);
  for (int m : c.eval.observed_counts) {
    std::optional<hpo::ModelPredictor> predictor;
    if (model) predictor = obtain_predictor(c, dir, c.fading, m, log);
    std::vector<fama::PolicyUnderTest> policies;
    for (int k : c.eval.k_values)
      for (const auto& name : c.eval.mrc_policies) {
        const auto kind = selection::parse_policy_kind(name);
        // The reference policy can only combine ports it observes.
        if (kind == selection::PolicyKind::reference && k > m) continue;
        const bool is_model = kind == selection::PolicyKind::model_assisted;
        policies.push_back({make_policy(name, k, k), is_model ? &*predictor : nullptr});
      }
    log << "curve-mrc: m=" << m << ", " << c.eval.trials << " trials\n";
    evaluate_block(c, c.fading, m, policies, csv, paired);
  }
  csv.close();
  finish_paired(root / "curve_mrc_paired.json", c, paired);
}

void cmd_curve_fading(const RunConfig& c, const fs::path& root, std::ostream& log) {
  std::vector<std::pair<double, int>> grid;
  auto add = [&](double a, int u) {
    if (std::find(grid.begin(), grid.end(), std::make_pair(a, u)) == grid.end()) grid.emplace_back(a, u);
  };
  for (double a : c.eval.alphas) add(a, c.fading.mu);
  for (int u : c.eval.mus) add(c.fading.alpha, u);
  const bool model = needs_model(c.eval.fading_policies);
  const auto dir = models_dir(c, root);

  CurveWriter csv(root / "curve_fading.csv");
  json paired = json::array();
  for (const auto& [alpha, mu] : grid) {
    const auto fading = channel::FadingParams::unit_power(alpha, mu);
    for (int m : c.eval.observed_counts) {
      std::optional<hpo::ModelPredictor> predictor;
      if (model) predictor = obtain_predictor(c, dir, fading, m, log);
      std::vector<fama::PolicyUnderTest> policies;
      for (const auto& name : c.eval.fading_policies) {
        const bool is_model = selection::parse_policy_kind(name) == selection::PolicyKind::model_assisted;
        policies.push_back({make_policy(name, c.eval.lookup_budget, c.eval.k_combine), is_model ? &*predictor : nullptr});
      }
      log << "curve-fading: alpha=" << alpha << ", mu=" << mu << ", m=" << m << '\n';
      evaluate_block(c, fading, m, policies, csv, paired);
    }
  }
  csv.close();
  finish_paired(root / "curve_fading_paired.json", c, paired);
}

void cmd_sweep_classes(const RunConfig& c, const fs::path& root, std::ostream& log) {
  auto factory = [&](int m_observed) {
    log << "sweep-classes: building dataset for m=" << m_observed << '\n';
    return make_dataset(c, c.fading, m_observed);
  };
  const auto table = hpo::class_count_sweep(c.eval.observed_counts, c.hpo.sweep_m_values, c.hpo.space, factory,
                                            c.hpo.budget, c.seed, study_options(c, root / "sweep"));
  hpo::write_sweep_csv(table, (root / "sweep_classes.csv").string());
  json j;
  j["observed_counts"] = table.observed_counts;
  j["m_values"] = table.m_values;
  j["best_m"] = table.best_m;
  json rows = json::array();
  for (const auto& row : table.cells) {
    json r = json::array();
    for (const auto& cell : row) r.push_back(cell.failed ? json(nullptr) : json(cell.outage));
    rows.push_back(std::move(r));
  }
  j["outage"] = std::move(rows);
  write_text(root / "sweep_classes.json", j.dump(2) + "\n");
}

using Command = void (*)(const RunConfig&, const fs::path&, std::ostream&);

const std::map<std::string, Command>& command_table() {
  static const std::map<std::string, Command> table{
      {"generate-data", cmd_generate_data}, {"train", cmd_train},
      {"study", cmd_study},                 {"eval-op", cmd_eval_op},
      {"curve-observed", cmd_curve_observed}, {"curve-mrc", cmd_curve_mrc},
      {"curve-fading", cmd_curve_fading},   {"sweep-classes", cmd_sweep_classes}};
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  fading.validate();
  antenna.validate();
  system.validate();
  if (dataset.count < 10) throw ConfigError("dataset.count must be >= 10");
  if (dataset.m_observed < 2 || dataset.m_observed > antenna.n_ports)
    throw ConfigError("dataset.m_observed must lie in [2, channel.n_ports]");
  if (dataset.m_labels < 1 || dataset.m_labels > antenna.n_ports)
    throw ConfigError("dataset.m_labels must lie in [1, channel.n_ports]");
  if (!(train.dt > 0.0)) throw ConfigError("train.dt must be positive");
  if (!(train.tau_init > 0.0)) throw ConfigError("train.tau_init must be positive");
  if (train.ltc_units < 0) throw ConfigError("train.ltc_units must be >= 0");
  train.optimizer.validate();
  if (hpo.budget < 1) throw ConfigError("hpo.budget must be >= 1");
  hpo.space.validate();
  for (int m : hpo.space.m_labels)
    if (m > antenna.n_ports) throw ConfigError("hpo.m_labels entries must not exceed channel.n_ports");
  for (int m : hpo.sweep_m_values)
    if (m < 1 || m > antenna.n_ports) throw ConfigError("hpo.sweep_m_values entries must lie in [1, channel.n_ports]");
  if (eval.trials < 1) throw ConfigError("eval.trials must be >= 1");
  make_policy(eval.policy, eval.lookup_budget, eval.k_combine).validate(antenna.n_ports);
  for (int m : eval.observed_counts)
    if (m < 2 || m > antenna.n_ports) throw ConfigError("eval.observed_counts entries must lie in [2, channel.n_ports]");
  for (int j : eval.j_values)
    if (j < 1 || j > antenna.n_ports) throw ConfigError("eval.j_values entries must lie in [1, channel.n_ports]");
  for (int k : eval.k_values)
    if (k < 1 || k > antenna.n_ports) throw ConfigError("eval.k_values entries must lie in [1, channel.n_ports]");
  for (const auto& p : eval.mrc_policies) selection::parse_policy_kind(p);
  for (const auto& p : eval.fading_policies) selection::parse_policy_kind(p);
  for (double a : eval.alphas) channel::FadingParams::unit_power(a, fading.mu).validate();
  for (int u : eval.mus) channel::FadingParams::unit_power(fading.alpha, u).validate();
}

std::string to_json(const RunConfig& config) { return config_json(config).dump(2) + "\n"; }

RunConfig from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  std::map<std::string, json> flat;
  flatten(j, "", flat);
  return merge(RunConfig{}, flat);
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& assignments) {
  std::map<std::string, json> updates;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq), text = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    updates[key] = std::move(value);
  }
  return merge(config, updates);
}

std::string default_output_dir() {
  const char* env = std::getenv("LNNFAMA_OUTPUT_DIR");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string("lnnfama_out");
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : command_table()) out.push_back(name);
    return out;
  }();
  return names;
}

void dispatch(const std::string& command, const RunConfig& config, std::ostream& log) {
  const auto it = command_table().find(command);
  if (it == command_table().end()) throw UsageError("unknown command '" + command + "'");
  config.validate();
  RunConfig resolved = config;
  const fs::path root = output_root(config);
  resolved.output_dir = root.string();
  write_text(root / (command + ".config.json"), to_json(resolved));
  it->second(resolved, root, log);
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const UsageError*>(&error)) return exit_codes::kUsage;
  if (dynamic_cast<const ConfigError*>(&error)) return exit_codes::kConfig;
  if (dynamic_cast<const std::invalid_argument*>(&error)) return exit_codes::kConfig;
  if (dynamic_cast<const IoError*>(&error)) return exit_codes::kIo;
  if (dynamic_cast<const fs::filesystem_error*>(&error)) return exit_codes::kIo;
  if (dynamic_cast<const NumericError*>(&error)) return exit_codes::kNumeric;
  if (dynamic_cast<const IntegrityError*>(&error)) return exit_codes::kIntegrity;
  if (dynamic_cast<const ShapeError*>(&error)) return exit_codes::kIntegrity;
  return exit_codes::kUsage;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fluid antenna multiple access simulator with LTC port prediction"};
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::optional<int> workers;
  std::vector<std::string> overrides;
  std::string command_list;
  for (const auto& name : commands()) command_list += (command_list.empty() ? "" : ", ") + name;
  app.add_option("command", command, "One of: " + command_list)->required();
  app.add_option("overrides", overrides, "Config overrides as dotted key=value");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--trials", trials, "Monte Carlo trials (HPO trials for study and sweep-classes)");
  app.add_option("--workers", workers, "Worker threads");
  app.add_option("--out", out_dir, "Output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_codes::kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_codes::kUsage;
  }

  try {
    if (!command_table().count(command)) throw UsageError("unknown command '" + command + "' (expected " + command_list + ")");
    RunConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot read config '" + config_path + "'");
      std::stringstream text;
      text << in.rdbuf();
      config = from_json(text.str());
    }
    std::vector<std::string> assignments = overrides;
    if (seed) assignments.push_back("seed=" + std::to_string(*seed));
    if (workers) assignments.push_back("workers=" + std::to_string(*workers));
    if (trials) {
      const bool hpo_command = command == "study" || command == "sweep-classes";
      assignments.push_back((hpo_command ? "hpo.budget=" : "eval.trials=") + std::to_string(*trials));
    }
    if (!out_dir.empty()) assignments.push_back("output_dir=" + json(out_dir).dump());
    config = apply_overrides(config, assignments);
    dispatch(command, config, out);
    return exit_codes::kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace lnnfama::cli
