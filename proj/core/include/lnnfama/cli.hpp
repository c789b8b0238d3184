// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lnnfama/channel.hpp"
#include "lnnfama/common.hpp"
#include "lnnfama/hpo.hpp"
#include "lnnfama/nn.hpp"
#include "lnnfama/system.hpp"

namespace lnnfama::cli {

/// Unknown command or malformed command line.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Everything a run depends on. Serialized as JSON with namespaced keys
/// (channel.*, system.*, dataset.*, train.*, hpo.*, eval.*); nested objects
/// and dotted keys are equivalent. Infinite thresholds are written as the
/// strings "inf" / "-inf".
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir;
  int workers = 1;

  channel::FadingParams fading = channel::FadingParams::unit_power(2.0, 2);
  channel::AntennaConfig antenna;
  SystemConfig system;

  struct Dataset {
    std::size_t count = 10000;
    int m_observed = 5;
    int m_labels = 3;
    /// Input dataset for train / study; generated in memory when empty.
    std::string path;
    bool export_csv = false;
  } dataset;

  struct Train {
    int ltc_units = 32;
    std::vector<int> dense_layers{64};
    nn::Activation activation = nn::Activation::relu;
    double dt = 1.0;
    double tau_init = 1.0;
    bool pca = false;
    nn::TrainConfig optimizer;
  } train;

  struct Hpo {
    int budget = 20;
    hpo::Objective objective = hpo::Objective::outage;
    hpo::SearchSpace space;
    std::vector<int> sweep_m_values{1, 2, 3, 4, 5, 10};
  } hpo;

  struct Eval {
    std::int64_t trials = 100000;
    std::string policy = "ideal";
    int lookup_budget = 1;
    int k_combine = 1;
    /// Weights file for eval-op with the model policy.
    std::string model_path;
    /// Where curve commands look for and store per-m models; <output>/models when empty.
    std::string models_dir;
    std::vector<int> observed_counts{5, 10, 15, 20};
    std::vector<int> j_values{1, 2, 4};
    std::vector<int> k_values{1, 2, 4, 6};
    std::vector<std::string> mrc_policies{"ideal", "reference", "model"};
    std::vector<double> alphas{1.5, 2.0, 3.0};
    std::vector<int> mus{1, 2, 3};
    std::vector<std::string> fading_policies{"ideal", "reference"};
  } eval;

  void validate() const;
};

/// Canonical JSON text of a configuration (the resolved-config snapshot).
std::string to_json(const RunConfig& config);

/// Parses a JSON document over the defaults. Unknown keys raise ConfigError.
RunConfig from_json(const std::string& text);

/// Applies `key=value` overrides (dotted keys; the value is parsed as JSON,
/// falling back to a plain string).
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& assignments);

/// Default output directory: $LNNFAMA_OUTPUT_DIR, else "lnnfama_out".
std::string default_output_dir();

const std::vector<std::string>& commands();

/// Header of every OP curve CSV.
inline constexpr const char* kCurveHeader =
    "m_observed,policy,j_budget,k_combine,alpha,mu,gamma_th_db,op,ci_low,ci_high,trials,seed";

/// Runs one command. Artifacts go to config.output_dir together with a
/// resolved-config snapshot; progress lines go to `log`. Failures throw the
/// lnnfama::Error hierarchy.
void dispatch(const std::string& command, const RunConfig& config, std::ostream& log);

/// Process exit status for an exception raised by dispatch or config parsing.
int exit_code_for(const std::exception& error);

/// Full command line: `lnnfama <command> [--config FILE] [--seed N] [--trials N]
/// [--workers N] [--out DIR] [key=value ...]`. Returns the exit status.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

namespace exit_codes {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kConfig = 2;
inline constexpr int kIo = 3;
inline constexpr int kNumeric = 4;
inline constexpr int kIntegrity = 5;
}  // namespace exit_codes

}  // namespace lnnfama::cli
