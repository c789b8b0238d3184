// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/outage.hpp"

#include <map>
#include <string>

namespace lnnfama::fama {

namespace {

/// Policies sharing a predictor see one forward pass per realization.
class CachedPredictor final : public selection::PortPredictor {
 public:
  explicit CachedPredictor(const selection::PortPredictor* inner) : inner_(inner) {}
  int n_ports() const override { return inner_->n_ports(); }
  std::vector<double> probabilities(const selection::ObservedSequence& observed) const override {
    if (!valid_) {
      cached_ = inner_->probabilities(observed);
      valid_ = true;
    }
    return cached_;
  }
  void invalidate() { valid_ = false; }

 private:
  const selection::PortPredictor* inner_;
  mutable std::vector<double> cached_;
  mutable bool valid_ = false;
};

}  // namespace

double policy_sinr(const PolicyUnderTest& p, const channel::ChannelRealization& realization,
                   const SinrVector& sinr, const selection::PortSets& ports, const SystemConfig& system) {
  if (p.policy.k == 1)
    return sinr.values[static_cast<std::size_t>(selection::select_port(p.policy, sinr, ports, p.predictor))];
  const auto chosen = selection::select_topk_mrc(p.policy, sinr, ports, p.predictor, p.policy.k);
  return sinr_mrc(realization, system, chosen);
}

PairedOutage evaluate_policies(std::span<const PolicyUnderTest> policies, const SystemConfig& system,
                               const channel::AntennaConfig& antenna, const channel::FadingParams& params,
                               std::span<const int> observed, std::int64_t trials, std::uint64_t master_seed,
                               int workers) {
  if (trials < 1) throw std::invalid_argument("estimate_outage: trials must be >= 1");
  system.validate();
  antenna.validate();
  for (const auto& p : policies) {
    p.policy.validate(antenna.n_ports);
    if (p.policy.kind == selection::PolicyKind::model_assisted && p.predictor == nullptr)
      throw std::invalid_argument("model-assisted policy requires a predictor");
  }
  const auto ports = selection::PortSets::from_observed(antenna.n_ports, {observed.begin(), observed.end()});
  const auto factor = channel::factorize_correlation(channel::build_correlation_matrix(antenna));
  const double threshold = system.threshold_linear();
  const std::size_t n_policies = policies.size();

  struct Tally {
    std::vector<std::int64_t> outages;
    std::vector<std::int64_t> discordant;  // row-major n_policies^2
  };
  const int n_workers = std::max(1, workers);
  std::vector<Tally> tallies(static_cast<std::size_t>(n_workers));
  const std::size_t chunk = (static_cast<std::size_t>(trials) + n_workers - 1) / n_workers;

  parallel_for(static_cast<std::size_t>(n_workers), n_workers, [&](std::size_t w) {
    Tally& tally = tallies[w];
    tally.outages.assign(n_policies, 0);
    tally.discordant.assign(n_policies * n_policies, 0);
    channel::ChannelGenerator gen(system, antenna, params, factor);
    channel::ChannelRealization realization;
    SinrVector sinr;
    std::vector<char> out(n_policies);
    std::map<const selection::PortPredictor*, CachedPredictor> caches;
    std::vector<PolicyUnderTest> local(policies.begin(), policies.end());
    for (auto& p : local) {
      if (p.predictor == nullptr) continue;
      p.predictor = &caches.try_emplace(p.predictor, p.predictor).first->second;
    }
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(static_cast<std::size_t>(trials), begin + chunk);
    for (std::size_t t = begin; t < end; ++t) {
      gen.generate(derive_seed(master_seed, streams::kOutage, t), realization);
      sinr_per_port(realization, system, sinr);
      for (auto& [key, cache] : caches) cache.invalidate();
      for (std::size_t i = 0; i < n_policies; ++i) {
        out[i] = policy_sinr(local[i], realization, sinr, ports, system) < threshold;
        tally.outages[i] += out[i];
      }
      for (std::size_t i = 0; i < n_policies; ++i)
        for (std::size_t j = 0; j < n_policies; ++j) tally.discordant[i * n_policies + j] += out[i] && !out[j];
    }
  });

  PairedOutage result;
  result.discordant.assign(n_policies, std::vector<std::int64_t>(n_policies, 0));
  std::vector<std::int64_t> totals(n_policies, 0);
  for (const auto& tally : tallies) {
    for (std::size_t i = 0; i < n_policies; ++i) {
      totals[i] += tally.outages[i];
      for (std::size_t j = 0; j < n_policies; ++j) result.discordant[i][j] += tally.discordant[i * n_policies + j];
    }
  }
  for (std::size_t i = 0; i < n_policies; ++i) result.estimates.push_back(wilson_estimate(totals[i], trials));
  return result;
}

OutageEstimate estimate_outage(const selection::Policy& policy, const SystemConfig& system,
                               const channel::AntennaConfig& antenna, const channel::FadingParams& params,
                               std::int64_t trials, std::uint64_t master_seed, std::span<const int> observed,
                               const selection::PortPredictor* predictor, int workers) {
  const PolicyUnderTest p{policy, predictor};
  return evaluate_policies({&p, 1}, system, antenna, params, observed, trials, master_seed, workers)
      .estimates.front();
}

}  // namespace lnnfama::fama
