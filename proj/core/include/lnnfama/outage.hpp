// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lnnfama/channel.hpp"
#include "lnnfama/fama.hpp"
#include "lnnfama/selection.hpp"

namespace lnnfama::fama {

struct PolicyUnderTest {
  selection::Policy policy;
  const selection::PortPredictor* predictor = nullptr;
};

/// Outage counts for several policies evaluated on one shared stream of
/// realizations. discordant[i][j] counts trials where policy i was in outage
/// and policy j was not.
struct PairedOutage {
  std::vector<OutageEstimate> estimates;
  std::vector<std::vector<std::int64_t>> discordant;
};

/// SINR the policy obtains on one realization: per-port SINR of the selected
/// port when k == 1, MRC SINR of the top-k permitted ports otherwise.
double policy_sinr(const PolicyUnderTest& policy, const channel::ChannelRealization& realization,
                   const SinrVector& sinr, const selection::PortSets& ports, const SystemConfig& system);

/// Monte Carlo outage for every policy over the same `trials` realizations.
/// Trial t uses seed derive_seed(master_seed, kOutage, t), so the result is
/// independent of `workers`.
PairedOutage evaluate_policies(std::span<const PolicyUnderTest> policies, const SystemConfig& system,
                               const channel::AntennaConfig& antenna, const channel::FadingParams& params,
                               std::span<const int> observed, std::int64_t trials, std::uint64_t master_seed,
                               int workers = 1);

OutageEstimate estimate_outage(const selection::Policy& policy, const SystemConfig& system,
                               const channel::AntennaConfig& antenna, const channel::FadingParams& params,
                               std::int64_t trials, std::uint64_t master_seed, std::span<const int> observed = {},
                               const selection::PortPredictor* predictor = nullptr, int workers = 1);

}  // namespace lnnfama::fama
