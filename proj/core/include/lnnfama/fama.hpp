// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lnnfama/channel.hpp"
#include "lnnfama/system.hpp"

namespace lnnfama::fama {

/// Linear per-port SINR of user `user_index` (always 0 here).
struct SinrVector {
  std::vector<double> values;
  int user_index = 0;

  int size() const { return static_cast<int>(values.size()); }
};

struct OutageEstimate {
  double probability = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t outages = 0;
  std::int64_t trials = 0;
};

/// gamma_n = s |g_n|^2 / (s sum_{i>0} |h_{i,n}|^2 + noise).
SinrVector sinr_per_port(const channel::ChannelRealization& realization, const SystemConfig& system);
void sinr_per_port(const channel::ChannelRealization& realization, const SystemConfig& system,
                   SinrVector& out);

/// Post-combining SINR of MRC over the ports in `selected`. The interference
/// term follows system.interference_mode.
double sinr_mrc(const channel::ChannelRealization& realization, const SystemConfig& system,
                std::span<const int> selected);

/// Wilson score interval at 95% (z = 1.959964).
OutageEstimate wilson_estimate(std::int64_t outages, std::int64_t trials);

}  // namespace lnnfama::fama
