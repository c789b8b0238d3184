// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/fama.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace lnnfama::fama {

namespace {

void check_shape(const channel::ChannelRealization& r, const SystemConfig& system) {
  if (r.n_users() != system.n_users)
    throw ShapeError("realization has " + std::to_string(r.n_users()) + " users, system expects " +
                     std::to_string(system.n_users));
}

}  // namespace

void sinr_per_port(const channel::ChannelRealization& realization, const SystemConfig& system,
                   SinrVector& out) {
  check_shape(realization, system);
  const int n = realization.n_ports();
  out.user_index = 0;
  out.values.resize(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    double interference = 0.0;
    for (int u = 1; u < system.n_users; ++u) interference += std::norm(realization.gains(u, p));
    out.values[static_cast<std::size_t>(p)] =
        system.signal_power * std::norm(realization.gains(0, p)) /
        (system.signal_power * interference + system.noise_power);
  }
}

SinrVector sinr_per_port(const channel::ChannelRealization& realization, const SystemConfig& system) {
  SinrVector out;
  sinr_per_port(realization, system, out);
  return out;
}

double sinr_mrc(const channel::ChannelRealization& realization, const SystemConfig& system,
                std::span<const int> selected) {
  check_shape(realization, system);
  if (selected.empty()) throw std::invalid_argument("sinr_mrc: empty port set");
  const int n = realization.n_ports();
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i] < 0 || selected[i] >= n)
      throw std::invalid_argument("sinr_mrc: port index " + std::to_string(selected[i]) + " out of range");
    for (std::size_t j = 0; j < i; ++j)
      if (selected[i] == selected[j])
        throw std::invalid_argument("sinr_mrc: duplicate port index " + std::to_string(selected[i]));
  }

  double gain_sum = 0.0;
  for (int p : selected) gain_sum += std::norm(realization.gains(0, p));

  double interference = 0.0;
  if (system.interference_mode == InterferenceMode::as_written) {
    for (int p : selected) {
      std::complex<double> acc{0.0, 0.0};
      for (int u = 1; u < system.n_users; ++u) acc += std::conj(realization.gains(0, p)) * realization.gains(u, p);
      interference += std::norm(acc);
    }
  } else {
    for (int u = 1; u < system.n_users; ++u) {
      std::complex<double> acc{0.0, 0.0};
      for (int p : selected) acc += std::conj(realization.gains(0, p)) * realization.gains(u, p);
      interference += std::norm(acc);
    }
  }
  const double numerator = system.signal_power * gain_sum * gain_sum;
  const double denominator = system.signal_power * interference + system.noise_power * gain_sum;
  return numerator / denominator;
}

OutageEstimate wilson_estimate(std::int64_t outages, std::int64_t trials) {
  OutageEstimate est;
  est.outages = outages;
  est.trials = trials;
  if (trials <= 0) {
    est.ci_high = 1.0;
    return est;
  }
  constexpr double z = 1.959963984540054;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(outages) / n;
  const double z2 = z * z;
  const double center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  est.probability = p;
  est.ci_low = std::clamp(center - half, 0.0, p);
  est.ci_high = std::clamp(center + half, p, 1.0);
  return est;
}

}  // namespace lnnfama::fama
