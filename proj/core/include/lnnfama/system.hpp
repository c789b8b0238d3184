// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace lnnfama {

/// How the MRC interference term combines the interferers.
///   as_written: sigma_s^2 * sum_n |sum_i conj(g_n) h_{i,n}|^2 (coherent across interferers per port)
///   incoherent: sigma_s^2 * sum_i |sum_n conj(g_n) h_{i,n}|^2 (standard MRC output interference)
/// Both coincide with the per-port SINR when one port and one interferer are involved.
enum class InterferenceMode { as_written, incoherent };

std::string_view to_string(InterferenceMode mode);
InterferenceMode parse_interference_mode(std::string_view text);

/// Downlink multi-user parameters. User 0 is the observed user; rows 1..U-1
/// of a realization are the interfering BS antennas.
struct SystemConfig {
  int n_users = 2;
  double signal_power = 1.0;
  double noise_power = 1e-4;
  /// +/-infinity are accepted and force the outage probability to 1/0.
  double gamma_th_db = -2.0;
  InterferenceMode interference_mode = InterferenceMode::as_written;

  double threshold_linear() const;
  void validate() const;
};

}  // namespace lnnfama
