// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "lnnfama/fama.hpp"

namespace lnnfama::selection {

enum class PolicyKind { ideal, reference, model_assisted };

std::string_view to_string(PolicyKind kind);
/// Accepts "ideal", "reference", "model" and "model_assisted".
PolicyKind parse_policy_kind(std::string_view text);

struct Policy {
  PolicyKind kind = PolicyKind::ideal;
  /// J: number of model-indicated unobserved ports whose SINR is additionally measured.
  int lookup_budget = 1;
  /// K: number of ports combined (1 = single-port selection).
  int k = 1;

  void validate(int n_ports) const;
};

/// Observed / unobserved / selected port index sets over {0, ..., N-1}.
struct PortSets {
  std::vector<int> observed;
  std::vector<int> unobserved;
  std::vector<int> selected;
  int k = 0;

  static PortSets from_observed(int n_ports, std::vector<int> observed);
  int n_ports() const { return static_cast<int>(observed.size() + unobserved.size()); }
};

/// What a predictor is allowed to see: the observed ports (ascending) and
/// their measured SINR values.
struct ObservedSequence {
  std::span<const int> ports;
  std::span<const double> sinr;
  int n_ports = 0;
};

/// Model-agnostic predictor: observed sequence in, one probability per port out.
/// Implementations must be safe to call concurrently.
class PortPredictor {
 public:
  virtual ~PortPredictor() = default;
  virtual int n_ports() const = 0;
  virtual std::vector<double> probabilities(const ObservedSequence& observed) const = 0;
};

/// Ports placed uniformly over the aperture, both endpoints included:
/// index_i = round_half_up(i (N-1) / (m-1)).
std::vector<int> observed_indices(int n_ports, int m_observed);

/// Ports whose true SINR the policy may read: all ports (ideal), the observed
/// set (reference), or observed plus the J unobserved ports the predictor ranks highest.
std::vector<int> permitted_ports(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                                 const PortPredictor* predictor);

/// Single best port among the permitted set; ties go to the lowest index.
int select_port(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                const PortPredictor* predictor = nullptr);

/// The k best ports among the permitted set, best first.
std::vector<int> select_topk_mrc(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                                 const PortPredictor* predictor, int k);

}  // namespace lnnfama::selection
