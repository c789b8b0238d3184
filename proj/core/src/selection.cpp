// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace lnnfama::selection {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::ideal:
      return "ideal";
    case PolicyKind::reference:
      return "reference";
    case PolicyKind::model_assisted:
      return "model";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "ideal") return PolicyKind::ideal;
  if (text == "reference") return PolicyKind::reference;
  if (text == "model" || text == "model_assisted") return PolicyKind::model_assisted;
  throw ConfigError("unknown policy '" + std::string(text) + "'");
}

void Policy::validate(int n_ports) const {
  if (k < 1 || k > n_ports) throw ConfigError("policy k must be in [1, N]");
  if (kind == PolicyKind::model_assisted && (lookup_budget < 1 || lookup_budget > n_ports))
    throw ConfigError("policy lookup budget J must be in [1, N]");
}

PortSets PortSets::from_observed(int n_ports, std::vector<int> observed) {
  std::sort(observed.begin(), observed.end());
  if (std::adjacent_find(observed.begin(), observed.end()) != observed.end())
    throw std::invalid_argument("observed port set has duplicates");
  if (!observed.empty() && (observed.front() < 0 || observed.back() >= n_ports))
    throw std::invalid_argument("observed port index out of range");
  PortSets sets;
  std::vector<char> seen(static_cast<std::size_t>(n_ports), 0);
  for (int p : observed) seen[static_cast<std::size_t>(p)] = 1;
  for (int p = 0; p < n_ports; ++p)
    if (!seen[static_cast<std::size_t>(p)]) sets.unobserved.push_back(p);
  sets.observed = std::move(observed);
  return sets;
}

std::vector<int> observed_indices(int n_ports, int m_observed) {
  if (m_observed < 2 || m_observed > n_ports)
    throw std::invalid_argument("observed port count " + std::to_string(m_observed) + " outside [2, " +
                                std::to_string(n_ports) + "]");
  // round_half_up(i (N-1) / (m-1)) in exact integer arithmetic.
  const long long span = n_ports - 1;
  const long long denom = m_observed - 1;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(m_observed));
  for (long long i = 0; i < m_observed; ++i) {
    int idx = static_cast<int>((2 * i * span + denom) / (2 * denom));
    if (!out.empty() && idx <= out.back()) idx = out.back() + 1;
    out.push_back(idx);
  }
  return out;
}

std::vector<int> permitted_ports(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                                 const PortPredictor* predictor) {
  const int n = sinr.size();
  if (ports.n_ports() != n)
    throw ShapeError("port sets cover " + std::to_string(ports.n_ports()) + " ports, SINR vector has " +
                     std::to_string(n));
  switch (policy.kind) {
    case PolicyKind::ideal: {
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case PolicyKind::reference:
      return ports.observed;
    case PolicyKind::model_assisted: {
      if (predictor == nullptr) throw std::invalid_argument("model-assisted policy requires a predictor");
      if (predictor->n_ports() != n) throw ShapeError("predictor port count does not match SINR vector");
      std::vector<double> observed_sinr;
      observed_sinr.reserve(ports.observed.size());
      for (int p : ports.observed) observed_sinr.push_back(sinr.values[static_cast<std::size_t>(p)]);
      const auto probs = predictor->probabilities({ports.observed, observed_sinr, n});
      if (static_cast<int>(probs.size()) != n) throw ShapeError("predictor returned wrong number of ports");
      const int j = std::min<int>(policy.lookup_budget, static_cast<int>(ports.unobserved.size()));
      std::vector<int> out = ports.observed;
      const auto extra = top_indices_among(probs, ports.unobserved, j);
      out.insert(out.end(), extra.begin(), extra.end());
      return out;
    }
  }
  return {};
}

int select_port(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                const PortPredictor* predictor) {
  const auto permitted = permitted_ports(policy, sinr, ports, predictor);
  if (permitted.empty()) throw std::invalid_argument("policy has no permitted ports");
  return top_indices_among(sinr.values, permitted, 1).front();
}

std::vector<int> select_topk_mrc(const Policy& policy, const fama::SinrVector& sinr, const PortSets& ports,
                                 const PortPredictor* predictor, int k) {
  if (k < 1) throw std::invalid_argument("select_topk_mrc: k must be >= 1");
  const auto permitted = permitted_ports(policy, sinr, ports, predictor);
  if (static_cast<std::size_t>(k) > permitted.size())
    throw std::invalid_argument("select_topk_mrc: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(permitted.size()) + " ports the policy may rank");
  return top_indices_among(sinr.values, permitted, k);
}

}  // namespace lnnfama::selection
