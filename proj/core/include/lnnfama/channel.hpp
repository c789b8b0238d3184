// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "lnnfama/common.hpp"
#include "lnnfama/system.hpp"

namespace lnnfama::channel {

/// alpha-mu envelope parameters. `rhat` is the alpha-root mean value,
/// rhat^alpha = E[R^alpha].
struct FadingParams {
  double alpha = 2.0;
  int mu = 2;
  double rhat = 1.0;

  /// Parameters with rhat chosen so that E[R^2] = 1.
  static FadingParams unit_power(double alpha, int mu);
  void validate() const;
};

/// rhat giving E[R^2] = 1: rhat^2 = mu^(2/alpha) Gamma(mu) / Gamma(mu + 2/alpha).
double unit_power_rhat(double alpha, int mu);

/// Linear fluid antenna: `n_ports` equally spaced ports over `aperture` wavelengths.
struct AntennaConfig {
  int n_ports = 100;
  double aperture = 5.0;

  void validate() const;
};

struct CorrelationFactor {
  Eigen::MatrixXd matrix;
  /// Lower-triangular, factor * factor^T == matrix + jitter_applied * I.
  Eigen::MatrixXd factor;
  double jitter_applied = 0.0;
  std::string method = "cholesky";
};

/// U x N complex gains; row 0 is the desired link g^{(u,u)}, row i > 0 the
/// i-th interfering BS antenna g^{(i,u)}.
struct ChannelRealization {
  Eigen::MatrixXcd gains;
  std::uint64_t seed = 0;

  int n_users() const { return static_cast<int>(gains.rows()); }
  int n_ports() const { return static_cast<int>(gains.cols()); }
};

struct Envelope {
  Eigen::VectorXd amplitude;
  Eigen::VectorXd phase;
};

/// Zeroth-order Bessel function of the first kind. Power series for
/// |x| <= 12, Hankel asymptotic expansion beyond; absolute error below 1e-10.
double bessel_j0(double x);

/// Jakes-type spatial correlation: entry (n, k) = J0(2 pi |n - k| W / (N - 1)).
Eigen::MatrixXd build_correlation_matrix(const AntennaConfig& antenna);

/// Cholesky factor with the smallest diagonal jitter from {0, 1e-12, 1e-10, ..., 1e-4}
/// that makes the factorization succeed.
CorrelationFactor factorize_correlation(const Eigen::MatrixXd& matrix);

/// Maps 2*mu rows of correlated standard Gaussians (one column per port) to
/// alpha-mu amplitudes R_n = (sigma^2 sum_i z_{i,n}^2)^(1/alpha), sigma^2 = rhat^alpha / (2 mu),
/// and phases arg(z_{0,n} + j z_{1,n}).
Envelope envelope_from_gaussians(const Eigen::MatrixXd& z, const FadingParams& params);

/// Draws one realization. Every row is independent; within a row, the 2*mu
/// Gaussian layers are each spatially correlated through `factor`.
ChannelRealization generate_realization(const SystemConfig& system, const AntennaConfig& antenna,
                                        const FadingParams& params, const CorrelationFactor& factor,
                                        std::uint64_t seed);

/// Reusable generator holding scratch buffers; same output as
/// generate_realization for the same seed.
class ChannelGenerator {
 public:
  ChannelGenerator(const SystemConfig& system, const AntennaConfig& antenna, const FadingParams& params,
                   const CorrelationFactor& factor);

  void generate(std::uint64_t seed, ChannelRealization& out);
  ChannelRealization generate(std::uint64_t seed);

  /// Fills `layers` (2 mu x N) with correlated standard Gaussians.
  void correlated_layers(Rng& rng, Eigen::MatrixXd& layers);

  const AntennaConfig& antenna() const { return antenna_; }
  const FadingParams& params() const { return params_; }

 private:
  int n_users_;
  AntennaConfig antenna_;
  FadingParams params_;
  const CorrelationFactor* factor_;
  Eigen::MatrixXd white_;
  Eigen::MatrixXd layers_;
};

}  // namespace lnnfama::channel
