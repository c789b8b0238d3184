// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/channel.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

namespace lnnfama {

std::string_view to_string(InterferenceMode mode) {
  return mode == InterferenceMode::as_written ? "as_written" : "incoherent";
}

InterferenceMode parse_interference_mode(std::string_view text) {
  if (text == "as_written") return InterferenceMode::as_written;
  if (text == "incoherent") return InterferenceMode::incoherent;
  throw ConfigError("unknown interference mode '" + std::string(text) + "'");
}

double SystemConfig::threshold_linear() const { return std::pow(10.0, gamma_th_db / 10.0); }

void SystemConfig::validate() const {
  if (n_users < 1) throw ConfigError("system.n_users must be >= 1");
  if (!(signal_power > 0.0) || !std::isfinite(signal_power))
    throw ConfigError("system.signal_power must be positive");
  if (!(noise_power > 0.0) || !std::isfinite(noise_power))
    throw ConfigError("system.noise_power must be positive");
  if (std::isnan(gamma_th_db)) throw ConfigError("system.gamma_th_db is NaN");
}

}  // namespace lnnfama

namespace lnnfama::channel {

double unit_power_rhat(double alpha, int mu) {
  const double m = static_cast<double>(mu);
  const double rhat2 = std::pow(m, 2.0 / alpha) * std::exp(std::lgamma(m) - std::lgamma(m + 2.0 / alpha));
  return std::sqrt(rhat2);
}

FadingParams FadingParams::unit_power(double alpha, int mu) {
  FadingParams p{alpha, mu, 1.0};
  p.validate();
  p.rhat = unit_power_rhat(alpha, mu);
  return p;
}

void FadingParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("channel.alpha must be positive");
  if (mu < 1) throw ConfigError("channel.mu must be an integer >= 1");
  if (!(rhat > 0.0) || !std::isfinite(rhat)) throw ConfigError("channel.rhat must be positive");
}

void AntennaConfig::validate() const {
  if (n_ports < 2) throw ConfigError("channel.n_ports must be >= 2");
  if (!(aperture > 0.0) || !std::isfinite(aperture)) throw ConfigError("channel.aperture must be positive");
}

double bessel_j0(double x) {
  x = std::abs(x);
  if (x <= 12.0) {
    const double q = 0.25 * x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 200; ++k) {
      term *= -q / (static_cast<double>(k) * k);
      sum += term;
      if (std::abs(term) < 1e-18) break;
    }
    return sum;
  }
  // Hankel expansion; a_k = a_{k-1} * (-(2k-1)^2) / (8k), truncated at the smallest term.
  double p = 1.0;
  double q = 0.0;
  double a = 1.0;
  double xpow = 1.0;
  double last = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 100; ++k) {
    a *= -static_cast<double>((2 * k - 1) * (2 * k - 1)) / (8.0 * k);
    xpow *= x;
    const double term = a / xpow;
    if (std::abs(term) >= last || std::abs(term) < 1e-18) break;
    last = std::abs(term);
    // Even k feed P with sign (-1)^(k/2); odd k feed Q with sign (-1)^((k-1)/2).
    if (k % 2 == 0) {
      p += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    } else {
      q += (((k - 1) / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    }
  }
  const double w = x - 0.25 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(w) - q * std::sin(w));
}

Eigen::MatrixXd build_correlation_matrix(const AntennaConfig& antenna) {
  antenna.validate();
  const int n = antenna.n_ports;
  const double step = 2.0 * std::numbers::pi * antenna.aperture / (n - 1);
  // Toeplitz: one Bessel evaluation per lag.
  Eigen::VectorXd by_lag(n);
  for (int lag = 0; lag < n; ++lag) by_lag(lag) = lag == 0 ? 1.0 : bessel_j0(step * lag);
  Eigen::MatrixXd r(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) r(i, j) = by_lag(std::abs(i - j));
  return r;
}

CorrelationFactor factorize_correlation(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
    throw ShapeError("correlation matrix must be square and non-empty");
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericError("correlation matrix is not symmetric");
  const Eigen::Index n = matrix.rows();
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4}) {
    Eigen::MatrixXd shifted = matrix;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd l = llt.matrixL();
    if (!l.allFinite()) continue;
    const double err = (l * l.transpose() - shifted).cwiseAbs().maxCoeff();
    if (err > 1e-8) continue;
    CorrelationFactor out;
    out.matrix = matrix;
    out.factor = std::move(l);
    out.jitter_applied = jitter;
    return out;
  }
  throw NumericError("Cholesky factorization failed up to jitter 1e-4 (n = " + std::to_string(n) + ")");
}

Envelope envelope_from_gaussians(const Eigen::MatrixXd& z, const FadingParams& params) {
  params.validate();
  if (z.rows() != 2 * params.mu)
    throw ShapeError("expected " + std::to_string(2 * params.mu) + " Gaussian rows, got " +
                     std::to_string(z.rows()));
  const double sigma2 = std::pow(params.rhat, params.alpha) / (2.0 * params.mu);
  const double inv_alpha = 1.0 / params.alpha;
  Envelope env;
  env.amplitude.resize(z.cols());
  env.phase.resize(z.cols());
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    env.amplitude(n) = std::pow(sigma2 * z.col(n).squaredNorm(), inv_alpha);
    env.phase(n) = std::atan2(z(1, n), z(0, n));
  }
  return env;
}

ChannelGenerator::ChannelGenerator(const SystemConfig& system, const AntennaConfig& antenna,
                                   const FadingParams& params, const CorrelationFactor& factor)
    : n_users_(system.n_users),
      antenna_(antenna),
      params_(FadingParams::unit_power(params.alpha, params.mu)),
      factor_(&factor) {
  system.validate();
  antenna.validate();
  if (factor.factor.rows() != antenna.n_ports || factor.factor.cols() != antenna.n_ports)
    throw ShapeError("correlation factor is " + std::to_string(factor.factor.rows()) + "x" +
                     std::to_string(factor.factor.cols()) + ", antenna has " +
                     std::to_string(antenna.n_ports) + " ports");
  white_.resize(antenna.n_ports, 2 * params_.mu);
  layers_.resize(2 * params_.mu, antenna.n_ports);
}

void ChannelGenerator::correlated_layers(Rng& rng, Eigen::MatrixXd& layers) {
  std::normal_distribution<double> normal;
  for (Eigen::Index c = 0; c < white_.cols(); ++c)
    for (Eigen::Index r = 0; r < white_.rows(); ++r) white_(r, c) = normal(rng);
  layers.noalias() = (factor_->factor.triangularView<Eigen::Lower>() * white_).transpose();
}

void ChannelGenerator::generate(std::uint64_t seed, ChannelRealization& out) {
  Rng rng(seed);
  out.seed = seed;
  out.gains.resize(n_users_, antenna_.n_ports);
  const double sigma2 = std::pow(params_.rhat, params_.alpha) / (2.0 * params_.mu);
  const double inv_alpha = 1.0 / params_.alpha;
  for (int u = 0; u < n_users_; ++u) {
    correlated_layers(rng, layers_);
    for (Eigen::Index n = 0; n < layers_.cols(); ++n) {
      const double amp = std::pow(sigma2 * layers_.col(n).squaredNorm(), inv_alpha);
      const double re = layers_(0, n);
      const double im = layers_(1, n);
      const double mag = std::hypot(re, im);
      // amp * e^{j arg(re + j im)}
      out.gains(u, n) = mag > 0.0 ? std::complex<double>(amp * re / mag, amp * im / mag)
                                  : std::complex<double>(amp, 0.0);
    }
  }
}

ChannelRealization ChannelGenerator::generate(std::uint64_t seed) {
  ChannelRealization out;
  generate(seed, out);
  return out;
}

ChannelRealization generate_realization(const SystemConfig& system, const AntennaConfig& antenna,
                                        const FadingParams& params, const CorrelationFactor& factor,
                                        std::uint64_t seed) {
  ChannelGenerator gen(system, antenna, params, factor);
  return gen.generate(seed);
}

}  // namespace lnnfama::channel
