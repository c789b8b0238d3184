// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "lnnfama/channel.hpp"

namespace lc = lnnfama::channel;

namespace {

// J0(x) = (1/pi) * integral_0^pi cos(x sin t) dt, composite Simpson.
double j0_quadrature(double x) {
  const int n = 20000;
  const double h = std::numbers::pi / n;
  double sum = 1.0 + std::cos(x * std::sin(std::numbers::pi));
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * std::cos(x * std::sin(i * h));
  return sum * h / 3.0 / std::numbers::pi;
}

double moment_formula(double alpha, int mu, double rhat, double k) {
  return std::pow(rhat, k) * std::tgamma(mu + k / alpha) / (std::pow(mu, k / alpha) * std::tgamma(mu));
}

}  // namespace

TEST(Bessel, MatchesQuadratureOverWideRange) {
  for (double x = 0.0; x <= 40.0; x += 0.37) EXPECT_NEAR(lc::bessel_j0(x), j0_quadrature(x), 1e-10) << "x=" << x;
  EXPECT_NEAR(lc::bessel_j0(-3.3), lc::bessel_j0(3.3), 1e-15);
}

TEST(Bessel, KnownValues) {
  EXPECT_DOUBLE_EQ(lc::bessel_j0(0.0), 1.0);
  EXPECT_NEAR(lc::bessel_j0(std::numbers::pi), -0.30424217764409384, 1e-12);
  EXPECT_NEAR(lc::bessel_j0(2.0 * std::numbers::pi), 0.2202769085, 1e-9);
}

TEST(Correlation, ThreePortsUnitAperture) {
  const auto r = lc::build_correlation_matrix({3, 1.0});
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(r(i, i), 1.0);
  EXPECT_NEAR(r(0, 1), -0.304242, 1e-6);
  EXPECT_NEAR(r(0, 2), j0_quadrature(2.0 * std::numbers::pi), 1e-10);
  EXPECT_EQ(r, r.transpose());
}

TEST(Correlation, RejectsBadAntenna) {
  EXPECT_THROW(lc::build_correlation_matrix({1, 1.0}), lnnfama::ConfigError);
  EXPECT_THROW(lc::build_correlation_matrix({10, -1.0}), lnnfama::ConfigError);
}

TEST(Factorize, IdentityNeedsNoJitter) {
  const auto f = lc::factorize_correlation(Eigen::MatrixXd::Identity(4, 4));
  EXPECT_TRUE(f.factor.isApprox(Eigen::MatrixXd::Identity(4, 4)));
  EXPECT_EQ(f.jitter_applied, 0.0);
  EXPECT_EQ(f.method, "cholesky");
}

TEST(Factorize, TwoByTwoClosedForm) {
  Eigen::Matrix2d m;
  m << 1.0, 0.5, 0.5, 1.0;
  const auto f = lc::factorize_correlation(m);
  EXPECT_NEAR(f.factor(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(f.factor(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(f.factor(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(f.factor(1, 1), std::sqrt(0.75), 1e-15);
}

TEST(Factorize, DefaultAntennaReconstructs) {
  const auto r = lc::build_correlation_matrix({100, 5.0});
  const auto f = lc::factorize_correlation(r);
  const Eigen::MatrixXd back = f.factor * f.factor.transpose();
  const Eigen::MatrixXd target = r + f.jitter_applied * Eigen::MatrixXd::Identity(100, 100);
  EXPECT_LE((back - target).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(f.factor.isLowerTriangular());
}

TEST(Factorize, RejectsAsymmetric) {
  Eigen::Matrix2d m;
  m << 1.0, 0.5, 0.2, 1.0;
  EXPECT_THROW(lc::factorize_correlation(m), lnnfama::NumericError);
}

TEST(Envelope, RayleighHandExample) {
  Eigen::MatrixXd z(2, 1);
  z << 1.0, 0.0;
  const auto e = lc::envelope_from_gaussians(z, {2.0, 1, 1.0});
  EXPECT_NEAR(e.amplitude(0), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(e.phase(0), 0.0, 1e-15);
}

TEST(Envelope, RowCountMustBeTwoMu) {
  EXPECT_THROW(lc::envelope_from_gaussians(Eigen::MatrixXd::Zero(3, 5), {2.0, 2, 1.0}), lnnfama::ShapeError);
}

TEST(Envelope, UnitPowerRhat) {
  for (double alpha : {1.5, 2.0, 3.0})
    for (int mu : {1, 2, 3}) {
      const auto p = lc::FadingParams::unit_power(alpha, mu);
      EXPECT_NEAR(moment_formula(alpha, mu, p.rhat, 2.0), 1.0, 1e-12);
    }
  EXPECT_NEAR(lc::unit_power_rhat(2.0, 1), 1.0, 1e-12);
}

TEST(Envelope, MomentsMatchGammaFormula) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (double alpha : {1.5, 3.0})
    for (int mu : {1, 3}) {
      const lc::FadingParams p{alpha, mu, 1.3};
      const int n = 200000;
      Eigen::MatrixXd z(2 * mu, n);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
      const auto e = lc::envelope_from_gaussians(z, p);
      for (double k : {1.0, 2.0}) {
        const double empirical = e.amplitude.array().pow(k).mean();
        EXPECT_NEAR(empirical / moment_formula(alpha, mu, p.rhat, k), 1.0, 0.02) << alpha << ' ' << mu << ' ' << k;
      }
    }
}

TEST(Generator, SameSeedSameGains) {
  const lnnfama::SystemConfig sys;
  const lc::AntennaConfig ant{20, 2.0};
  const auto params = lc::FadingParams::unit_power(2.0, 2);
  const auto factor = lc::factorize_correlation(lc::build_correlation_matrix(ant));
  const auto a = lc::generate_realization(sys, ant, params, factor, 42);
  const auto b = lc::generate_realization(sys, ant, params, factor, 42);
  const auto c = lc::generate_realization(sys, ant, params, factor, 43);
  EXPECT_EQ(a.gains, b.gains);
  EXPECT_NE(a.gains, c.gains);
  lc::ChannelGenerator gen(sys, ant, params, factor);
  EXPECT_EQ(gen.generate(42).gains, a.gains);
  EXPECT_EQ(a.gains.rows(), 2);
  EXPECT_EQ(a.gains.cols(), 20);
}

TEST(Generator, RejectsFactorOfWrongSize) {
  const lnnfama::SystemConfig sys;
  const auto factor = lc::factorize_correlation(lc::build_correlation_matrix({10, 1.0}));
  EXPECT_THROW(lc::ChannelGenerator(sys, {12, 1.0}, lc::FadingParams::unit_power(2.0, 1), factor),
               lnnfama::ShapeError);
}

TEST(Generator, LayerCorrelationFollowsBessel) {
  const lnnfama::SystemConfig sys;
  const lc::AntennaConfig ant{100, 5.0};
  const auto factor = lc::factorize_correlation(lc::build_correlation_matrix(ant));
  lc::ChannelGenerator gen(sys, ant, lc::FadingParams::unit_power(2.0, 1), factor);
  lnnfama::Rng rng(11);
  Eigen::MatrixXd layers;
  double s01 = 0.0, s00 = 0.0, s11 = 0.0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    gen.correlated_layers(rng, layers);
    for (Eigen::Index l = 0; l < layers.rows(); ++l) {
      s01 += layers(l, 0) * layers(l, 1);
      s00 += layers(l, 0) * layers(l, 0);
      s11 += layers(l, 1) * layers(l, 1);
    }
  }
  const double target = j0_quadrature(2.0 * std::numbers::pi * 5.0 / 99.0);
  EXPECT_NEAR(s01 / std::sqrt(s00 * s11), target, 0.02);
}

TEST(Generator, UsersAreIndependent) {
  const lnnfama::SystemConfig sys;
  const lc::AntennaConfig ant{100, 5.0};
  const auto factor = lc::factorize_correlation(lc::build_correlation_matrix(ant));
  lc::ChannelGenerator gen(sys, ant, lc::FadingParams::unit_power(2.0, 2), factor);
  lc::ChannelRealization r;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::uint64_t s = 0; s < 50000; ++s) {
    gen.generate(s, r);
    const double x = r.gains(0, 3).real(), y = r.gains(1, 3).real();
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  EXPECT_LT(std::abs(sxy / std::sqrt(sxx * syy)), 0.02);
}
