// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lnnfama/channel.hpp"
#include "lnnfama/fama.hpp"
#include "lnnfama/outage.hpp"
#include "lnnfama/selection.hpp"

using lnnfama::SystemConfig;
using lnnfama::channel::ChannelRealization;
namespace fama = lnnfama::fama;
namespace sel = lnnfama::selection;

namespace {

ChannelRealization realization(std::initializer_list<std::initializer_list<std::complex<double>>> rows) {
  ChannelRealization r;
  r.gains.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (auto g : row) r.gains(i, j++) = g;
    ++i;
  }
  return r;
}

ChannelRealization random_realization(std::mt19937_64& rng, int users, int ports) {
  std::normal_distribution<double> n;
  ChannelRealization r;
  r.gains.resize(users, ports);
  for (Eigen::Index i = 0; i < r.gains.size(); ++i) r.gains.data()[i] = {n(rng), n(rng)};
  return r;
}

SystemConfig system_with(int users, double signal, double noise) {
  SystemConfig s;
  s.n_users = users;
  s.signal_power = signal;
  s.noise_power = noise;
  return s;
}

}  // namespace

TEST(Sinr, NoInterference) {
  const auto s = fama::sinr_per_port(realization({{1.0}}), system_with(1, 1.0, 1.0));
  EXPECT_DOUBLE_EQ(s.values.at(0), 1.0);
}

TEST(Sinr, SingleInterferer) {
  const auto s = fama::sinr_per_port(realization({{{1.0, 0.0}}, {{0.5, 0.0}}}), system_with(2, 1.0, 0.1));
  EXPECT_NEAR(s.values.at(0), 1.0 / (0.25 + 0.1), 1e-15);
  EXPECT_NEAR(s.values.at(0), 2.857142857142857, 1e-12);
}

TEST(Sinr, DecreasesWithInterfererGain) {
  std::mt19937_64 rng(3);
  auto r = random_realization(rng, 3, 6);
  const auto sys = system_with(3, 1.0, 1e-2);
  const auto before = fama::sinr_per_port(r, sys);
  r.gains(2, 4) *= 1.5;
  const auto after = fama::sinr_per_port(r, sys);
  EXPECT_LT(after.values[4], before.values[4]);
  for (int n : {0, 1, 2, 3, 5}) EXPECT_EQ(after.values[n], before.values[n]);
}

TEST(Sinr, RejectsUserCountMismatch) {
  EXPECT_THROW(fama::sinr_per_port(realization({{1.0, 1.0}}), system_with(2, 1.0, 1.0)), lnnfama::ShapeError);
}

TEST(Mrc, SinglePortMatchesPerPortInBothModes) {
  std::mt19937_64 rng(5);
  for (auto mode : {lnnfama::InterferenceMode::as_written, lnnfama::InterferenceMode::incoherent}) {
    auto sys = system_with(2, 1.0, 1e-4);
    sys.interference_mode = mode;
    for (int t = 0; t < 200; ++t) {
      const auto r = random_realization(rng, 2, 8);
      const auto per_port = fama::sinr_per_port(r, sys);
      for (int n = 0; n < 8; ++n) {
        const int sel[] = {n};
        const double mrc = fama::sinr_mrc(r, sys, sel);
        EXPECT_LE(std::abs(mrc - per_port.values[n]) / per_port.values[n], 1e-12);
      }
    }
  }
}

TEST(Mrc, TwoUnitGainsNoInterference) {
  const int sel[] = {0, 1};
  EXPECT_NEAR(fama::sinr_mrc(realization({{1.0, 1.0}}), system_with(1, 1.0, 1.0), sel), 2.0, 1e-15);
}

TEST(Mrc, SnrSumWithoutInterference) {
  std::mt19937_64 rng(9);
  const auto r = random_realization(rng, 1, 7);
  const auto sys = system_with(1, 2.0, 0.5);
  const int sel[] = {1, 4, 6};
  const double expected = (2.0 / 0.5) * (std::norm(r.gains(0, 1)) + std::norm(r.gains(0, 4)) + std::norm(r.gains(0, 6)));
  EXPECT_NEAR(fama::sinr_mrc(r, sys, sel), expected, 1e-12 * expected);
}

TEST(Mrc, InterferenceModesForThreeUsers) {
  // g = [1, 1]; both interferers hit port 0 only.
  const auto r = realization({{1.0, 1.0}, {1.0, 0.0}, {1.0, 0.0}});
  auto sys = system_with(3, 1.0, 1.0);
  const int sel[] = {0, 1};
  // as_written: |1 * (1 + 1)|^2 + |1 * 0|^2 = 4
  EXPECT_NEAR(fama::sinr_mrc(r, sys, sel), 4.0 / (4.0 + 2.0), 1e-15);
  // incoherent: |1|^2 + |1|^2 = 2
  sys.interference_mode = lnnfama::InterferenceMode::incoherent;
  EXPECT_NEAR(fama::sinr_mrc(r, sys, sel), 4.0 / (2.0 + 2.0), 1e-15);
}

TEST(Mrc, RejectsBadSelections) {
  const auto r = realization({{1.0, 1.0, 1.0}});
  const auto sys = system_with(1, 1.0, 1.0);
  EXPECT_THROW(fama::sinr_mrc(r, sys, std::vector<int>{}), std::invalid_argument);
  EXPECT_THROW(fama::sinr_mrc(r, sys, std::vector<int>{3}), std::invalid_argument);
  EXPECT_THROW(fama::sinr_mrc(r, sys, std::vector<int>{1, 1}), std::invalid_argument);
}

TEST(Wilson, MatchesClosedForm) {
  const double z = 1.959963984540054;
  const double n = 100.0, p = 0.05;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  const auto e = fama::wilson_estimate(5, 100);
  EXPECT_DOUBLE_EQ(e.probability, 0.05);
  EXPECT_NEAR(e.ci_low, centre - half, 1e-14);
  EXPECT_NEAR(e.ci_high, centre + half, 1e-14);
  const auto zero = fama::wilson_estimate(0, 1000);
  EXPECT_EQ(zero.ci_low, 0.0);
  EXPECT_GT(zero.ci_high, 0.0);
}

class OutageTest : public ::testing::Test {
 protected:
  SystemConfig sys;
  lnnfama::channel::AntennaConfig ant{100, 5.0};
  lnnfama::channel::FadingParams params = lnnfama::channel::FadingParams::unit_power(2.0, 2);
};

TEST_F(OutageTest, InfiniteThresholds) {
  sys.gamma_th_db = -std::numeric_limits<double>::infinity();
  EXPECT_EQ(fama::estimate_outage({}, sys, ant, params, 500, 1).probability, 0.0);
  sys.gamma_th_db = std::numeric_limits<double>::infinity();
  EXPECT_EQ(fama::estimate_outage({}, sys, ant, params, 500, 1).probability, 1.0);
}

TEST_F(OutageTest, IdealNeverWorseThanReferenceOnPairedStream) {
  sys.gamma_th_db = 10.0;
  const auto observed = sel::observed_indices(100, 5);
  std::vector<fama::PolicyUnderTest> policies{{{sel::PolicyKind::ideal, 1, 1}, nullptr},
                                              {{sel::PolicyKind::reference, 1, 1}, nullptr}};
  const auto paired = fama::evaluate_policies(policies, sys, ant, params, observed, 20000, 17);
  EXPECT_LE(paired.estimates[0].outages, paired.estimates[1].outages);
  EXPECT_EQ(paired.discordant[0][1], 0);
  EXPECT_GT(paired.estimates[1].outages, 0);
}

TEST_F(OutageTest, ResultIndependentOfWorkerCount) {
  sys.gamma_th_db = 15.0;
  const auto observed = sel::observed_indices(100, 10);
  const sel::Policy ref{sel::PolicyKind::reference, 1, 2};
  const auto a = fama::estimate_outage(ref, sys, ant, params, 3001, 99, observed, nullptr, 1);
  const auto b = fama::estimate_outage(ref, sys, ant, params, 3001, 99, observed, nullptr, 4);
  EXPECT_EQ(a.outages, b.outages);
  EXPECT_EQ(a.trials, 3001);
}

TEST_F(OutageTest, MrcNotWorseWithMorePortsOnAverage) {
  sys.gamma_th_db = 15.0;
  std::vector<fama::PolicyUnderTest> policies;
  for (int k : {1, 2, 4, 6}) policies.push_back({{sel::PolicyKind::ideal, 1, k}, nullptr});
  const auto paired = fama::evaluate_policies(policies, sys, ant, params, sel::observed_indices(100, 5), 5000, 3);
  for (std::size_t i = 1; i < policies.size(); ++i)
    EXPECT_LE(paired.estimates[i].probability, paired.estimates[i - 1].probability);
}

TEST_F(OutageTest, RejectsZeroTrials) {
  EXPECT_THROW(fama::estimate_outage({}, sys, ant, params, 0, 1), std::invalid_argument);
}
