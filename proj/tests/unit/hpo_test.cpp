// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "lnnfama/hpo.hpp"

namespace hpo = lnnfama::hpo;
namespace ds = lnnfama::dataset;
namespace sel = lnnfama::selection;

namespace {

hpo::SearchSpace quick_space() {
  hpo::SearchSpace s;
  s.ltc_units_max = 12;
  s.dense_width_max = 24;
  s.dense_layers_max = 2;
  s.epochs = 3;
  s.batch_size = 32;
  s.patience = 2;
  s.m_labels = {1, 3};
  return s;
}

const ds::DatasetSplit& base_dataset() {
  static const ds::DatasetSplit d =
      ds::build_dataset({}, {24, 3.0}, lnnfama::channel::FadingParams::unit_power(2.0, 2), 4, 3, 300, 77);
  return d;
}

struct Relabeled {
  std::map<int, ds::DatasetSplit> cache;
  const ds::DatasetSplit& operator()(int m) {
    auto it = cache.find(m);
    if (it == cache.end()) {
      auto copy = base_dataset();
      ds::relabel(copy, m);
      it = cache.emplace(m, std::move(copy)).first;
    }
    return it->second;
  }
};

}  // namespace

TEST(SampleTrial, DeterministicAndInRange) {
  const hpo::SearchSpace space;
  EXPECT_EQ(hpo::sample_trial(space, 5), hpo::sample_trial(space, 5));
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto c = hpo::sample_trial(space, seed);
    if (c.pca) {
      EXPECT_EQ(c.ltc_units, 0);
    } else {
      EXPECT_GE(c.ltc_units, space.ltc_units_min);
      EXPECT_LE(c.ltc_units, space.ltc_units_max);
    }
    EXPECT_GE(static_cast<int>(c.dense_layers.size()), space.dense_layers_min);
    EXPECT_LE(static_cast<int>(c.dense_layers.size()), space.dense_layers_max);
    for (int w : c.dense_layers) {
      EXPECT_GE(w, space.dense_width_min);
      EXPECT_LE(w, space.dense_width_max);
    }
    EXPECT_GE(c.learning_rate, space.learning_rate_min);
    EXPECT_LE(c.learning_rate, space.learning_rate_max);
  }
}

TEST(SampleTrial, EveryDiscreteOptionAppears) {
  const hpo::SearchSpace space;
  std::set<int> labels, depths;
  std::set<lnnfama::nn::LossKind> losses;
  std::set<bool> pca;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto c = hpo::sample_trial(space, seed);
    labels.insert(c.m_labels);
    depths.insert(static_cast<int>(c.dense_layers.size()));
    losses.insert(c.loss);
    pca.insert(c.pca);
  }
  EXPECT_EQ(labels, std::set<int>(space.m_labels.begin(), space.m_labels.end()));
  EXPECT_EQ(depths, (std::set<int>{1, 2, 3}));
  EXPECT_EQ(losses.size(), 2u);
  EXPECT_EQ(pca.size(), 2u);
}

TEST(SampleTrial, RejectsEmptySpace) {
  hpo::SearchSpace s;
  s.m_labels.clear();
  EXPECT_THROW(hpo::sample_trial(s, 1), lnnfama::ConfigError);
}

TEST(Study, SingleTrialIsBest) {
  Relabeled factory;
  const auto r = hpo::run_study(quick_space(), std::ref(factory), 1, 3, {});
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best, 0);
  EXPECT_TRUE(r.best_trial().model.has_value());
}

TEST(Study, BestIsMinimalAndReproducible) {
  const auto dir = std::filesystem::path(LNNFAMA_TEST_TMP) / "study";
  std::filesystem::remove_all(dir);
  hpo::StudyOptions opts;
  opts.objective = hpo::Objective::loss;
  opts.log_dir = dir.string();
  Relabeled f1, f2;
  const auto a = hpo::run_study(quick_space(), std::ref(f1), 4, 11, opts);
  opts.log_dir.clear();
  opts.workers = 3;
  const auto b = hpo::run_study(quick_space(), std::ref(f2), 4, 11, opts);
  for (const auto& t : a.trials) EXPECT_LE(a.best_trial().objective, t.objective);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_trial().config, b.best_trial().config);
  for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].objective, b.trials[i].objective);
  EXPECT_TRUE(std::filesystem::exists(dir / "trial_0000.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "trial_0003.weights"));
}

TEST(Study, TrialsAreIsolated) {
  const auto space = quick_space();
  Relabeled factory;
  const auto c1 = hpo::sample_trial(space, 100);
  const auto c2 = hpo::sample_trial(space, 200);
  const auto first = hpo::run_trial(c1, space, factory(c1.m_labels), 100, {});
  hpo::run_trial(c2, space, factory(c2.m_labels), 200, {});
  const auto again = hpo::run_trial(c1, space, factory(c1.m_labels), 100, {});
  EXPECT_EQ(first.objective, again.objective);
  EXPECT_EQ(first.model->weights().params, again.model->weights().params);
}

TEST(Predictor, MatchesSelectionPolicyPerSample) {
  Relabeled factory;
  const auto r = hpo::run_study(quick_space(), std::ref(factory), 1, 5, {});
  const auto& model = *r.best_trial().model;
  const auto& d = base_dataset();
  const auto sets = sel::PortSets::from_observed(24, d.meta.observed_ports);
  const double threshold = 10.0;
  for (int j : {1, 3}) {
    std::int64_t outages = 0;
    for (const auto& s : d.test) {
      const int port = sel::select_port({sel::PolicyKind::model_assisted, j, 1}, {s.sinr, 0}, sets, &model);
      outages += s.sinr[port] < threshold;
    }
    const auto e = hpo::sample_outage(model, d.test, d.meta.observed_ports, threshold, j);
    EXPECT_EQ(e.outages, outages);
  }
}

TEST(Predictor, SaveLoadRoundTrip) {
  Relabeled factory;
  const auto r = hpo::run_study(quick_space(), std::ref(factory), 1, 6, {});
  const auto& model = *r.best_trial().model;
  const auto path = (std::filesystem::path(LNNFAMA_TEST_TMP) / "predictor.weights").string();
  std::filesystem::create_directories(LNNFAMA_TEST_TMP);
  model.save(path);
  const auto back = hpo::ModelPredictor::load(path);
  EXPECT_EQ(back.m_observed(), 4);
  EXPECT_EQ(back.n_ports(), 24);
  EXPECT_TRUE(back.normalizer() == model.normalizer());
  const auto& s = base_dataset().test.front();
  std::vector<double> obs;
  for (int p : base_dataset().meta.observed_ports) obs.push_back(s.sinr[p]);
  const sel::ObservedSequence seq{base_dataset().meta.observed_ports, obs, 24};
  EXPECT_EQ(back.probabilities(seq), model.probabilities(seq));
}

TEST(Sweep, ReportsRowArgmin) {
  auto factory = [](int m) {
    return ds::build_dataset({}, {24, 3.0}, lnnfama::channel::FadingParams::unit_power(2.0, 2), m, 3, 200, 31 + m);
  };
  hpo::StudyOptions opts;
  opts.threshold_linear = 30.0;
  const auto table = hpo::class_count_sweep({4, 6}, {1, 2, 3}, quick_space(), factory, 1, 9, opts);
  ASSERT_EQ(table.cells.size(), 2u);
  ASSERT_EQ(table.best_m.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    double best = 2.0;
    int arg = 0;
    for (std::size_t c = 0; c < 3; ++c)
      if (table.cells[r][c].outage < best) {
        best = table.cells[r][c].outage;
        arg = table.m_values[c];
      }
    EXPECT_EQ(table.best_m[r], arg);
  }
  const auto path = (std::filesystem::path(LNNFAMA_TEST_TMP) / "sweep.csv").string();
  hpo::write_sweep_csv(table, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "m_observed,M_1,M_2,M_3,best_M");
}

TEST(Sweep, ArgminTiesGoToSmallerM) {
  hpo::SweepTable t;
  t.observed_counts = {5};
  t.m_values = {1, 2, 3};
  t.cells = {{{0.2, false}, {0.1, false}, {0.1, false}}};
  EXPECT_EQ(hpo::row_argmin(t), (std::vector<int>{2}));
  t.cells = {{{0.0, true}, {0.3, false}, {0.0, true}}};
  EXPECT_EQ(hpo::row_argmin(t), (std::vector<int>{2}));
}
