#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fairpg/cgl.hpp"
#include "fairpg/synth.hpp"
#include "test_util.hpp"

using namespace fairpg;
using fairpg::testing::iota_rows;
using fairpg::testing::labeled_rows;

namespace {

// Exhaustive objective maximum over 0, 1 and midpoints of the sorted confidences.
long midpoint_grid_max(const std::vector<double>& conf, const std::vector<char>& correct) {
  std::vector<double> s = conf;
  std::sort(s.begin(), s.end());
  std::vector<double> grid{0.0, 1.0};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) grid.push_back(0.5 * (s[i] + s[i + 1]));
  for (double v : s) grid.push_back(v);
  long best = -1;
  for (double t : grid) {
    long obj = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) obj += (conf[i] > t) == static_cast<bool>(correct[i]);
    best = std::max(best, obj);
  }
  return best;
}

struct Scenario {
  Dataset ds;
  GroupModelStage stage;
};

Scenario easy_scenario(double ratio, std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.d = 4;
  spec.class_sep = 2.0;
  spec.group_shift = 0.0;
  spec.group_signal = 4.0;
  spec.n_train = 400;
  spec.n_test = 4;
  spec.seed = seed;
  const Dataset full = synth::generate(spec).train;
  Dataset masked = synth::mask_groups(full, ratio, seed);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.hidden = 16;
  cfg.batch_size = 32;
  cfg.lr = 1e-2;
  GroupModelStage stage = prepare_group_model(masked, cfg, seed);
  return {std::move(masked), std::move(stage)};
}

}  // namespace

TEST(Split, SmallExamples) {
  std::vector<std::pair<int, std::optional<int>>> ten(10, {0, 0});
  const Dataset a = labeled_rows(ten, 2, 2);
  const auto s = split_labeled(a, iota_rows(10), 0.8, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 2u);

  const Dataset b = labeled_rows({{0, 0}, {1, 1}}, 2, 2);
  const auto t = split_labeled(b, iota_rows(2), 0.8, 1);
  EXPECT_EQ(t.train.size(), 1u);
  EXPECT_EQ(t.val.size(), 1u);
  EXPECT_THROW(split_labeled(b, IndexSet{0}, 0.8, 1), std::invalid_argument);
}

TEST(Split, StratifiedCells) {
  std::vector<std::pair<int, std::optional<int>>> rows;
  for (int y = 0; y < 2; ++y)
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < 25; ++k) rows.push_back({y, a});
  const Dataset ds = labeled_rows(rows, 2, 2);
  const auto s = split_labeled(ds, iota_rows(100), 0.8, 3);
  std::map<std::pair<int, int>, int> train, val;
  for (auto r : s.train) ++train[{ds.target(r), *ds.group(r)}];
  for (auto r : s.val) ++val[{ds.target(r), *ds.group(r)}];
  for (const auto& [cell, n] : train) EXPECT_EQ(n, 20);
  for (const auto& [cell, n] : val) EXPECT_EQ(n, 5);
  EXPECT_EQ(val.size(), 4u);
}

TEST(Split, DisjointCoverAndDeterministic) {
  SeededRng r(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::pair<int, std::optional<int>>> rows;
    const std::size_t n = 2 + r.uniform_index(60);
    for (std::size_t i = 0; i < n; ++i)
      rows.push_back({static_cast<int>(r.uniform_index(3)), static_cast<int>(r.uniform_index(2))});
    const Dataset ds = labeled_rows(rows, 3, 2);
    const double f = 0.1 + 0.8 * r.uniform();
    const auto s = split_labeled(ds, iota_rows(n), f, t);
    ASSERT_FALSE(s.train.empty());
    ASSERT_FALSE(s.val.empty());
    const long want = std::clamp<long>(std::lround(f * static_cast<double>(n)), 1, static_cast<long>(n) - 1);
    ASSERT_EQ(static_cast<long>(s.train.size()), want);
    std::set<RowIndex> all(s.train.begin(), s.train.end());
    for (auto v : s.val) ASSERT_TRUE(all.insert(v).second);
    ASSERT_EQ(all.size(), n);
    const auto again = split_labeled(ds, iota_rows(n), f, t);
    ASSERT_EQ(again.train, s.train);
    ASSERT_EQ(again.val, s.val);
  }
}

TEST(Threshold, WorkedExample) {
  const std::vector<double> conf{0.95, 0.90, 0.60, 0.55};
  const std::vector<char> correct{1, 1, 0, 0};
  const auto s = search_threshold(conf, correct);
  EXPECT_DOUBLE_EQ(s.tau, 0.60);
  EXPECT_EQ(s.objective, 4);
  EXPECT_EQ(threshold_objective(conf, correct, 0.75), 4);
  EXPECT_EQ(threshold_objective(conf, correct, 0.0), 2);
}

TEST(Threshold, AllCorrectGivesZero) {
  const std::vector<double> conf{0.7, 0.8, 0.99};
  const std::vector<char> correct{1, 1, 1};
  const auto s = search_threshold(conf, correct);
  EXPECT_EQ(s.tau, 0.0);
  EXPECT_EQ(s.objective, 3);
  EXPECT_DOUBLE_EQ(s.detection_accuracy(), 1.0);
}

TEST(Threshold, MatchesMidpointGridAndBounds) {
  SeededRng r(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + r.uniform_index(40);
    std::vector<double> conf(n);
    std::vector<char> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = t % 2 ? 0.5 + 0.05 * static_cast<double>(r.uniform_index(10)) : 0.5 + 0.5 * r.uniform();
      correct[i] = r.uniform() < conf[i];
    }
    const auto s = search_threshold(conf, correct);
    ASSERT_EQ(s.objective, midpoint_grid_max(conf, correct));
    ASSERT_EQ(s.objective, threshold_objective(conf, correct, s.tau));
    const long hits = std::count(correct.begin(), correct.end(), 1);
    ASSERT_GE(s.objective, std::max<long>(hits, static_cast<long>(n) - hits));
  }
}

TEST(Assign, ExtremesMatchBaselines) {
  for (std::uint64_t seed : {1u, 2u}) {
    const Scenario sc = easy_scenario(0.3, seed);
    const auto pl = assign_from_stage(sc.stage, policy::PseudoLabel{}, sc.ds).assignment;
    const auto rl = assign_from_stage(sc.stage, policy::RandomLabel{}, sc.ds).assignment;
    const auto c0 = assign_from_stage(sc.stage, policy::Cgl{0.0}, sc.ds).assignment;
    const auto c1 = assign_from_stage(sc.stage, policy::Cgl{1.0}, sc.ds).assignment;
    EXPECT_EQ(c0.pseudo_groups, pl.pseudo_groups);
    EXPECT_EQ(c1.pseudo_groups, rl.pseudo_groups);
    EXPECT_EQ(c0.rows, pl.rows);
    for (auto p : c1.provenance) EXPECT_EQ(p, Provenance::kRandomized);
    for (auto p : c0.provenance) EXPECT_EQ(p, Provenance::kConfident);
  }
}

TEST(Assign, ProvenanceFollowsThreshold) {
  const Scenario sc = easy_scenario(0.2, 3);
  const double tau = 0.8;
  const auto res = assign_from_stage(sc.stage, policy::Cgl{tau}, sc.ds).assignment;
  const auto xu = gather_rows(sc.ds.features(), res.rows);
  const auto post = predict_posteriors(sc.stage.g, xu);
  ASSERT_EQ(res.rows, sc.stage.partition.unlabeled);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(res.confidence[i], post[i].confidence());
    const bool confident = post[i].confidence() > tau;
    EXPECT_EQ(res.provenance[i] == Provenance::kConfident, confident);
    if (confident) EXPECT_EQ(res.pseudo_groups[i], static_cast<int>(post[i].argmax()));
  }
}

TEST(Assign, SearchedThresholdIsReported) {
  const Scenario sc = easy_scenario(0.3, 4);
  const auto out = assign_from_stage(sc.stage, policy::Cgl{}, sc.ds);
  EXPECT_EQ(out.assignment.tau, sc.stage.search.tau);
  EXPECT_EQ(out.diagnostics.searched_tau, sc.stage.search.tau);
  EXPECT_EQ(out.diagnostics.n_val, sc.stage.split.val.size());
  long randomized = 0;
  for (auto p : out.assignment.provenance) randomized += p == Provenance::kRandomized;
  EXPECT_EQ(static_cast<long>(out.diagnostics.n_randomized), randomized);
}

TEST(Assign, GroupModelLearnsEasyGroups) {
  const Scenario sc = easy_scenario(0.5, 5);
  const auto out = assign_from_stage(sc.stage, policy::PseudoLabel{}, sc.ds);
  EXPECT_GT(out.diagnostics.val_group_accuracy, 0.8);
}

TEST(Assign, GroupLabeledOnlyIsEmpty) {
  const Scenario sc = easy_scenario(0.3, 6);
  const auto res = assign_from_stage(sc.stage, policy::GroupLabeledOnly{}, sc.ds).assignment;
  EXPECT_TRUE(res.empty());
  const auto merged = merged_groups(sc.ds, res);
  for (RowIndex r = 0; r < sc.ds.size(); ++r) EXPECT_EQ(merged[r], sc.ds.group(r) ? *sc.ds.group(r) : -1);
}

TEST(Assign, RandomLabelFollowsConditional) {
  // 3000 unlabeled rows of class 0; P(A | Y = 0) = (0.25, 0.75).
  std::vector<std::pair<int, std::optional<int>>> rows{{0, 0}, {0, 1}, {0, 1}, {0, 1}, {1, 0}};
  for (int i = 0; i < 3000; ++i) rows.push_back({0, std::nullopt});
  const Dataset ds = labeled_rows(rows, 2, 2);
  const auto part = partition_group_labeled(ds);
  const auto table = empirical_conditional(ds, part.labeled);
  const auto marg = empirical_marginal(ds, part.labeled);
  AssignContext ctx{&table, marg, 11, {}};
  const auto res = assign(nullptr, policy::RandomLabel{}, ds, ctx);
  const double ones = static_cast<double>(std::count(res.pseudo_groups.begin(), res.pseudo_groups.end(), 1));
  EXPECT_NEAR(ones / 3000.0, 0.75, 0.03);
  for (double c : res.confidence) EXPECT_TRUE(std::isnan(c));
  EXPECT_EQ(assign(nullptr, policy::RandomLabel{}, ds, ctx), res);
  EXPECT_THROW(assign(nullptr, policy::PseudoLabel{}, ds, ctx), std::invalid_argument);
}

TEST(Assign, NoUnlabeledRows) {
  const Dataset ds = labeled_rows({{0, 0}, {1, 1}, {0, 1}, {1, 0}}, 2, 2);
  const auto part = partition_group_labeled(ds);
  const auto table = empirical_conditional(ds, part.labeled);
  const auto marg = empirical_marginal(ds, part.labeled);
  AssignContext ctx{&table, marg, 1, {}};
  EXPECT_TRUE(assign(nullptr, policy::RandomLabel{}, ds, ctx).empty());
}

TEST(Assign, OraclePolicyKeepsCorrectPredictions) {
  const Scenario sc = easy_scenario(0.3, 7);
  synth::SynthSpec spec;
  spec.d = 4;
  spec.group_signal = 4.0;
  spec.n_train = 400;
  spec.n_test = 4;
  spec.seed = 7;
  const Dataset full = synth::generate(spec).train;
  const auto res = assign_from_stage(sc.stage, policy::OracleRandomWrong{}, sc.ds, full.groups()).assignment;
  const auto post = predict_posteriors(sc.stage.g, gather_rows(sc.ds.features(), res.rows));
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const int truth = *full.group(res.rows[i]);
    if (static_cast<int>(post[i].argmax()) == truth) {
      EXPECT_EQ(res.pseudo_groups[i], truth);
      EXPECT_EQ(res.provenance[i], Provenance::kConfident);
    } else {
      EXPECT_EQ(res.provenance[i], Provenance::kRandomized);
    }
  }
  EXPECT_THROW(assign_from_stage(sc.stage, policy::OracleRandomWrong{}, sc.ds), std::invalid_argument);
}

TEST(Pipeline, Deterministic) {
  const Scenario sc = easy_scenario(0.3, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.hidden = 8;
  const auto a = run_cgl_pipeline(sc.ds, policy::Cgl{}, cfg, 42);
  const auto b = run_cgl_pipeline(sc.ds, policy::Cgl{}, cfg, 42);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(to_json(a.diagnostics), to_json(b.diagnostics));
  std::ostringstream x, y;
  write_assignment_csv(x, a.assignment);
  write_assignment_csv(y, b.assignment);
  EXPECT_EQ(x.str(), y.str());
}

TEST(Histogram, Buckets) {
  const std::vector<double> conf{0.5, 0.52, 0.99, 1.0, 0.74};
  const auto h = confidence_histogram(conf, 0.25);
  ASSERT_EQ(h.counts.size(), 4u);
  EXPECT_EQ(h.counts, (std::vector<long>{0, 0, 3, 2}));
}

TEST(PolicyJson, RoundTrip) {
  for (const AssignmentPolicy& p : std::vector<AssignmentPolicy>{policy::GroupLabeledOnly{}, policy::RandomLabel{},
                                                                 policy::PseudoLabel{}, policy::Cgl{}, policy::Cgl{0.7},
                                                                 policy::OracleRandomWrong{}}) {
    const auto j = to_json(p);
    EXPECT_EQ(to_json(policy_from_json(j)), j);
    EXPECT_EQ(policy_name(policy_from_json(j)), policy_name(p));
  }
  EXPECT_EQ(policy_name(policy_from_json("cgl")), "cgl");
  EXPECT_THROW(policy_from_json("bogus"), std::invalid_argument);
}
