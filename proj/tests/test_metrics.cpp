#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fairpg/metrics.hpp"
#include "test_util.hpp"

using namespace fairpg;
using fairpg::testing::iota_rows;
using fairpg::testing::labeled_rows;

namespace {

GroupClassAccuracyTable full_table(const std::vector<std::vector<double>>& acc) {
  GroupClassAccuracyTable t;
  t.acc = Matrix(acc.size(), acc[0].size());
  t.support.assign(acc.size(), std::vector<long>(acc[0].size(), 10));
  for (std::size_t a = 0; a < acc.size(); ++a)
    for (std::size_t y = 0; y < acc[a].size(); ++y) t.acc(a, y) = acc[a][y];
  return t;
}

// Exhaustive (a, a', y) scan.
std::pair<double, double> brute_force(const GroupClassAccuracyTable& t) {
  double dm = 0, sum = 0;
  for (std::size_t y = 0; y < t.num_classes(); ++y) {
    double gap = 0;
    for (std::size_t a = 0; a < t.num_groups(); ++a)
      for (std::size_t b = 0; b < t.num_groups(); ++b)
        if (t.present(a, y) && t.present(b, y)) gap = std::max(gap, std::abs(t.acc(a, y) - t.acc(b, y)));
    dm = std::max(dm, gap);
    sum += gap;
  }
  return {dm, sum / static_cast<double>(t.num_classes())};
}

GroupClassAccuracyTable random_table(SeededRng& r, std::size_t N, std::size_t M, bool sparse) {
  GroupClassAccuracyTable t;
  t.acc = Matrix(N, M);
  t.support.assign(N, std::vector<long>(M, 0));
  for (std::size_t a = 0; a < N; ++a)
    for (std::size_t y = 0; y < M; ++y) {
      t.support[a][y] = sparse && r.uniform() < 0.3 ? 0 : 1 + static_cast<long>(r.uniform_index(50));
      if (t.support[a][y] > 0) t.acc(a, y) = r.uniform();
    }
  return t;
}

}  // namespace

TEST(AccuracyTable, CountsPerCell) {
  const auto ds = labeled_rows({{0, 0}, {0, 0}, {0, 1}, {1, 1}}, 2, 2);
  const std::vector<int> preds{0, 1, 0, 1};
  const auto t = accuracy_table(preds, ds, iota_rows(4));
  EXPECT_DOUBLE_EQ(t.acc(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(t.acc(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.acc(1, 1), 1.0);
  EXPECT_FALSE(t.present(0, 1));
  EXPECT_EQ(t.support[0][0], 2);
}

TEST(AccuracyTable, ErrorsOnEmptyRowsOrMissingGroups) {
  const auto ds = labeled_rows({{0, 0}, {1, std::nullopt}}, 2, 2);
  const std::vector<int> preds{0, 1};
  EXPECT_THROW(accuracy_table(preds, ds, IndexSet{}), std::invalid_argument);
  EXPECT_THROW(accuracy_table(preds, ds, IndexSet{1}), std::invalid_argument);
}

TEST(AccuracyTable, MatchesIndependentRecount) {
  SeededRng r(400);
  std::vector<std::pair<int, std::optional<int>>> rows;
  for (int i = 0; i < 400; ++i) rows.emplace_back(i % 2, (i / 2) % 2);
  const auto ds = labeled_rows(rows, 2, 2);
  std::vector<int> preds(400);
  for (int& p : preds) p = static_cast<int>(r.uniform_index(2));
  const auto t = accuracy_table(preds, ds, iota_rows(400));
  for (int a = 0; a < 2; ++a)
    for (int y = 0; y < 2; ++y) {
      long hit = 0, tot = 0;
      for (int i = 0; i < 400; ++i)
        if (*ds.group(i) == a && ds.target(i) == y) {
          ++tot;
          hit += preds[i] == y;
        }
      EXPECT_EQ(tot, 100);
      EXPECT_DOUBLE_EQ(t.acc(a, y), static_cast<double>(hit) / tot);
    }
}

TEST(Delta, WorkedExample) {
  const auto t = full_table({{0.9, 0.8}, {0.7, 0.8}});
  EXPECT_NEAR(delta_m(t), 0.2, 1e-15);
  EXPECT_NEAR(delta_a(t), 0.1, 1e-15);
}

TEST(Delta, IdenticalRowsGiveZero) {
  const auto t = full_table({{0.3, 0.6, 0.9}, {0.3, 0.6, 0.9}, {0.3, 0.6, 0.9}});
  EXPECT_EQ(delta_m(t), 0.0);
  EXPECT_EQ(delta_a(t), 0.0);
}

TEST(Delta, ErrorsWithoutComparableClass) {
  GroupClassAccuracyTable t = full_table({{0.5, 0.5}, {0.5, 0.5}});
  t.support = {{1, 0}, {0, 1}};
  EXPECT_THROW(delta_m(t), std::invalid_argument);
  EXPECT_THROW(delta_a(t), std::invalid_argument);
}

TEST(Delta, AbsentCellsExcluded) {
  GroupClassAccuracyTable t = full_table({{0.9, 0.1}, {0.5, 0.9}, {0.0, 0.8}});
  t.support[2][0] = 0;
  EXPECT_NEAR(delta_m(t), 0.8, 1e-15);
  EXPECT_NEAR(delta_a(t), (0.4 + 0.8) / 2, 1e-15);
}

TEST(Delta, MatchesBruteForceOnRandomTables) {
  SeededRng r(12);
  for (int i = 0; i < 500; ++i) {
    const std::size_t N = 2 + r.uniform_index(5), M = 1 + r.uniform_index(6);
    auto t = random_table(r, N, M, i % 2 == 1);
    bool comparable = false;
    for (std::size_t y = 0; y < M; ++y) {
      int present = 0;
      for (std::size_t a = 0; a < N; ++a) present += t.present(a, y);
      comparable = comparable || present >= 2;
    }
    if (!comparable) continue;
    const auto [dm, da] = brute_force(t);
    ASSERT_NEAR(delta_m(t), dm, 1e-12);
    ASSERT_NEAR(delta_a(t), da, 1e-12);
    ASSERT_GE(delta_a(t), 0.0);
    ASSERT_LE(delta_a(t), delta_m(t) + 1e-15);
    ASSERT_LE(delta_m(t), 1.0);
  }
}

TEST(Delta, InvariantToGroupPermutation) {
  SeededRng r(13);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_table(r, 4, 3, false);
    GroupClassAccuracyTable p = t;
    const std::size_t perm[] = {2, 0, 3, 1};
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t y = 0; y < 3; ++y) p.acc(perm[a], y) = t.acc(a, y);
    EXPECT_DOUBLE_EQ(delta_m(p), delta_m(t));
    EXPECT_DOUBLE_EQ(delta_a(p), delta_a(t));
  }
}

TEST(Evaluate, PerfectAndConstantClassifiers) {
  std::vector<std::pair<int, std::optional<int>>> rows;
  for (int i = 0; i < 40; ++i) rows.emplace_back(i % 2, (i / 2) % 2);
  const auto ds = labeled_rows(rows, 2, 2);
  const auto perfect = evaluate_predictions(ds.targets(), ds, iota_rows(40));
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.delta_m, 0.0);
  EXPECT_EQ(perfect.delta_a, 0.0);
  EXPECT_EQ(perfect.n_eval, 40);

  const Classifier constant = [](const Matrix& x) { return std::vector<int>(x.rows, 1); };
  const auto rep = evaluate(constant, ds, iota_rows(40));
  EXPECT_DOUBLE_EQ(rep.accuracy, 0.5);
  EXPECT_EQ(rep.delta_m, 0.0);
}

TEST(Evaluate, FunctionOfTargetGivesZeroGap) {
  SeededRng r(21);
  std::vector<std::pair<int, std::optional<int>>> rows;
  for (int i = 0; i < 300; ++i)
    rows.emplace_back(static_cast<int>(r.uniform_index(3)), static_cast<int>(r.uniform_index(3)));
  const auto ds = labeled_rows(rows, 3, 3);
  std::vector<int> preds;
  for (int y : ds.targets()) preds.push_back((y + 1) % 3 == 0 ? 0 : y);
  const auto rep = evaluate_predictions(preds, ds, iota_rows(ds.size()));
  EXPECT_EQ(rep.delta_m, 0.0);
}

TEST(Evaluate, RandomClassifierMatchesRecount) {
  SeededRng r(31);
  std::vector<std::pair<int, std::optional<int>>> rows;
  for (int i = 0; i < 200; ++i)
    rows.emplace_back(static_cast<int>(r.uniform_index(2)), static_cast<int>(r.uniform_index(3)));
  const auto ds = labeled_rows(rows, 2, 3);
  std::vector<int> preds(200);
  for (int& p : preds) p = static_cast<int>(r.uniform_index(2));
  const auto rep = evaluate_predictions(preds, ds, iota_rows(200));
  long hits = 0;
  for (int i = 0; i < 200; ++i) hits += preds[i] == ds.target(i);
  EXPECT_DOUBLE_EQ(rep.accuracy, hits / 200.0);
  const auto [dm, da] = brute_force(rep.table);
  EXPECT_NEAR(rep.delta_m, dm, 1e-12);
  EXPECT_NEAR(rep.delta_a, da, 1e-12);
}

TEST(FairnessReportJson, RoundTripAndKeys) {
  std::vector<std::pair<int, std::optional<int>>> rows{{0, 0}, {0, 1}, {1, 0}};
  const auto ds = labeled_rows(rows, 2, 2);
  const std::vector<int> preds{0, 1, 1};
  const auto rep = evaluate_predictions(preds, ds, iota_rows(3));
  const auto j = to_json(rep);
  for (const char* k : {"accuracy", "delta_m", "delta_a", "table", "support", "n_eval"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["table"][1][1].is_null());
  const auto back = fairness_report_from_json(j);
  EXPECT_EQ(back.accuracy, rep.accuracy);
  EXPECT_EQ(back.delta_m, rep.delta_m);
  EXPECT_EQ(back.table.support, rep.table.support);
  EXPECT_EQ(back.table.acc, rep.table.acc);
}
