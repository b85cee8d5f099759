#include "fairpg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairpg {

GroupClassAccuracyTable accuracy_table(std::span<const int> preds, std::span<const int> targets,
                                       std::span<const std::optional<int>> groups,
                                       std::span<const RowIndex> rows, int num_groups,
                                       int num_classes) {
  if (rows.empty()) throw std::invalid_argument("accuracy_table: empty row set");
  if (preds.size() != targets.size() || groups.size() != targets.size())
    throw std::invalid_argument("accuracy_table: predictions not aligned with dataset");
  const auto N = static_cast<std::size_t>(num_groups);
  const auto M = static_cast<std::size_t>(num_classes);
  GroupClassAccuracyTable t{Matrix(N, M), std::vector<std::vector<long>>(N, std::vector<long>(M, 0))};
  std::vector<std::vector<long>> hits(N, std::vector<long>(M, 0));
  for (RowIndex r : rows) {
    const auto& g = groups[r];
    if (!g) throw std::invalid_argument("accuracy_table: row without group label");
    const auto a = static_cast<std::size_t>(*g);
    const auto y = static_cast<std::size_t>(targets[r]);
    if (a >= N || y >= M) throw std::invalid_argument("accuracy_table: label out of range");
    ++t.support[a][y];
    if (preds[r] == targets[r]) ++hits[a][y];
  }
  for (std::size_t a = 0; a < N; ++a) {
    for (std::size_t y = 0; y < M; ++y) {
      if (t.support[a][y] > 0)
        t.acc(a, y) = static_cast<double>(hits[a][y]) / static_cast<double>(t.support[a][y]);
    }
  }
  return t;
}

GroupClassAccuracyTable accuracy_table(std::span<const int> preds, const Dataset& ds,
                                       std::span<const RowIndex> rows) {
  return accuracy_table(preds, ds.targets(), ds.groups(), rows, ds.num_groups(), ds.num_classes());
}

namespace {

// Returns per-class gaps and whether any class had two supported groups.
std::pair<std::vector<double>, bool> gaps_with_flag(const GroupClassAccuracyTable& t) {
  std::vector<double> gaps(t.num_classes(), 0.0);
  bool any = false;
  for (std::size_t y = 0; y < t.num_classes(); ++y) {
    double lo = 0.0, hi = 0.0;
    int supported = 0;
    for (std::size_t a = 0; a < t.num_groups(); ++a) {
      if (!t.present(a, y)) continue;
      const double v = t.acc(a, y);
      if (supported == 0) {
        lo = hi = v;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      ++supported;
    }
    if (supported >= 2) {
      gaps[y] = hi - lo;
      any = true;
    }
  }
  return {gaps, any};
}

}  // namespace

std::vector<double> per_class_gaps(const GroupClassAccuracyTable& table) {
  return gaps_with_flag(table).first;
}

double delta_m(const GroupClassAccuracyTable& table) {
  auto [gaps, any] = gaps_with_flag(table);
  if (!any) throw std::invalid_argument("delta_m: no class has two supported groups");
  return *std::max_element(gaps.begin(), gaps.end());
}

double delta_a(const GroupClassAccuracyTable& table) {
  auto [gaps, any] = gaps_with_flag(table);
  if (!any) throw std::invalid_argument("delta_a: no class has two supported groups");
  double s = 0.0;
  for (double g : gaps) s += g;
  return s / static_cast<double>(gaps.size());
}

FairnessReport evaluate_predictions(std::span<const int> preds, const Dataset& ds,
                                    std::span<const RowIndex> rows) {
  FairnessReport r;
  r.table = accuracy_table(preds, ds, rows);
  long correct = 0;
  for (RowIndex i : rows) correct += preds[i] == ds.target(i) ? 1 : 0;
  r.n_eval = static_cast<long>(rows.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  r.delta_m = delta_m(r.table);
  r.delta_a = delta_a(r.table);
  return r;
}

FairnessReport evaluate(const Classifier& f, const Dataset& ds, std::span<const RowIndex> rows) {
  const std::vector<int> preds = f(ds.features());
  if (preds.size() != ds.size()) throw std::invalid_argument("evaluate: classifier output size mismatch");
  return evaluate_predictions(preds, ds, rows);
}

nlohmann::json to_json(const FairnessReport& r) {
  nlohmann::json table = nlohmann::json::array();
  nlohmann::json support = nlohmann::json::array();
  for (std::size_t a = 0; a < r.table.num_groups(); ++a) {
    nlohmann::json trow = nlohmann::json::array();
    for (std::size_t y = 0; y < r.table.num_classes(); ++y) {
      if (r.table.present(a, y)) trow.push_back(r.table.acc(a, y));
      else trow.push_back(nullptr);
    }
    table.push_back(std::move(trow));
    support.push_back(r.table.support[a]);
  }
  return {{"accuracy", r.accuracy}, {"delta_m", r.delta_m}, {"delta_a", r.delta_a},
          {"table", std::move(table)}, {"support", std::move(support)}, {"n_eval", r.n_eval}};
}

FairnessReport fairness_report_from_json(const nlohmann::json& j) {
  FairnessReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.delta_m = j.at("delta_m").get<double>();
  r.delta_a = j.at("delta_a").get<double>();
  r.n_eval = j.at("n_eval").get<long>();
  const auto& table = j.at("table");
  const auto& support = j.at("support");
  const std::size_t N = table.size();
  const std::size_t M = N ? table[0].size() : 0;
  r.table.acc = Matrix(N, M);
  r.table.support = support.get<std::vector<std::vector<long>>>();
  for (std::size_t a = 0; a < N; ++a) {
    for (std::size_t y = 0; y < M; ++y) {
      if (!table[a][y].is_null()) r.table.acc(a, y) = table[a][y].get<double>();
    }
  }
  return r;
}

}  // namespace fairpg
