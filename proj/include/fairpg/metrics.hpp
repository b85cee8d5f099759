#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/dataset.hpp"
#include "fairpg/matrix.hpp"

namespace fairpg {

// acc(a, y) = empirical P(f(X) = y | A = a, Y = y); cells with support 0 are absent.
struct GroupClassAccuracyTable {
  Matrix acc;                              // N x M
  std::vector<std::vector<long>> support;  // N x M

  std::size_t num_groups() const { return acc.rows; }
  std::size_t num_classes() const { return acc.cols; }
  bool present(std::size_t a, std::size_t y) const { return support[a][y] > 0; }
};

struct FairnessReport {
  double accuracy = 0.0;
  double delta_m = 0.0;
  double delta_a = 0.0;
  GroupClassAccuracyTable table;
  long n_eval = 0;
};

// Counts per (group, class) over `rows`; `groups` is indexed by dataset row.
GroupClassAccuracyTable accuracy_table(std::span<const int> preds, std::span<const int> targets,
                                       std::span<const std::optional<int>> groups,
                                       std::span<const RowIndex> rows, int num_groups,
                                       int num_classes);

GroupClassAccuracyTable accuracy_table(std::span<const int> preds, const Dataset& ds,
                                       std::span<const RowIndex> rows);

// Worst pairwise gap between supported groups for each class; classes with
// fewer than two supported groups give 0.
std::vector<double> per_class_gaps(const GroupClassAccuracyTable& table);

// Max over classes of the per-class gap. Throws if no class has >= 2 supported groups.
double delta_m(const GroupClassAccuracyTable& table);

// Per-class gaps averaged over all M classes.
double delta_a(const GroupClassAccuracyTable& table);

using Classifier = std::function<std::vector<int>(const Matrix& features)>;

// Overall accuracy and both disparities on fully group-labeled `rows`.
FairnessReport evaluate(const Classifier& f, const Dataset& ds, std::span<const RowIndex> rows);
FairnessReport evaluate_predictions(std::span<const int> preds, const Dataset& ds,
                                    std::span<const RowIndex> rows);

nlohmann::json to_json(const FairnessReport& r);
FairnessReport fairness_report_from_json(const nlohmann::json& j);

}  // namespace fairpg
