#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairpg/matrix.hpp"
#include "fairpg/rng.hpp"

namespace fairpg {

using RowIndex = std::size_t;
using IndexSet = std::vector<RowIndex>;

// Feature rows with target labels and optional sensitive-group labels.
// Row i is group-labeled iff groups[i] has a value.
class Dataset {
 public:
  Dataset() = default;
  // Validates every invariant; throws std::invalid_argument on violation.
  Dataset(Matrix features, std::vector<int> targets,
          std::vector<std::optional<int>> groups, int num_classes, int num_groups);

  std::size_t size() const { return targets_.size(); }
  std::size_t dim() const { return features_.cols; }
  int num_classes() const { return num_classes_; }
  int num_groups() const { return num_groups_; }

  const Matrix& features() const { return features_; }
  std::span<const double> row(RowIndex i) const { return features_.row(i); }
  const std::vector<int>& targets() const { return targets_; }
  const std::vector<std::optional<int>>& groups() const { return groups_; }
  int target(RowIndex i) const { return targets_[i]; }
  const std::optional<int>& group(RowIndex i) const { return groups_[i]; }

  // Same features and targets with a replaced group column.
  Dataset with_groups(std::vector<std::optional<int>> groups) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Matrix features_;
  std::vector<int> targets_;
  std::vector<std::optional<int>> groups_;
  int num_classes_ = 0;
  int num_groups_ = 0;
};

struct LabeledPartition {
  IndexSet labeled;    // X_L
  IndexSet unlabeled;  // X_U
};

LabeledPartition partition_group_labeled(const Dataset& ds);

// A point on the group simplex produced by the group classifier.
struct GroupPosterior {
  std::vector<double> probs;

  // Highest probability; ties resolved toward the lowest index.
  std::size_t argmax() const;
  double confidence() const;
  bool is_valid(double tol = 1e-9) const;
};

// Empirical P(A | Y) with the counts it came from. table is M x N.
struct ConditionalGroupTable {
  Matrix table;
  std::vector<std::vector<long>> counts;

  std::size_t num_classes() const { return table.rows; }
  std::size_t num_groups() const { return table.cols; }
  bool row_empty(int y) const;
  std::span<const double> row(int y) const { return table.row(static_cast<std::size_t>(y)); }
};

// table[y][a] = count(a, y) / count(y) over `rows`, which must all be group-labeled.
ConditionalGroupTable empirical_conditional(const Dataset& ds, std::span<const RowIndex> rows);

// Marginal empirical P(A) over `rows`.
std::vector<double> empirical_marginal(const Dataset& ds, std::span<const RowIndex> rows);

// Draws a group from row y of the table. Throws EmptyConditionalError when the
// row has no support so the caller can fall back to the marginal.
struct EmptyConditionalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
int sample_group(const ConditionalGroupTable& table, int y, SeededRng& rng);

// sample_group with the marginal fallback for classes that had no labeled rows.
int sample_group_or_marginal(const ConditionalGroupTable& table,
                             std::span<const double> marginal, int y, SeededRng& rng);

// CSV with header feature_0,...,feature_{d-1},target,group; an empty group cell
// means "no group label". num_classes / num_groups of 0 means infer (max + 1).
Dataset read_dataset_csv(std::istream& in, int num_classes = 0, int num_groups = 0);
Dataset read_dataset_csv(const std::string& path, int num_classes = 0, int num_groups = 0);
void write_dataset_csv(std::ostream& out, const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);

}  // namespace fairpg
