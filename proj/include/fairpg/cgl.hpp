#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/dataset.hpp"
#include "fairpg/mlp.hpp"

namespace fairpg {

namespace policy {
// Drop X_U; fairness trainers see only the group-labeled rows.
struct GroupLabeledOnly {};
// Every X_U row gets a draw from the empirical P(A | Y = y).
struct RandomLabel {};
// Every X_U row gets argmax g(x).
struct PseudoLabel {};
// argmax g(x) when max g(x) > tau, otherwise a draw from P(A | Y = y).
// Without a tau the threshold is searched on the validation split.
struct Cgl {
  std::optional<double> tau;
};
// Keeps argmax g(x) where it matches the hidden true group; wrong predictions
// are replaced by a uniform draw. Evaluation-only: needs ground truth on X_U.
struct OracleRandomWrong {};
}  // namespace policy

using AssignmentPolicy = std::variant<policy::GroupLabeledOnly, policy::RandomLabel,
                                      policy::PseudoLabel, policy::Cgl, policy::OracleRandomWrong>;

std::string policy_name(const AssignmentPolicy& p);
AssignmentPolicy policy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AssignmentPolicy& p);

enum class Provenance { kConfident, kRandomized };
std::string_view to_string(Provenance p);

struct AssignmentResult {
  IndexSet rows;                     // X_U rows, ascending
  std::vector<int> pseudo_groups;    // aligned with rows
  std::vector<Provenance> provenance;
  std::vector<double> confidence;    // max g(x); NaN when no group model was used
  double tau = 0.0;
  long threshold_objective = 0;
  std::uint64_t split_seed = 0;

  bool empty() const { return rows.empty(); }
  // NaN confidences compare equal to each other.
  friend bool operator==(const AssignmentResult& a, const AssignmentResult& b);
};

struct LabeledSplit {
  IndexSet train;
  IndexSet val;
};

// Stratified by (group, class) cell with largest-remainder rounding; the train
// side gets round(fraction * |labeled|) rows, clamped so both sides are non-empty.
LabeledSplit split_labeled(const Dataset& ds, std::span<const RowIndex> labeled, double fraction,
                           std::uint64_t seed);

struct ThresholdSearch {
  double tau = 0.0;
  long objective = 0;
  std::size_t n = 0;
  double detection_accuracy() const { return n ? static_cast<double>(objective) / static_cast<double>(n) : 0.0; }
};

// #{conf > tau and correct} + #{conf <= tau and wrong}.
long threshold_objective(std::span<const double> confidence, std::span<const char> correct, double tau);

// Maximises threshold_objective over {0, 1} and every distinct confidence;
// returns the smallest maximiser.
ThresholdSearch search_threshold(std::span<const double> confidence, std::span<const char> correct);
ThresholdSearch search_threshold(const MlpModel& g, const Dataset& ds, std::span<const RowIndex> val);

struct AssignContext {
  const ConditionalGroupTable* table = nullptr;        // P(A | Y) over X_L
  std::span<const double> marginal;                    // P(A) over X_L, fallback for empty classes
  std::uint64_t seed = 0;                              // per-row streams derive from (seed, row)
  std::span<const std::optional<int>> hidden_groups;   // ground truth, OracleRandomWrong only
};

// Pseudo groups for every X_U row of ds. Row r draws only from the stream
// derived from (ctx.seed, r), so RandomLabel and Cgl(1) coincide exactly.
AssignmentResult assign(const MlpModel* g, const AssignmentPolicy& policy, const Dataset& ds,
                        const AssignContext& ctx);

struct Histogram {
  double bucket_width = 0.05;
  std::vector<long> counts;
};
Histogram confidence_histogram(std::span<const double> confidence, double bucket_width = 0.05);

struct CglDiagnostics {
  std::size_t n_labeled = 0, n_train = 0, n_val = 0, n_unlabeled = 0, n_randomized = 0;
  double val_group_accuracy = 0.0;       // argmax rule on the validation split
  double threshold_rule_accuracy = 0.0;  // argmax above tau, P(A|Y) draw below
  double detection_accuracy = 0.0;       // correct-vs-wrong accuracy of the threshold
  double searched_tau = 0.0;
  long threshold_objective = 0;
  Histogram validation_histogram;
  Histogram unlabeled_histogram;
};

// Everything the group-model stage computes before the assignment step; shared by the
// policies of one (dataset, seed).
struct GroupModelStage {
  LabeledPartition partition;
  LabeledSplit split;
  MlpModel g;
  ConditionalGroupTable table;
  std::vector<double> marginal;
  ThresholdSearch search;
  std::uint64_t seed = 0;
};

GroupModelStage prepare_group_model(const Dataset& ds, const TrainConfig& group_config,
                                    std::uint64_t seed, double train_fraction = 0.8);

struct CglOutput {
  AssignmentResult assignment;
  CglDiagnostics diagnostics;
};

CglOutput assign_from_stage(const GroupModelStage& stage, const AssignmentPolicy& policy, const Dataset& ds,
                            std::span<const std::optional<int>> hidden_groups = {});

// split -> train g -> search tau -> assign.
CglOutput run_cgl_pipeline(const Dataset& ds, const AssignmentPolicy& policy, const TrainConfig& group_config,
                           std::uint64_t seed, std::span<const std::optional<int>> hidden_groups = {});

// Group column for training: true labels on X_L, pseudo labels on X_U, -1 elsewhere.
std::vector<int> merged_groups(const Dataset& ds, const AssignmentResult& result);

void write_assignment_csv(std::ostream& out, const AssignmentResult& r);
nlohmann::json to_json(const CglDiagnostics& d);
nlohmann::json to_json(const Histogram& h);

}  // namespace fairpg
