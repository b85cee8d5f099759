#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/dataset.hpp"
#include "fairpg/independence.hpp"
#include "fairpg/metrics.hpp"
#include "fairpg/mlp.hpp"

namespace fairpg {

namespace trainer {
struct Scratch {};
struct Lbc {
  double alpha = 1.0;
  int eval_period_epochs = 5;
};
struct FairHsic {
  double lambda = 1.0;
};
struct Mfd {
  double lambda = 10.0;
  std::shared_ptr<const MlpModel> teacher;
  bool init_from_teacher = false;
};
}  // namespace trainer

using TrainerSpec = std::variant<trainer::Scratch, trainer::Lbc, trainer::FairHsic, trainer::Mfd>;

std::string trainer_name(const TrainerSpec& spec);
// alpha for LBC, lambda for the penalties, 0 for scratch.
double trainer_strength(const TrainerSpec& spec);
void validate(const TrainerSpec& spec);

// Per-example weights normalised to mean 1.
class ExampleWeights {
 public:
  explicit ExampleWeights(std::size_t n) : w_(n, 1.0) {}
  explicit ExampleWeights(std::vector<double> w);

  const std::vector<double>& values() const { return w_; }
  double mean() const;

 private:
  std::vector<double> w_;
};

// Group labels (true or pseudo) for the rows a fairness trainer fits.
struct GroupedRows {
  std::span<const RowIndex> rows;
  std::span<const int> groups;  // indexed by dataset row; every entry in rows must be >= 0
};

// Multiplicative (group, class) reweighting driven by the per-class accuracy gaps.
struct LbcState {
  Matrix log_weight;  // N x M
  std::vector<Matrix> history;  // cell weights after each update
};

// One update: w(a, y) <- w(a, y) * exp(alpha * (mean_a acc(., y) - acc(a, y))),
// then renormalised so the per-example weights over `cell_of_row` have mean 1.
void lbc_update(LbcState& state, const GroupClassAccuracyTable& table, double alpha,
                std::span<const std::pair<int, int>> cell_of_row);
ExampleWeights lbc_example_weights(const LbcState& state,
                                   std::span<const std::pair<int, int>> cell_of_row);

// Batch penalty builders, exposed for gradient checks.
FeaturePenalty make_hsic_penalty(double lambda, std::span<const int> groups);
FeaturePenalty make_mfd_penalty(double lambda, const Matrix& teacher_features,
                                std::span<const int> targets, std::span<const int> groups,
                                double sigma);

// Sum over (a, y) cells of mmd2(student features of rows in the cell,
// teacher features of rows of class y), over `rows`.
double mfd_penalty_value(const Matrix& student_features, const Matrix& teacher_features,
                         std::span<const int> targets, std::span<const int> groups,
                         std::span<const RowIndex> rows, double sigma);

MlpModel train_scratch(const Dataset& ds, std::span<const RowIndex> rows, const TrainConfig& config);
MlpModel train_lbc(const Dataset& ds, const GroupedRows& data, const trainer::Lbc& spec,
                   const TrainConfig& config, LbcState* state_out = nullptr);
MlpModel train_fairhsic(const Dataset& ds, const GroupedRows& data, const trainer::FairHsic& spec,
                        const TrainConfig& config);
MlpModel train_mfd(const Dataset& ds, const GroupedRows& data, const trainer::Mfd& spec,
                   const TrainConfig& config);

// Dispatches on the spec. Scratch ignores groups.
MlpModel train_with(const TrainerSpec& spec, const Dataset& ds, const GroupedRows& data,
                    const TrainConfig& config);

struct Candidate {
  double strength = 0.0;
  FairnessReport report;
};

// Lowest delta_m among candidates with accuracy >= floor * scratch_accuracy;
// otherwise the most accurate. Ties go to the smaller strength.
std::size_t select_model(std::span<const Candidate> candidates, double scratch_accuracy, double floor);

// Default hyperparameter grids.
std::vector<double> default_grid(const TrainerSpec& kind);

nlohmann::json to_json(const TrainerSpec& spec);
// Parses {"kind": "scratch"|"lbc"|"fairhsic"|"mfd", ...}. Teacher is attached later.
TrainerSpec trainer_from_json(const nlohmann::json& j);

}  // namespace fairpg
