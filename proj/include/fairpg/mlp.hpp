#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/dataset.hpp"
#include "fairpg/matrix.hpp"

namespace fairpg {

// Two-layer rectifier network: features = relu(W1 x + b1), logits = W2 features + b2.
// hidden == 0 selects the linear (logistic-regression) model with features = x.
struct MlpModel {
  int input_dim = 0;
  int hidden = 0;
  int outputs = 0;
  Matrix w1;  // hidden x input_dim
  std::vector<double> b1;
  Matrix w2;  // outputs x feature_dim()
  std::vector<double> b2;

  int feature_dim() const { return hidden > 0 ? hidden : input_dim; }
  std::size_t num_parameters() const {
    return w1.data.size() + b1.size() + w2.data.size() + b2.size();
  }
  // Zero-valued model of the same shape.
  MlpModel zeros_like() const;
  bool all_finite() const;

  // Flat views in the order w1, b1, w2, b2.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  double lr_decay_factor = 0.1;
  int plateau_patience = 10;
  double plateau_tolerance = 1e-4;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  int hidden = 64;

  void validate() const;
};

MlpModel init_model(int input_dim, int hidden, int outputs, std::uint64_t seed);

// Single-example forward pass.
struct ForwardOutput {
  std::vector<double> logits;
  std::vector<double> features;
};
ForwardOutput forward(const MlpModel& model, std::span<const double> x);

// Batched forward pass; pre_activation is empty for the linear model.
struct BatchForward {
  Matrix pre_activation;
  Matrix features;
  Matrix logits;
};
BatchForward forward_batch(const MlpModel& model, const Matrix& x);

std::vector<double> softmax(std::span<const double> logits);
GroupPosterior predict_posterior(const MlpModel& model, std::span<const double> x);
std::vector<GroupPosterior> predict_posteriors(const MlpModel& model, const Matrix& x);
std::vector<int> predict_classes(const MlpModel& model, const Matrix& x);
Matrix extract_features(const MlpModel& model, const Matrix& x);

struct Batch {
  Matrix x;
  std::vector<int> labels;
  std::vector<double> weights;
  std::vector<RowIndex> rows;  // dataset row of each example
};

// Returns the (already strength-scaled) penalty value on the batch features and
// adds its gradient with respect to those features into `grad_features`.
using FeaturePenalty =
    std::function<double(const Batch& batch, const Matrix& features, Matrix& grad_features)>;

struct LossAndGrad {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;
  MlpModel grad;
};

// Weighted cross-entropy normalised by the batch weight sum, plus
// weight_decay/2 * ||params||^2, plus the penalty. Gradients are analytic.
LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch, double weight_decay,
                          const FeaturePenalty& penalty = nullptr);

// Called after every epoch; may rewrite the per-example weights (indexed like
// TrainRequest::rows).
using EpochHook = std::function<void(int epoch, const MlpModel& model, std::vector<double>& weights)>;

struct TrainRequest {
  const Matrix* features = nullptr;   // all dataset rows
  std::span<const RowIndex> rows;     // rows to fit
  std::span<const int> labels;        // indexed by dataset row
  int num_outputs = 0;
  std::vector<double> weights;        // per entry of rows; empty means all 1
  FeaturePenalty penalty;
  EpochHook on_epoch_end;
  const MlpModel* init = nullptr;     // start from these parameters instead of seeded init
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
};

// Adam with plateau learning-rate decay; returns the last-epoch model.
MlpModel train(const TrainRequest& request, const TrainConfig& config, TrainLog* log = nullptr);

enum class LabelColumn { kTarget, kGroup };

// Fits the target column or the group column of `ds` over `rows`.
MlpModel train(const Dataset& ds, std::span<const RowIndex> rows, LabelColumn column,
               const TrainConfig& config, const FeaturePenalty& penalty = nullptr,
               TrainLog* log = nullptr);

nlohmann::json to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
// Fields missing from `j` keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace fairpg
