#include "fairpg/fairtrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

namespace fairpg {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kSelectTol = 1e-12;

void check_grouped(const Dataset& ds, const GroupedRows& data) {
  if (data.rows.empty()) throw std::invalid_argument("fair trainer: empty row set");
  if (data.groups.size() != ds.size()) throw std::invalid_argument("fair trainer: group vector misaligned");
  for (RowIndex r : data.rows) {
    if (r >= ds.size()) throw std::invalid_argument("fair trainer: row out of range");
    if (data.groups[r] < 0 || data.groups[r] >= ds.num_groups())
      throw std::invalid_argument("fair trainer: row " + std::to_string(r) + " has no group label");
  }
}

std::vector<std::pair<int, int>> cells_of(const Dataset& ds, const GroupedRows& data) {
  std::vector<std::pair<int, int>> cells;
  cells.reserve(data.rows.size());
  for (RowIndex r : data.rows) cells.emplace_back(data.groups[r], ds.target(r));
  return cells;
}

}  // namespace

std::string trainer_name(const TrainerSpec& spec) {
  return std::visit(overloaded{[](const trainer::Scratch&) { return std::string("scratch"); },
                               [](const trainer::Lbc&) { return std::string("lbc"); },
                               [](const trainer::FairHsic&) { return std::string("fairhsic"); },
                               [](const trainer::Mfd&) { return std::string("mfd"); }},
                    spec);
}

double trainer_strength(const TrainerSpec& spec) {
  return std::visit(overloaded{[](const trainer::Scratch&) { return 0.0; },
                               [](const trainer::Lbc& s) { return s.alpha; },
                               [](const trainer::FairHsic& s) { return s.lambda; },
                               [](const trainer::Mfd& s) { return s.lambda; }},
                    spec);
}

void validate(const TrainerSpec& spec) {
  std::visit(overloaded{[](const trainer::Scratch&) {},
                        [](const trainer::Lbc& s) {
                          if (!(s.alpha >= 0.0)) throw std::invalid_argument("lbc: alpha must be >= 0");
                          if (s.eval_period_epochs < 1)
                            throw std::invalid_argument("lbc: eval_period_epochs must be >= 1");
                        },
                        [](const trainer::FairHsic& s) {
                          if (!(s.lambda >= 0.0)) throw std::invalid_argument("fairhsic: lambda must be >= 0");
                        },
                        [](const trainer::Mfd& s) {
                          if (!(s.lambda >= 0.0)) throw std::invalid_argument("mfd: lambda must be >= 0");
                        }},
             spec);
}

ExampleWeights::ExampleWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw std::invalid_argument("ExampleWeights: empty");
  for (double v : w_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("ExampleWeights: invalid weight");
  }
  const double m = mean();
  if (!(m > 0.0)) throw std::invalid_argument("ExampleWeights: all weights are zero");
  for (double& v : w_) v /= m;
}

double ExampleWeights::mean() const {
  double s = 0.0;
  for (double v : w_) s += v;
  return s / static_cast<double>(w_.size());
}

void lbc_update(LbcState& state, const GroupClassAccuracyTable& table, double alpha,
                std::span<const std::pair<int, int>> cell_of_row) {
  const std::size_t N = table.num_groups();
  const std::size_t M = table.num_classes();
  if (state.log_weight.rows != N || state.log_weight.cols != M) state.log_weight = Matrix(N, M);
  for (std::size_t y = 0; y < M; ++y) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t a = 0; a < N; ++a) {
      if (table.present(a, y)) {
        sum += table.acc(a, y);
        ++count;
      }
    }
    if (count == 0) continue;
    const double class_mean = sum / count;
    for (std::size_t a = 0; a < N; ++a) {
      if (table.present(a, y)) state.log_weight(a, y) += alpha * (class_mean - table.acc(a, y));
    }
  }
  // Renormalise in log space so the mean per-example weight is exactly 1.
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& [a, y] : cell_of_row) mx = std::max(mx, state.log_weight(a, y));
  double s = 0.0;
  for (const auto& [a, y] : cell_of_row) s += std::exp(state.log_weight(a, y) - mx);
  const double log_mean = mx + std::log(s / static_cast<double>(cell_of_row.size()));
  if (!std::isfinite(log_mean)) throw std::runtime_error("lbc: non-finite example weights");
  for (double& v : state.log_weight.data) v -= log_mean;
  Matrix w(N, M);
  for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = std::exp(state.log_weight.data[i]);
  state.history.push_back(std::move(w));
}

ExampleWeights lbc_example_weights(const LbcState& state,
                                   std::span<const std::pair<int, int>> cell_of_row) {
  std::vector<double> w;
  w.reserve(cell_of_row.size());
  for (const auto& [a, y] : cell_of_row) {
    const double v = std::exp(state.log_weight(a, y));
    if (!std::isfinite(v)) throw std::runtime_error("lbc: non-finite example weights");
    w.push_back(v);
  }
  return ExampleWeights(std::move(w));
}

FeaturePenalty make_hsic_penalty(double lambda, std::span<const int> groups) {
  return [lambda, groups](const Batch& batch, const Matrix& features, Matrix& grad) {
    if (batch.rows.size() < 4) return 0.0;
    std::vector<int> g;
    g.reserve(batch.rows.size());
    for (RowIndex r : batch.rows) g.push_back(groups[r]);
    Matrix local(features.rows, features.cols);
    const double value = hsic_with_grad(features, g, local);
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += lambda * local.data[i];
    return lambda * value;
  };
}

namespace {

// Calls fn(y, a, rows_in_cell, rows_in_class) for every populated (a, y) cell,
// where the row lists are positions into `rows`.
template <typename Fn>
void for_each_cell(std::span<const RowIndex> rows, std::span<const int> targets,
                   std::span<const int> groups, Fn&& fn) {
  std::map<int, std::vector<std::size_t>> by_class;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;
  for (std::size_t p = 0; p < rows.size(); ++p) {
    const int y = targets[rows[p]];
    by_class[y].push_back(p);
    by_cell[{y, groups[rows[p]]}].push_back(p);
  }
  for (const auto& [key, cell] : by_cell) fn(key.first, key.second, cell, by_class.at(key.first));
}

Matrix gather_positions(const Matrix& m, const std::vector<std::size_t>& pos) {
  return gather_rows(m, pos);
}

}  // namespace

double mfd_penalty_value(const Matrix& student_features, const Matrix& teacher_features,
                         std::span<const int> targets, std::span<const int> groups,
                         std::span<const RowIndex> rows, double sigma) {
  // student_features is indexed by position in rows; teacher_features by dataset row.
  double total = 0.0;
  for_each_cell(rows, targets, groups,
                [&](int, int, const std::vector<std::size_t>& cell, const std::vector<std::size_t>& cls) {
                  std::vector<RowIndex> teacher_rows;
                  for (std::size_t p : cls) teacher_rows.push_back(rows[p]);
                  total += mmd2(gather_positions(student_features, cell),
                                gather_rows(teacher_features, teacher_rows), sigma);
                });
  return total;
}

FeaturePenalty make_mfd_penalty(double lambda, const Matrix& teacher_features,
                                std::span<const int> targets, std::span<const int> groups,
                                double sigma) {
  return [lambda, &teacher_features, targets, groups, sigma](const Batch& batch, const Matrix& features,
                                                             Matrix& grad) {
    double total = 0.0;
    for_each_cell(batch.rows, targets, groups,
                  [&](int, int, const std::vector<std::size_t>& cell, const std::vector<std::size_t>& cls) {
                    std::vector<RowIndex> teacher_rows;
                    for (std::size_t p : cls) teacher_rows.push_back(batch.rows[p]);
                    const Matrix a = gather_positions(features, cell);
                    Matrix ga(a.rows, a.cols);
                    total += mmd2_with_grad(a, gather_rows(teacher_features, teacher_rows), sigma, ga);
                    for (std::size_t i = 0; i < cell.size(); ++i) {
                      auto dst = grad.row(cell[i]);
                      auto src = ga.row(i);
                      for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += lambda * src[t];
                    }
                  });
    return lambda * total;
  };
}

MlpModel train_scratch(const Dataset& ds, std::span<const RowIndex> rows, const TrainConfig& config) {
  return train(ds, rows, LabelColumn::kTarget, config);
}

MlpModel train_lbc(const Dataset& ds, const GroupedRows& data, const trainer::Lbc& spec,
                   const TrainConfig& config, LbcState* state_out) {
  validate(TrainerSpec{spec});
  check_grouped(ds, data);
  const auto cells = cells_of(ds, data);
  LbcState state;
  state.log_weight = Matrix(static_cast<std::size_t>(ds.num_groups()), static_cast<std::size_t>(ds.num_classes()));

  std::vector<std::optional<int>> opt_groups(ds.size());
  for (RowIndex r : data.rows) opt_groups[r] = data.groups[r];

  TrainRequest req;
  req.features = &ds.features();
  req.rows = data.rows;
  req.labels = ds.targets();
  req.num_outputs = ds.num_classes();
  req.weights = lbc_example_weights(state, cells).values();
  req.on_epoch_end = [&](int epoch, const MlpModel& model, std::vector<double>& weights) {
    if ((epoch + 1) % spec.eval_period_epochs != 0 || epoch + 1 == config.epochs) return;
    const Matrix x = gather_rows(ds.features(), data.rows);
    const std::vector<int> local = predict_classes(model, x);
    std::vector<int> preds(ds.size(), -1);
    for (std::size_t p = 0; p < data.rows.size(); ++p) preds[data.rows[p]] = local[p];
    const auto table = accuracy_table(preds, ds.targets(), opt_groups, data.rows, ds.num_groups(),
                                      ds.num_classes());
    lbc_update(state, table, spec.alpha, cells);
    weights = lbc_example_weights(state, cells).values();
  };
  MlpModel model = train(req, config);
  if (state_out) *state_out = std::move(state);
  return model;
}

MlpModel train_fairhsic(const Dataset& ds, const GroupedRows& data, const trainer::FairHsic& spec,
                        const TrainConfig& config) {
  validate(TrainerSpec{spec});
  check_grouped(ds, data);
  TrainRequest req;
  req.features = &ds.features();
  req.rows = data.rows;
  req.labels = ds.targets();
  req.num_outputs = ds.num_classes();
  if (spec.lambda > 0.0) req.penalty = make_hsic_penalty(spec.lambda, data.groups);
  return train(req, config);
}

MlpModel train_mfd(const Dataset& ds, const GroupedRows& data, const trainer::Mfd& spec,
                   const TrainConfig& config) {
  validate(TrainerSpec{spec});
  check_grouped(ds, data);
  if (!spec.teacher) throw std::invalid_argument("mfd: teacher model is required");
  TrainRequest req;
  req.features = &ds.features();
  req.rows = data.rows;
  req.labels = ds.targets();
  req.num_outputs = ds.num_classes();
  if (spec.init_from_teacher) req.init = spec.teacher.get();

  Matrix teacher_features;
  if (spec.lambda > 0.0) {
    teacher_features = extract_features(*spec.teacher, ds.features());
    if (teacher_features.cols != static_cast<std::size_t>(config.hidden > 0 ? config.hidden : ds.dim()))
      throw std::invalid_argument("mfd: teacher and student feature widths differ");
    // Bandwidth from at most 1000 evenly spaced training rows.
    const std::size_t stride = std::max<std::size_t>(1, data.rows.size() / 1000);
    std::vector<RowIndex> sample;
    for (std::size_t p = 0; p < data.rows.size(); p += stride) sample.push_back(data.rows[p]);
    const double sigma = median_heuristic_sigma(gather_rows(teacher_features, sample));
    req.penalty = make_mfd_penalty(spec.lambda, teacher_features, ds.targets(), data.groups, sigma);
  }
  return train(req, config);
}

MlpModel train_with(const TrainerSpec& spec, const Dataset& ds, const GroupedRows& data,
                    const TrainConfig& config) {
  return std::visit(
      overloaded{[&](const trainer::Scratch&) { return train_scratch(ds, data.rows, config); },
                 [&](const trainer::Lbc& s) { return train_lbc(ds, data, s, config); },
                 [&](const trainer::FairHsic& s) { return train_fairhsic(ds, data, s, config); },
                 [&](const trainer::Mfd& s) { return train_mfd(ds, data, s, config); }},
      spec);
}

std::size_t select_model(std::span<const Candidate> candidates, double scratch_accuracy, double floor) {
  if (candidates.empty()) throw std::invalid_argument("select_model: no candidates");
  const double bound = floor * scratch_accuracy - kSelectTol;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.report.accuracy < bound) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    if (c.report.delta_m < b.report.delta_m ||
        (c.report.delta_m == b.report.delta_m && c.strength < b.strength))
      best = i;
  }
  if (best) return *best;
  std::size_t top = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = candidates[top];
    if (c.report.accuracy > b.report.accuracy ||
        (c.report.accuracy == b.report.accuracy && c.strength < b.strength))
      top = i;
  }
  return top;
}

std::vector<double> default_grid(const TrainerSpec& kind) {
  return std::visit(
      overloaded{[](const trainer::Scratch&) { return std::vector<double>{0.0}; },
                 [](const trainer::Lbc&) { return std::vector<double>{1, 3, 10, 30, 100}; },
                 [](const trainer::FairHsic&) { return std::vector<double>{1, 3, 10, 30, 100, 300, 1000, 3000}; },
                 [](const trainer::Mfd&) {
                   return std::vector<double>{10, 30, 100, 300, 1000, 3000, 10000, 30000};
                 }},
      kind);
}

nlohmann::json to_json(const TrainerSpec& spec) {
  return std::visit(
      overloaded{[](const trainer::Scratch&) { return nlohmann::json{{"kind", "scratch"}}; },
                 [](const trainer::Lbc& s) {
                   return nlohmann::json{{"kind", "lbc"}, {"alpha", s.alpha}, {"eval_period_epochs", s.eval_period_epochs}};
                 },
                 [](const trainer::FairHsic& s) { return nlohmann::json{{"kind", "fairhsic"}, {"lambda", s.lambda}}; },
                 [](const trainer::Mfd& s) {
                   return nlohmann::json{{"kind", "mfd"}, {"lambda", s.lambda}, {"init_from_teacher", s.init_from_teacher}};
                 }},
      spec);
}

TrainerSpec trainer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  TrainerSpec spec;
  if (kind == "scratch") {
    spec = trainer::Scratch{};
  } else if (kind == "lbc") {
    spec = trainer::Lbc{j.value("alpha", 1.0), j.value("eval_period_epochs", 5)};
  } else if (kind == "fairhsic") {
    spec = trainer::FairHsic{j.value("lambda", 1.0)};
  } else if (kind == "mfd") {
    spec = trainer::Mfd{j.value("lambda", 10.0), nullptr, j.value("init_from_teacher", false)};
  } else {
    throw std::invalid_argument("unknown trainer kind: " + kind);
  }
  validate(spec);
  return spec;
}

}  // namespace fairpg
