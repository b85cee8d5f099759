#include "fairpg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fairpg/kernels.hpp"
#include "fairpg/rng.hpp"

namespace fairpg {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) s[j] += m(i, j);
  }
  return s;
}

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

MlpModel MlpModel::zeros_like() const {
  MlpModel z = *this;
  z.w1.fill(0.0);
  std::fill(z.b1.begin(), z.b1.end(), 0.0);
  z.w2.fill(0.0);
  std::fill(z.b2.begin(), z.b2.end(), 0.0);
  return z;
}

bool MlpModel::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(w1.data.begin(), w1.data.end(), finite) &&
         std::all_of(b1.begin(), b1.end(), finite) &&
         std::all_of(w2.data.begin(), w2.data.end(), finite) &&
         std::all_of(b2.begin(), b2.end(), finite);
}

std::vector<double> MlpModel::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_parameters());
  flat.insert(flat.end(), w1.data.begin(), w1.data.end());
  flat.insert(flat.end(), b1.begin(), b1.end());
  flat.insert(flat.end(), w2.data.begin(), w2.data.end());
  flat.insert(flat.end(), b2.begin(), b2.end());
  return flat;
}

void MlpModel::assign_flat(std::span<const double> flat) {
  if (flat.size() != num_parameters()) throw std::invalid_argument("assign_flat: size mismatch");
  auto it = flat.begin();
  auto take = [&it](auto& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(w1.data);
  take(b1);
  take(w2.data);
  take(b2);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
    throw std::invalid_argument("TrainConfig: lr_decay_factor must be in (0, 1)");
  if (plateau_patience < 1) throw std::invalid_argument("TrainConfig: plateau_patience must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (hidden < 0) throw std::invalid_argument("TrainConfig: hidden must be >= 0");
}

MlpModel init_model(int input_dim, int hidden, int outputs, std::uint64_t seed) {
  if (input_dim < 1 || outputs < 1 || hidden < 0) throw std::invalid_argument("init_model: bad shape");
  SeededRng rng(seed);
  MlpModel m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  m.outputs = outputs;
  if (hidden > 0) {
    m.w1 = Matrix(static_cast<std::size_t>(hidden), static_cast<std::size_t>(input_dim));
    const double s1 = std::sqrt(2.0 / input_dim);
    for (double& w : m.w1.data) w = rng.normal() * s1;
    m.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  }
  const int fdim = m.feature_dim();
  m.w2 = Matrix(static_cast<std::size_t>(outputs), static_cast<std::size_t>(fdim));
  const double s2 = std::sqrt(2.0 / fdim);
  for (double& w : m.w2.data) w = rng.normal() * s2;
  m.b2.assign(static_cast<std::size_t>(outputs), 0.0);
  return m;
}

BatchForward forward_batch(const MlpModel& model, const Matrix& x) {
  if (x.cols != static_cast<std::size_t>(model.input_dim))
    throw std::invalid_argument("forward: input dimension mismatch");
  BatchForward out;
  if (model.hidden > 0) {
    out.pre_activation = kernels::affine(x, model.w1, model.b1);
    out.features = out.pre_activation;
    for (double& v : out.features.data) v = v > 0.0 ? v : 0.0;
  } else {
    out.features = x;
  }
  out.logits = kernels::affine(out.features, model.w2, model.b2);
  return out;
}

ForwardOutput forward(const MlpModel& model, std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data.begin());
  BatchForward b = forward_batch(model, m);
  return {std::move(b.logits.data), std::move(b.features.data)};
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

GroupPosterior predict_posterior(const MlpModel& model, std::span<const double> x) {
  return {softmax(forward(model, x).logits)};
}

std::vector<GroupPosterior> predict_posteriors(const MlpModel& model, const Matrix& x) {
  const BatchForward b = forward_batch(model, x);
  std::vector<GroupPosterior> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i].probs = softmax(b.logits.row(i));
  return out;
}

std::vector<int> predict_classes(const MlpModel& model, const Matrix& x) {
  const BatchForward b = forward_batch(model, x);
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = static_cast<int>(argmax_lowest(b.logits.row(i)));
  return out;
}

Matrix extract_features(const MlpModel& model, const Matrix& x) {
  return forward_batch(model, x).features;
}

LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch, double weight_decay,
                          const FeaturePenalty& penalty) {
  const std::size_t n = batch.x.rows;
  if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  if (batch.labels.size() != n || (!batch.weights.empty() && batch.weights.size() != n))
    throw std::invalid_argument("loss_and_grad: batch fields differ in length");

  const BatchForward fwd = forward_batch(model, batch.x);
  const auto k = static_cast<std::size_t>(model.outputs);

  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = batch.weights.empty() ? 1.0 : batch.weights[i];
    if (!(w >= 0.0)) throw std::invalid_argument("loss_and_grad: negative example weight");
    wsum += w;
  }

  LossAndGrad out;
  out.grad = model.zeros_like();
  Matrix dlogits(n, k);
  double ce = 0.0;
  if (wsum > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const int y = batch.labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= k) throw std::invalid_argument("loss_and_grad: label out of range");
      const double w = (batch.weights.empty() ? 1.0 : batch.weights[i]) / wsum;
      const auto logits = fwd.logits.row(i);
      const double lse = log_sum_exp(logits);
      ce += w * (lse - logits[static_cast<std::size_t>(y)]);
      for (std::size_t c = 0; c < k; ++c) {
        const double p = std::exp(logits[c] - lse);
        dlogits(i, c) = w * (p - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0));
      }
    }
  }
  out.cross_entropy = ce;

  out.grad.w2 = kernels::transpose_times(dlogits, fwd.features);
  out.grad.b2 = column_sums(dlogits);
  Matrix dfeat = kernels::times(dlogits, model.w2);
  if (penalty) out.penalty = penalty(batch, fwd.features, dfeat);

  if (model.hidden > 0) {
    for (std::size_t i = 0; i < dfeat.data.size(); ++i) {
      if (!(fwd.pre_activation.data[i] > 0.0)) dfeat.data[i] = 0.0;
    }
    out.grad.w1 = kernels::transpose_times(dfeat, batch.x);
    out.grad.b1 = column_sums(dfeat);
  }

  double reg = 0.0;
  if (weight_decay > 0.0) {
    std::vector<double> theta = model.flatten();
    std::vector<double> g = out.grad.flatten();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      reg += theta[i] * theta[i];
      g[i] += weight_decay * theta[i];
    }
    reg *= 0.5 * weight_decay;
    out.grad.assign_flat(g);
  }
  out.loss = out.cross_entropy + reg + out.penalty;
  return out;
}

MlpModel train(const TrainRequest& req, const TrainConfig& config, TrainLog* log) {
  config.validate();
  if (req.features == nullptr) throw std::invalid_argument("train: missing features");
  if (req.rows.empty()) throw std::invalid_argument("train: empty row set");
  if (req.num_outputs < 1) throw std::invalid_argument("train: num_outputs must be >= 1");
  if (!req.weights.empty() && req.weights.size() != req.rows.size())
    throw std::invalid_argument("train: weights must align with rows");
  for (RowIndex r : req.rows) {
    if (r >= req.features->rows || r >= req.labels.size())
      throw std::invalid_argument("train: row index out of range");
    if (req.labels[r] < 0 || req.labels[r] >= req.num_outputs)
      throw std::invalid_argument("train: label out of range at row " + std::to_string(r));
  }

  const auto d = static_cast<int>(req.features->cols);
  MlpModel model = req.init ? *req.init
                            : init_model(d, config.hidden, req.num_outputs, derive_seed(config.seed, "init"));
  if (model.input_dim != d || model.outputs != req.num_outputs)
    throw std::invalid_argument("train: initial model shape mismatch");

  std::vector<double> weights = req.weights;
  if (weights.empty()) weights.assign(req.rows.size(), 1.0);

  const std::size_t P = model.num_parameters();
  std::vector<double> m1(P, 0.0), m2(P, 0.0);
  std::vector<double> theta = model.flatten();
  long step = 0;
  double lr = config.lr;
  double best_loss = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  SeededRng shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(req.rows.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const std::size_t end = std::min(order.size(), start + bs);
      Batch batch;
      batch.rows.reserve(end - start);
      for (std::size_t p = start; p < end; ++p) batch.rows.push_back(req.rows[order[p]]);
      batch.x = gather_rows(*req.features, batch.rows);
      batch.labels.reserve(end - start);
      batch.weights.reserve(end - start);
      for (std::size_t p = start; p < end; ++p) {
        batch.labels.push_back(req.labels[req.rows[order[p]]]);
        batch.weights.push_back(weights[order[p]]);
      }

      LossAndGrad lg = loss_and_grad(model, batch, config.weight_decay, req.penalty);
      if (!std::isfinite(lg.loss)) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b) + " (cross-entropy " +
                                 std::to_string(lg.cross_entropy) + ", penalty " +
                                 std::to_string(lg.penalty) + ")");
      }
      epoch_loss += lg.loss * static_cast<double>(end - start);

      const std::vector<double> g = lg.grad.flatten();
      ++step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < P; ++i) {
        m1[i] = kAdamBeta1 * m1[i] + (1.0 - kAdamBeta1) * g[i];
        m2[i] = kAdamBeta2 * m2[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = m1[i] / c1;
        const double vhat = m2[i] / c2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
      }
      model.assign_flat(theta);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (log) {
      log->epoch_loss.push_back(epoch_loss);
      log->epoch_lr.push_back(lr);
    }

    if (epoch_loss < best_loss - config.plateau_tolerance) {
      best_loss = epoch_loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.plateau_patience) {
      lr *= config.lr_decay_factor;
      bad_epochs = 0;
    }

    if (req.on_epoch_end) {
      req.on_epoch_end(epoch, model, weights);
      if (weights.size() != req.rows.size()) throw std::runtime_error("train: epoch hook resized weights");
    }
  }
  return model;
}

MlpModel train(const Dataset& ds, std::span<const RowIndex> rows, LabelColumn column,
               const TrainConfig& config, const FeaturePenalty& penalty, TrainLog* log) {
  std::vector<int> labels;
  int k = 0;
  if (column == LabelColumn::kTarget) {
    labels = ds.targets();
    k = ds.num_classes();
  } else {
    labels.assign(ds.size(), -1);
    for (RowIndex r : rows) {
      if (!ds.group(r)) throw std::invalid_argument("train: group label missing at row " + std::to_string(r));
      labels[r] = *ds.group(r);
    }
    k = ds.num_groups();
  }
  TrainRequest req;
  req.features = &ds.features();
  req.rows = rows;
  req.labels = labels;
  req.num_outputs = k;
  req.penalty = penalty;
  return train(req, config, log);
}

nlohmann::json to_json(const MlpModel& m) {
  return {{"version", "mlp-v1"},
          {"input_dim", m.input_dim},
          {"hidden", m.hidden},
          {"outputs", m.outputs},
          {"activation", "relu"},
          {"w1", m.w1.data},
          {"b1", m.b1},
          {"w2", m.w2.data},
          {"b2", m.b2}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  if (j.at("version") != "mlp-v1") throw std::invalid_argument("model json: unsupported version");
  if (j.value("activation", "relu") != "relu") throw std::invalid_argument("model json: unsupported activation");
  MlpModel m;
  m.input_dim = j.at("input_dim").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.outputs = j.at("outputs").get<int>();
  if (m.input_dim < 1 || m.outputs < 1 || m.hidden < 0) throw std::invalid_argument("model json: bad shape");
  const auto h = static_cast<std::size_t>(m.hidden);
  const auto d = static_cast<std::size_t>(m.input_dim);
  const auto k = static_cast<std::size_t>(m.outputs);
  const auto f = static_cast<std::size_t>(m.feature_dim());
  if (h > 0) {
    m.w1 = Matrix(h, d);
    m.w1.data = j.at("w1").get<std::vector<double>>();
    m.b1 = j.at("b1").get<std::vector<double>>();
  }
  m.w2 = Matrix(k, f);
  m.w2.data = j.at("w2").get<std::vector<double>>();
  m.b2 = j.at("b2").get<std::vector<double>>();
  if (m.w1.data.size() != h * d || m.b1.size() != h || m.w2.data.size() != k * f || m.b2.size() != k)
    throw std::invalid_argument("model json: parameter array sizes do not match shape");
  return m;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"lr_decay_factor", c.lr_decay_factor},
          {"plateau_patience", c.plateau_patience},
          {"plateau_tolerance", c.plateau_tolerance},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"weight_decay", c.weight_decay},
          {"hidden", c.hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  base.epochs = j.value("epochs", base.epochs);
  base.lr = j.value("lr", base.lr);
  base.lr_decay_factor = j.value("lr_decay_factor", base.lr_decay_factor);
  base.plateau_patience = j.value("plateau_patience", base.plateau_patience);
  base.plateau_tolerance = j.value("plateau_tolerance", base.plateau_tolerance);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.seed = j.value("seed", base.seed);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.hidden = j.value("hidden", base.hidden);
  base.validate();
  return base;
}

}  // namespace fairpg
