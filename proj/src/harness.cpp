#include "fairpg/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <stdexcept>

#include <omp.h>

namespace fairpg::harness {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string number_key(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

TrainerSpec with_strength(TrainerSpec spec, double v) {
  std::visit(overloaded{[](trainer::Scratch&) {}, [&](trainer::Lbc& s) { s.alpha = v; },
                        [&](trainer::FairHsic& s) { s.lambda = v; }, [&](trainer::Mfd& s) { s.lambda = v; }},
             spec);
  return spec;
}

bool is_scratch(const TrainerSpec& s) { return std::holds_alternative<trainer::Scratch>(s); }
bool is_mfd(const TrainerSpec& s) { return std::holds_alternative<trainer::Mfd>(s); }

FairnessReport evaluate_model(const MlpModel& m, const Dataset& test) {
  IndexSet all(test.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate_predictions(predict_classes(m, test.features()), test, all);
}

TrainConfig seeded(TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

std::uint64_t fit_seed(std::uint64_t seed, const TrainerSpec& spec, double strength) {
  return derive_seed(seed, "fit/" + trainer_name(spec) + "/" + number_key(strength));
}

std::uint64_t ratio_seed(std::uint64_t seed, double ratio, std::string_view what) {
  return derive_seed(seed, std::string(what) + "/" + number_key(ratio));
}

// Rows a fairness trainer sees and the group column they carry.
struct Assigned {
  IndexSet rows;
  std::vector<int> groups;
  nlohmann::json diagnostics;
  double randomized_fraction = 0.0;
};

Assigned assign_groups(const Dataset& masked, const std::optional<GroupModelStage>& stage,
                       const AssignmentPolicy& policy, std::span<const std::optional<int>> hidden) {
  Assigned out;
  AssignmentResult result;
  if (stage) {
    CglOutput o = assign_from_stage(*stage, policy, masked, hidden);
    out.diagnostics = to_json(o.diagnostics);
    if (o.diagnostics.n_unlabeled > 0)
      out.randomized_fraction =
          static_cast<double>(o.diagnostics.n_randomized) / static_cast<double>(o.diagnostics.n_unlabeled);
    result = std::move(o.assignment);
  }
  out.groups = merged_groups(masked, result);
  for (std::size_t i = 0; i < out.groups.size(); ++i) {
    if (out.groups[i] >= 0) out.rows.push_back(i);
  }
  return out;
}

std::vector<double> strengths_of(const TrainerGrid& g) {
  if (is_scratch(g.spec)) return {0.0};
  return g.strengths.empty() ? default_grid(g.spec) : g.strengths;
}

template <class F>
void parallel_tasks(std::size_t n, F&& body) {
  const int workers = worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < static_cast<long>(n); ++i) body(static_cast<std::size_t>(i));
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("FAIRPG_WORKERS")) {
    int n = 0;
    auto [ptr, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), n);
    if (ec == std::errc() && n > 0) return n;
  }
  return std::max(1, omp_get_max_threads());
}

double ExperimentConfig::effective_floor() const {
  if (accuracy_floor) return *accuracy_floor;
  if (const auto* csv = std::get_if<CsvSource>(&source); csv && csv->name == "compas") return 0.90;
  return 0.95;
}

void ExperimentConfig::validate() const {
  if (ratios.empty()) throw std::invalid_argument("config: ratios must be non-empty");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("config: ratios must lie in (0, 1]");
  }
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  if (policies.empty()) throw std::invalid_argument("config: policies must be non-empty");
  if (trainers.empty()) throw std::invalid_argument("config: trainers must be non-empty");
  for (const auto& t : trainers) {
    fairpg::validate(t.spec);
    for (double s : t.strengths) {
      if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("config: trainer strengths must be finite and >= 0");
    }
  }
  const double f = effective_floor();
  if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("config: accuracy_floor must be in [0, 1]");
  if (!(group_train_fraction > 0.0 && group_train_fraction < 1.0))
    throw std::invalid_argument("config: group_train_fraction must be in (0, 1)");
  for (double t : tau_grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("config: tau_grid values must lie in [0, 1]");
  }
  for (const auto& fmt : formats) {
    if (fmt != "csv" && fmt != "svg" && fmt != "json") throw std::invalid_argument("config: unknown format " + fmt);
  }
  train.validate();
  group_model.validate();
  if (const auto* s = std::get_if<SyntheticSource>(&source)) s->spec.validate();
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("synthetic")) {
      c.source = SyntheticSource{synth::spec_from_json(d.at("synthetic"))};
    } else if (d.contains("csv")) {
      const auto& s = d.at("csv");
      CsvSource src;
      src.train_path = s.at("train").get<std::string>();
      src.test_path = s.at("test").get<std::string>();
      src.name = s.value("name", std::string());
      src.num_classes = s.value("num_classes", 0);
      src.num_groups = s.value("num_groups", 0);
      c.source = src;
    } else {
      throw std::invalid_argument("config: dataset needs a 'synthetic' or 'csv' entry");
    }
  }
  if (j.contains("ratios")) c.ratios = j.at("ratios").get<std::vector<double>>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("policies")) {
    for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_json(p));
  }
  if (j.contains("trainers")) {
    for (const auto& t : j.at("trainers")) {
      TrainerGrid g{trainer_from_json(t), {}};
      if (t.contains("grid")) g.strengths = t.at("grid").get<std::vector<double>>();
      c.trainers.push_back(std::move(g));
    }
  }
  if (j.contains("accuracy_floor") && !j.at("accuracy_floor").is_null())
    c.accuracy_floor = j.at("accuracy_floor").get<double>();
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("group_model")) c.group_model = train_config_from_json(j.at("group_model"), c.group_model);
  c.group_train_fraction = j.value("group_train_fraction", c.group_train_fraction);
  if (j.contains("tau_grid")) c.tau_grid = j.at("tau_grid").get<std::vector<double>>();
  if (j.contains("formats")) {
    c.formats.clear();
    for (const auto& f : j.at("formats")) c.formats.insert(f.get<std::string>());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["dataset"] = std::visit(
      overloaded{[](const SyntheticSource& s) { return nlohmann::json{{"synthetic", synth::to_json(s.spec)}}; },
                 [](const CsvSource& s) {
                   return nlohmann::json{{"csv",
                                          {{"train", s.train_path},
                                           {"test", s.test_path},
                                           {"name", s.name},
                                           {"num_classes", s.num_classes},
                                           {"num_groups", s.num_groups}}}};
                 }},
      c.source);
  j["ratios"] = c.ratios;
  j["seeds"] = c.seeds;
  j["policies"] = nlohmann::json::array();
  for (const auto& p : c.policies) j["policies"].push_back(fairpg::to_json(p));
  j["trainers"] = nlohmann::json::array();
  for (const auto& t : c.trainers) {
    auto tj = fairpg::to_json(t.spec);
    tj["grid"] = strengths_of(t);
    j["trainers"].push_back(tj);
  }
  j["accuracy_floor"] = c.effective_floor();
  j["output_dir"] = c.output_dir;
  j["train"] = to_json(c.train);
  j["group_model"] = to_json(c.group_model);
  j["group_train_fraction"] = c.group_train_fraction;
  j["tau_grid"] = c.tau_grid;
  j["formats"] = c.formats;
  return j;
}

LoadedData load_data(const DataSource& source, std::uint64_t seed) {
  return std::visit(overloaded{[&](const SyntheticSource& s) {
                                 synth::SynthSpec spec = s.spec;
                                 spec.seed = derive_seed(s.spec.seed, seed);
                                 auto g = synth::generate(spec);
                                 return LoadedData{std::move(g.train), std::move(g.test)};
                               },
                               [&](const CsvSource& s) {
                                 Dataset train = read_dataset_csv(s.train_path, s.num_classes, s.num_groups);
                                 Dataset test = read_dataset_csv(s.test_path, train.num_classes(), train.num_groups());
                                 if (test.dim() != train.dim())
                                   throw std::invalid_argument("csv: train and test feature counts differ");
                                 return LoadedData{std::move(train), std::move(test)};
                               }},
                    source);
}

std::pair<double, double> mean_and_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; }));
}

const Aggregate* SweepResult::find(double ratio, const std::string& policy, const std::string& trainer) const {
  for (const auto& a : aggregates) {
    if (a.ratio == ratio && a.policy == policy && a.trainer == trainer) return &a;
  }
  return nullptr;
}

namespace {

struct SeedState {
  LoadedData data;
  std::shared_ptr<const MlpModel> scratch;
  FairnessReport scratch_report;
  std::string error;
};

struct RatioState {
  Dataset masked;
  std::optional<GroupModelStage> stage;
  std::string error;
};

struct PolicyState {
  Assigned assigned;
  std::string error;
};

void prepare_seeds(const ExperimentConfig& config, std::vector<SeedState>& seeds, bool need_scratch) {
  parallel_tasks(seeds.size(), [&](std::size_t i) {
    const std::uint64_t s = config.seeds[i];
    try {
      seeds[i].data = load_data(config.source, s);
      if (need_scratch) {
        IndexSet all(seeds[i].data.train.size());
        for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
        seeds[i].scratch = std::make_shared<const MlpModel>(
            train_scratch(seeds[i].data.train, all, seeded(config.train, derive_seed(s, "scratch"))));
        seeds[i].scratch_report = evaluate_model(*seeds[i].scratch, seeds[i].data.test);
      }
    } catch (const std::exception& e) {
      seeds[i].error = e.what();
    }
  });
}

void prepare_ratio(const ExperimentConfig& config, const SeedState& seed_state, std::uint64_t seed, double ratio,
                   RatioState& out) {
  if (!seed_state.error.empty()) {
    out.error = seed_state.error;
    return;
  }
  try {
    out.masked = synth::mask_groups(seed_state.data.train, ratio, ratio_seed(seed, ratio, "mask"));
    if (!partition_group_labeled(out.masked).unlabeled.empty())
      out.stage = prepare_group_model(out.masked, config.group_model, ratio_seed(seed, ratio, "cgl"),
                                      config.group_train_fraction);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config) {
  config.validate();
  const std::size_t S = config.seeds.size(), R = config.ratios.size(), P = config.policies.size(),
                    T = config.trainers.size();

  std::vector<SeedState> seeds(S);
  prepare_seeds(config, seeds, true);

  std::vector<RatioState> ratios(S * R);
  parallel_tasks(S * R, [&](std::size_t k) {
    const std::size_t i = k / R, j = k % R;
    prepare_ratio(config, seeds[i], config.seeds[i], config.ratios[j], ratios[k]);
  });

  std::vector<PolicyState> policies(S * R * P);
  parallel_tasks(policies.size(), [&](std::size_t k) {
    const std::size_t ij = k / P, p = k % P;
    const RatioState& rs = ratios[ij];
    if (!rs.error.empty()) {
      policies[k].error = rs.error;
      return;
    }
    try {
      policies[k].assigned = assign_groups(rs.masked, rs.stage, config.policies[p], seeds[ij / R].data.train.groups());
    } catch (const std::exception& e) {
      policies[k].error = e.what();
    }
  });

  // One task per (seed, ratio, policy, trainer, strength).
  struct Task {
    std::size_t policy_state, seed, trainer, strength_index;
    double strength;
  };
  std::vector<Task> tasks;
  std::vector<std::vector<std::size_t>> cell_tasks(S * R * P * T);
  for (std::size_t k = 0; k < S * R * P; ++k) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto grid = strengths_of(config.trainers[t]);
      for (std::size_t v = 0; v < grid.size(); ++v) {
        cell_tasks[k * T + t].push_back(tasks.size());
        tasks.push_back({k, k / (R * P), t, v, grid[v]});
      }
    }
  }
  struct TaskResult {
    FairnessReport report;
    std::string error;
  };
  std::vector<TaskResult> task_results(tasks.size());
  parallel_tasks(tasks.size(), [&](std::size_t n) {
    const Task& task = tasks[n];
    const PolicyState& ps = policies[task.policy_state];
    const SeedState& ss = seeds[task.seed];
    TaskResult& out = task_results[n];
    if (!ps.error.empty()) {
      out.error = ps.error;
      return;
    }
    const TrainerSpec& base = config.trainers[task.trainer].spec;
    if (is_scratch(base)) {
      out.report = ss.scratch_report;
      return;
    }
    try {
      TrainerSpec spec = with_strength(base, task.strength);
      if (auto* mfd = std::get_if<trainer::Mfd>(&spec)) mfd->teacher = ss.scratch;
      const Dataset& masked = ratios[task.policy_state / P].masked;
      GroupedRows data{ps.assigned.rows, ps.assigned.groups};
      const MlpModel m = train_with(spec, masked, data,
                                    seeded(config.train, fit_seed(config.seeds[task.seed], base, task.strength)));
      out.report = evaluate_model(m, ss.data.test);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  SweepResult res;
  res.name = config.name;
  res.ratios = config.ratios;
  res.seeds = config.seeds;
  res.accuracy_floor = config.effective_floor();
  for (std::size_t i = 0; i < S; ++i) {
    if (seeds[i].error.empty()) res.scratch.emplace_back(config.seeds[i], seeds[i].scratch_report);
  }

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t j = 0; j < R; ++j) {
        std::vector<double> acc, dm, da;
        for (std::size_t i = 0; i < S; ++i) {
          const std::size_t k = (i * R + j) * P + p;
          CellResult cell;
          cell.ratio = config.ratios[j];
          cell.policy = policy_name(config.policies[p]);
          cell.trainer = trainer_name(config.trainers[t].spec);
          cell.seed = config.seeds[i];
          cell.diagnostics = policies[k].assigned.diagnostics;
          std::vector<Candidate> candidates;
          for (std::size_t n : cell_tasks[k * T + t]) {
            if (!task_results[n].error.empty()) {
              cell.ok = false;
              cell.error = task_results[n].error;
              break;
            }
            candidates.push_back({tasks[n].strength, task_results[n].report});
            const auto& r = task_results[n].report;
            cell.candidates.push_back({tasks[n].strength, r.accuracy, r.delta_m, r.delta_a});
          }
          if (cell.ok) {
            const std::size_t best =
                select_model(candidates, seeds[i].scratch_report.accuracy, res.accuracy_floor);
            cell.report = candidates[best].report;
            cell.selected_strength = candidates[best].strength;
            acc.push_back(cell.report.accuracy);
            dm.push_back(cell.report.delta_m);
            da.push_back(cell.report.delta_a);
          }
          res.cells.push_back(std::move(cell));
        }
        Aggregate a;
        a.ratio = config.ratios[j];
        a.policy = policy_name(config.policies[p]);
        a.trainer = trainer_name(config.trainers[t].spec);
        a.n = static_cast<long>(acc.size());
        std::tie(a.accuracy_mean, a.accuracy_std) = mean_and_std(acc);
        std::tie(a.delta_m_mean, a.delta_m_std) = mean_and_std(dm);
        std::tie(a.delta_a_mean, a.delta_a_std) = mean_and_std(da);
        res.aggregates.push_back(a);
      }
    }
  }
  return res;
}

TauStudyResult run_tau_study(const ExperimentConfig& config, std::vector<double> taus) {
  config.validate();
  if (taus.empty()) throw std::invalid_argument("tau study: grid must be non-empty");
  for (double t : taus) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("tau study: tau values must lie in [0, 1]");
  }
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  const double ratio = config.ratios.front();
  const TrainerGrid& grid = config.trainers.front();
  const double strength = strengths_of(grid).front();
  TrainerSpec spec = with_strength(grid.spec, strength);
  const std::size_t S = config.seeds.size();

  std::vector<SeedState> seeds(S);
  prepare_seeds(config, seeds, is_mfd(spec));
  std::vector<RatioState> ratios(S);
  parallel_tasks(S, [&](std::size_t i) { prepare_ratio(config, seeds[i], config.seeds[i], ratio, ratios[i]); });

  // Columns: taus..., pseudo label, random label.
  std::vector<AssignmentPolicy> policies;
  for (double t : taus) policies.push_back(policy::Cgl{t});
  policies.push_back(policy::PseudoLabel{});
  policies.push_back(policy::RandomLabel{});
  const std::size_t C = policies.size();

  struct Out {
    double accuracy = 0.0, delta_m = 0.0, randomized = 0.0;
    std::string error;
  };
  std::vector<Out> outs(S * C);
  parallel_tasks(outs.size(), [&](std::size_t n) {
    const std::size_t i = n / C, c = n % C;
    const RatioState& rs = ratios[i];
    Out& o = outs[n];
    if (!rs.error.empty()) {
      o.error = rs.error;
      return;
    }
    try {
      Assigned a = assign_groups(rs.masked, rs.stage, policies[c], seeds[i].data.train.groups());
      TrainerSpec s = spec;
      if (auto* mfd = std::get_if<trainer::Mfd>(&s)) mfd->teacher = seeds[i].scratch;
      const MlpModel m = train_with(s, rs.masked, GroupedRows{a.rows, a.groups},
                                    seeded(config.train, fit_seed(config.seeds[i], grid.spec, strength)));
      const FairnessReport r = evaluate_model(m, seeds[i].data.test);
      o.accuracy = r.accuracy;
      o.delta_m = r.delta_m;
      o.randomized = a.randomized_fraction;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  });

  for (const auto& o : outs) {
    if (!o.error.empty()) throw std::runtime_error("tau study: " + o.error);
  }
  auto column = [&](std::size_t c, double tau) {
    TauPoint pt;
    pt.tau = tau;
    for (std::size_t i = 0; i < S; ++i) {
      pt.accuracy.push_back(outs[i * C + c].accuracy);
      pt.delta_m.push_back(outs[i * C + c].delta_m);
      pt.randomized_fraction.push_back(outs[i * C + c].randomized);
    }
    std::tie(pt.accuracy_mean, pt.accuracy_std) = mean_and_std(pt.accuracy);
    std::tie(pt.delta_m_mean, pt.delta_m_std) = mean_and_std(pt.delta_m);
    return pt;
  };

  TauStudyResult res;
  res.ratio = ratio;
  res.trainer = trainer_name(spec);
  res.strength = strength;
  res.seeds = config.seeds;
  for (std::size_t c = 0; c < taus.size(); ++c) res.points.push_back(column(c, taus[c]));
  res.pseudo_label = column(taus.size(), 0.0);
  res.random_label = column(taus.size() + 1, 1.0);
  return res;
}

namespace {

nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"ratio", a.ratio},
          {"policy", a.policy},
          {"trainer", a.trainer},
          {"n", a.n},
          {"accuracy_mean", a.accuracy_mean},
          {"accuracy_std", a.accuracy_std},
          {"delta_m_mean", a.delta_m_mean},
          {"delta_m_std", a.delta_m_std},
          {"delta_a_mean", a.delta_a_mean},
          {"delta_a_std", a.delta_a_std}};
}

nlohmann::json tau_point_json(const TauPoint& p) {
  return {{"tau", p.tau},
          {"accuracy_mean", p.accuracy_mean},
          {"accuracy_std", p.accuracy_std},
          {"delta_m_mean", p.delta_m_mean},
          {"delta_m_std", p.delta_m_std},
          {"accuracy", p.accuracy},
          {"delta_m", p.delta_m},
          {"randomized_fraction", p.randomized_fraction}};
}

}  // namespace

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["ratios"] = r.ratios;
  j["seeds"] = r.seeds;
  j["accuracy_floor"] = r.accuracy_floor;
  j["scratch"] = nlohmann::json::array();
  for (const auto& [seed, rep] : r.scratch) j["scratch"].push_back({{"seed", seed}, {"report", to_json(rep)}});
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cj{{"ratio", c.ratio},   {"policy", c.policy}, {"trainer", c.trainer},
                      {"seed", c.seed},     {"ok", c.ok},         {"error", c.error},
                      {"selected_strength", c.selected_strength}, {"diagnostics", c.diagnostics}};
    cj["report"] = c.ok ? to_json(c.report) : nlohmann::json();
    cj["candidates"] = nlohmann::json::array();
    for (const auto& k : c.candidates)
      cj["candidates"].push_back(
          {{"strength", k.strength}, {"accuracy", k.accuracy}, {"delta_m", k.delta_m}, {"delta_a", k.delta_a}});
    j["cells"].push_back(std::move(cj));
  }
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : r.aggregates) j["aggregates"].push_back(aggregate_json(a));
  return j;
}

SweepResult sweep_from_json(const nlohmann::json& j) {
  SweepResult r;
  r.name = j.at("name").get<std::string>();
  r.ratios = j.at("ratios").get<std::vector<double>>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.accuracy_floor = j.at("accuracy_floor").get<double>();
  for (const auto& s : j.at("scratch"))
    r.scratch.emplace_back(s.at("seed").get<std::uint64_t>(), fairness_report_from_json(s.at("report")));
  for (const auto& cj : j.at("cells")) {
    CellResult c;
    c.ratio = cj.at("ratio").get<double>();
    c.policy = cj.at("policy").get<std::string>();
    c.trainer = cj.at("trainer").get<std::string>();
    c.seed = cj.at("seed").get<std::uint64_t>();
    c.ok = cj.at("ok").get<bool>();
    c.error = cj.at("error").get<std::string>();
    c.selected_strength = cj.at("selected_strength").get<double>();
    c.diagnostics = cj.at("diagnostics");
    if (c.ok) c.report = fairness_report_from_json(cj.at("report"));
    for (const auto& k : cj.at("candidates"))
      c.candidates.push_back({k.at("strength").get<double>(), k.at("accuracy").get<double>(),
                              k.at("delta_m").get<double>(), k.at("delta_a").get<double>()});
    r.cells.push_back(std::move(c));
  }
  for (const auto& aj : j.at("aggregates")) {
    Aggregate a;
    a.ratio = aj.at("ratio").get<double>();
    a.policy = aj.at("policy").get<std::string>();
    a.trainer = aj.at("trainer").get<std::string>();
    a.n = aj.at("n").get<long>();
    a.accuracy_mean = aj.at("accuracy_mean").get<double>();
    a.accuracy_std = aj.at("accuracy_std").get<double>();
    a.delta_m_mean = aj.at("delta_m_mean").get<double>();
    a.delta_m_std = aj.at("delta_m_std").get<double>();
    a.delta_a_mean = aj.at("delta_a_mean").get<double>();
    a.delta_a_std = aj.at("delta_a_std").get<double>();
    r.aggregates.push_back(a);
  }
  return r;
}

nlohmann::json to_json(const TauStudyResult& r) {
  nlohmann::json j{{"ratio", r.ratio}, {"trainer", r.trainer}, {"strength", r.strength}, {"seeds", r.seeds}};
  j["points"] = nlohmann::json::array();
  for (const auto& p : r.points) j["points"].push_back(tau_point_json(p));
  j["pseudo_label"] = tau_point_json(r.pseudo_label);
  j["random_label"] = tau_point_json(r.random_label);
  j["convention"] = "cgl keeps argmax g(x) when max g(x) > tau; tau=0 is pseudo-labeling, tau=1 randomizes every row";
  return j;
}

}  // namespace fairpg::harness
