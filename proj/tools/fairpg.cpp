// Command-line driver: gen, assign, train, sweep, tau-study, oracle, report.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fairpg/cgl.hpp"
#include "fairpg/dataset.hpp"
#include "fairpg/fairtrain.hpp"
#include "fairpg/harness.hpp"
#include "fairpg/metrics.hpp"
#include "fairpg/oracle.hpp"
#include "fairpg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fairpg::harness::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return fairpg::harness::config_from_json(read_json(path));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

fairpg::AssignmentPolicy parse_policy(const std::string& name, std::optional<double> tau) {
  json j{{"kind", name}};
  if (tau) j["tau"] = *tau;
  try {
    return fairpg::policy_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

fairpg::IndexSet all_rows(const fairpg::Dataset& ds) {
  fairpg::IndexSet rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

// gen ------------------------------------------------------------------------

struct GenArgs {
  std::string config, out = "data";
  fairpg::synth::SynthSpec spec;
  std::optional<double> aligned, ratio;
  std::uint64_t mask_seed = 0;
};

int run_gen(const GenArgs& a, CLI::App& cmd) {
  fairpg::synth::SynthSpec spec;
  if (!a.config.empty()) {
    const json j = read_json(a.config);
    spec = fairpg::synth::spec_from_json(j.contains("dataset") ? j.at("dataset").at("synthetic") : j);
  }
  auto set = [&](const char* flag, auto& field, const auto& value) {
    if (cmd.count(flag) > 0) field = value;
  };
  set("--d", spec.d, a.spec.d);
  set("--classes", spec.M, a.spec.M);
  set("--groups", spec.N, a.spec.N);
  set("--class-sep", spec.class_sep, a.spec.class_sep);
  set("--group-shift", spec.group_shift, a.spec.group_shift);
  set("--group-signal", spec.group_signal, a.spec.group_signal);
  set("--label-noise", spec.label_noise, a.spec.label_noise);
  set("--n-train", spec.n_train, a.spec.n_train);
  set("--n-test", spec.n_test, a.spec.n_test);
  set("--seed", spec.seed, a.spec.seed);
  if (a.aligned) spec.aligned_fraction = a.aligned;
  spec.validate();

  auto data = fairpg::synth::generate(spec);
  json sidecar = fairpg::synth::to_json(spec);
  if (a.ratio) {
    std::vector<std::string> warnings;
    data.train = fairpg::synth::mask_groups(data.train, *a.ratio, a.mask_seed, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    sidecar["mask"] = {{"ratio", *a.ratio}, {"seed", a.mask_seed}, {"scheme", "stratified by (group, class)"}};
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  fairpg::write_dataset_csv((out / "train.csv").string(), data.train);
  fairpg::write_dataset_csv((out / "test.csv").string(), data.test);
  write_json(out / "spec.json", sidecar);
  std::cout << "wrote " << (out / "train.csv").string() << ", " << (out / "test.csv").string() << ", "
            << (out / "spec.json").string() << '\n';
  return kOk;
}

// assign ---------------------------------------------------------------------

struct AssignArgs {
  std::string data, hidden, config, policy = "cgl", out = "assign";
  std::optional<double> tau;
  std::uint64_t seed = 0;
};

int run_assign(const AssignArgs& a) {
  const auto cfg = load_config(a.config);
  const fairpg::Dataset ds = fairpg::read_dataset_csv(a.data);
  const auto policy = parse_policy(a.policy, a.tau);
  std::vector<std::optional<int>> hidden;
  if (!a.hidden.empty()) hidden = fairpg::read_dataset_csv(a.hidden).groups();

  fairpg::CglOutput result;
  json diagnostics;
  if (std::holds_alternative<fairpg::policy::GroupLabeledOnly>(policy)) {
    diagnostics = nullptr;
  } else {
    result = fairpg::run_cgl_pipeline(ds, policy, cfg.group_model, a.seed, hidden);
    diagnostics = fairpg::to_json(result.diagnostics);
  }
  const fs::path out(a.out);
  fs::create_directories(out);
  {
    std::ofstream f(out / "assignment.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out / "assignment.csv").string());
    fairpg::write_assignment_csv(f, result.assignment);
  }
  write_json(out / "assignment.json", {{"policy", fairpg::to_json(policy)},
                                       {"seed", a.seed},
                                       {"tau", result.assignment.tau},
                                       {"n_assigned", result.assignment.rows.size()},
                                       {"diagnostics", diagnostics}});
  std::cout << "assigned " << result.assignment.rows.size() << " rows; wrote " << out.string() << '\n';
  return kOk;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string train, test, config, trainer = "scratch", policy = "group_labeled_only", out = "train";
  std::optional<double> strength, tau;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  const fairpg::Dataset train = fairpg::read_dataset_csv(a.train);
  const fairpg::Dataset test = fairpg::read_dataset_csv(a.test, train.num_classes(), train.num_groups());
  fairpg::TrainerSpec spec;
  try {
    json tj{{"kind", a.trainer}};
    if (a.strength) tj[a.trainer == "lbc" ? "alpha" : "lambda"] = *a.strength;
    spec = fairpg::trainer_from_json(tj);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto policy = parse_policy(a.policy, a.tau);

  fairpg::TrainConfig tc = cfg.train;
  tc.seed = fairpg::derive_seed(a.seed, "fit");
  if (auto* mfd = std::get_if<fairpg::trainer::Mfd>(&spec)) {
    fairpg::TrainConfig sc = cfg.train;
    sc.seed = fairpg::derive_seed(a.seed, "scratch");
    mfd->teacher = std::make_shared<const fairpg::MlpModel>(fairpg::train_scratch(train, all_rows(train), sc));
  }

  fairpg::AssignmentResult assigned;
  json diagnostics = nullptr;
  if (!std::holds_alternative<fairpg::trainer::Scratch>(spec) &&
      !std::holds_alternative<fairpg::policy::GroupLabeledOnly>(policy) &&
      !fairpg::partition_group_labeled(train).unlabeled.empty()) {
    auto out = fairpg::run_cgl_pipeline(train, policy, cfg.group_model, a.seed);
    assigned = std::move(out.assignment);
    diagnostics = fairpg::to_json(out.diagnostics);
  }
  const auto groups = fairpg::merged_groups(train, assigned);
  fairpg::IndexSet rows;
  if (std::holds_alternative<fairpg::trainer::Scratch>(spec)) {
    rows = all_rows(train);
  } else {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] >= 0) rows.push_back(i);
  }
  const fairpg::MlpModel model = fairpg::train_with(spec, train, fairpg::GroupedRows{rows, groups}, tc);
  const auto report = fairpg::evaluate_predictions(fairpg::predict_classes(model, test.features()), test, all_rows(test));

  const fs::path out(a.out);
  fs::create_directories(out);
  write_json(out / "model.json", fairpg::to_json(model));
  write_json(out / "report.json", {{"trainer", fairpg::to_json(spec)},
                                   {"policy", fairpg::to_json(policy)},
                                   {"seed", a.seed},
                                   {"n_fit_rows", rows.size()},
                                   {"diagnostics", diagnostics},
                                   {"report", fairpg::to_json(report)}});
  std::cout << "accuracy " << report.accuracy << "  delta_m " << report.delta_m << "  delta_a " << report.delta_a
            << '\n';
  return kOk;
}

// sweep / tau-study / report -------------------------------------------------

struct SweepArgs {
  std::string config, out;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ratios, taus;
  std::vector<std::string> formats;
  std::optional<double> floor;
};

fairpg::harness::ExperimentConfig sweep_config(const SweepArgs& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (!a.ratios.empty()) cfg.ratios = a.ratios;
  if (!a.taus.empty()) cfg.tau_grid = a.taus;
  if (!a.formats.empty()) cfg.formats = {a.formats.begin(), a.formats.end()};
  if (a.floor) cfg.accuracy_floor = a.floor;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

int run_sweep(const SweepArgs& a) {
  const auto cfg = sweep_config(a);
  const auto result = fairpg::harness::run_sweep(cfg);
  const auto files = fairpg::harness::emit_report(result, cfg.formats, cfg.output_dir);
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  if (result.failures() > 0) {
    for (const auto& c : result.cells)
      if (!c.ok) std::cerr << "cell failed (" << c.trainer << ", " << c.policy << ", ratio " << c.ratio << ", seed "
                           << c.seed << "): " << c.error << '\n';
    return kRuntimeError;
  }
  return kOk;
}

int run_tau(const SweepArgs& a) {
  const auto cfg = sweep_config(a);
  const auto result = fairpg::harness::run_tau_study(cfg, cfg.tau_grid);
  const auto files = fairpg::harness::emit_tau_report(result, cfg.formats, cfg.output_dir);
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  return kOk;
}

struct ReportArgs {
  std::string in, out = "report";
  std::vector<std::string> formats{"csv", "svg"};
};

int run_report(const ReportArgs& a) {
  fairpg::harness::SweepResult r;
  try {
    r = fairpg::harness::sweep_from_json(read_json(a.in));
  } catch (const json::exception& e) {
    throw ConfigError(a.in + ": " + e.what());
  }
  const auto files = fairpg::harness::emit_report(r, {a.formats.begin(), a.formats.end()}, a.out);
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  return kOk;
}

// oracle ---------------------------------------------------------------------

struct OracleArgs {
  fairpg::oracle::SuiteConfig suite;
  std::string out;
};

int run_oracle(const OracleArgs& a) {
  const auto rep = fairpg::oracle::run_suite(a.suite);
  json j = fairpg::oracle::to_json(rep);
  j["config"] = {{"count", a.suite.count},
                 {"seed", a.suite.seed},
                 {"max_nx", a.suite.max_nx},
                 {"max_na", a.suite.max_na},
                 {"max_ny", a.suite.max_ny},
                 {"invariance_tolerance", a.suite.invariance_tolerance}};
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(a.out, j);
    std::cout << (rep.passed() ? "PASS" : "FAIL") << ": " << rep.worlds << " worlds, invariance max diff "
              << rep.invariance_max_diff << ", influence violations " << rep.influence_violations << " of " << rep.influence_checked
              << '\n';
  }
  return rep.passed() ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness training with partially group-labeled data"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic biased dataset");
  g->add_option("--config", gen.config, "JSON with a synthetic spec (or an experiment config)");
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();
  g->add_option("--d", gen.spec.d, "Feature dimension");
  g->add_option("--classes", gen.spec.M, "Number of classes");
  g->add_option("--groups", gen.spec.N, "Number of groups");
  g->add_option("--class-sep", gen.spec.class_sep, "Distance between class means");
  g->add_option("--group-shift", gen.spec.group_shift, "Group offset along the class axis");
  g->add_option("--group-signal", gen.spec.group_signal, "Group offset along the group axis");
  g->add_option("--aligned-fraction", gen.aligned, "P(A = y mod N | Y = y) in training data");
  g->add_option("--label-noise", gen.spec.label_noise, "Training target flip probability");
  g->add_option("--n-train", gen.spec.n_train, "Training rows");
  g->add_option("--n-test", gen.spec.n_test, "Test rows (balanced over cells)");
  g->add_option("--seed", gen.spec.seed, "Seed");
  g->add_option("--ratio", gen.ratio, "Keep group labels on this fraction of training rows");
  g->add_option("--mask-seed", gen.mask_seed, "Seed for group-label masking");

  AssignArgs asg;
  auto* as = app.add_subcommand("assign", "Assign pseudo group labels to group-unlabeled rows");
  as->add_option("--data", asg.data, "Dataset CSV (empty group cells are unlabeled)")->required();
  as->add_option("--policy", asg.policy, "group_labeled_only|random_label|pseudo_label|cgl|oracle_random_wrong")
      ->capture_default_str();
  as->add_option("--tau", asg.tau, "Fixed confidence threshold (cgl); searched when omitted");
  as->add_option("--hidden", asg.hidden, "Fully labeled CSV with ground-truth groups (oracle policy)");
  as->add_option("--config", asg.config, "Experiment config supplying the group-model settings");
  as->add_option("--seed", asg.seed, "Seed");
  as->add_option("--out", asg.out, "Output directory")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model and evaluate it");
  t->add_option("--train", tr.train, "Training CSV")->required();
  t->add_option("--test", tr.test, "Test CSV (fully group-labeled)")->required();
  t->add_option("--trainer", tr.trainer, "scratch|lbc|fairhsic|mfd")->capture_default_str();
  t->add_option("--strength", tr.strength, "alpha for lbc, lambda for fairhsic and mfd");
  t->add_option("--policy", tr.policy, "Group assignment policy for unlabeled rows")->capture_default_str();
  t->add_option("--tau", tr.tau, "Fixed confidence threshold (cgl)");
  t->add_option("--config", tr.config, "Experiment config supplying training settings");
  t->add_option("--seed", tr.seed, "Seed");
  t->add_option("--out", tr.out, "Output directory")->capture_default_str();

  SweepArgs sw;
  auto add_sweep_flags = [&](CLI::App* c) {
    c->add_option("--config", sw.config, "Experiment config JSON")->required();
    c->add_option("--out", sw.out, "Override output_dir");
    c->add_option("--seeds", sw.seeds, "Override seeds")->delimiter(',');
    c->add_option("--ratios", sw.ratios, "Override ratios")->delimiter(',');
    c->add_option("--formats", sw.formats, "Report formats besides JSON: csv, svg")
        ->delimiter(',')
        ->check(CLI::IsMember({"csv", "svg", "json"}));
    c->add_option("--accuracy-floor", sw.floor, "Override the model-selection accuracy floor");
  };
  auto* s = app.add_subcommand("sweep", "Run the ratio x policy x trainer sweep");
  add_sweep_flags(s);
  auto* ts = app.add_subcommand("tau-study", "Sweep the confidence threshold");
  add_sweep_flags(ts);
  ts->add_option("--taus", sw.taus, "Threshold grid (include 0 and 1 for the endpoints)")->delimiter(',');

  OracleArgs orc;
  auto* o = app.add_subcommand("oracle", "Verify the exact-distribution properties on random worlds");
  o->add_option("--count", orc.suite.count, "Number of worlds")->capture_default_str();
  o->add_option("--seed", orc.suite.seed, "Seed")->capture_default_str();
  o->add_option("--max-nx", orc.suite.max_nx, "Largest |X|")->capture_default_str();
  o->add_option("--max-na", orc.suite.max_na, "Largest number of groups")->capture_default_str();
  o->add_option("--max-ny", orc.suite.max_ny, "Largest number of classes")->capture_default_str();
  o->add_option("--out", orc.out, "Write the JSON report here instead of stdout");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Render tables and plots from a sweep.json");
  r->add_option("--in", rp.in, "sweep.json")->required();
  r->add_option("--out", rp.out, "Output directory")->capture_default_str();
  r->add_option("--formats", rp.formats, "csv, svg")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "svg", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*g) return run_gen(gen, *g);
    if (*as) return run_assign(asg);
    if (*t) return run_train(tr);
    if (*s) return run_sweep(sw);
    if (*ts) return run_tau(sw);
    if (*o) return run_oracle(orc);
    if (*r) return run_report(rp);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}
