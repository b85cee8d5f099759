// Acceptance suite: one PASS/FAIL/SKIP line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fairpg/cgl.hpp"
#include "fairpg/harness.hpp"
#include "fairpg/independence.hpp"
#include "fairpg/metrics.hpp"
#include "fairpg/oracle.hpp"
#include "fairpg/synth.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace fairpg;

namespace {

// Tolerances and budgets.
constexpr double kInvarianceTolerance = 1e-10;
constexpr double kOracleTolerance = 1e-12;
constexpr double kGradientTolerance = 1e-4;
constexpr double kExactCheckBudgetSeconds = 30.0;
constexpr double kBenchmarkBudgetSeconds = 600.0;
constexpr double kAccuracyMargin = 0.02;
constexpr int kWorlds = 500;
constexpr int kBinaryWorlds = 200;
constexpr int kTables = 500;
constexpr int kGradientConfigs = 20;
constexpr int kValidationSets = 100;

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Outcome::kPass : Outcome::kFail, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome exact_invariance() {
  const auto t0 = std::chrono::steady_clock::now();
  oracle::SuiteConfig cfg;
  cfg.count = kWorlds;
  cfg.seed = 1;
  cfg.invariance_tolerance = kInvarianceTolerance;
  const auto rep = oracle::run_suite(cfg);
  const double t = seconds_since(t0);
  return verdict(rep.invariance_failures == 0 && rep.invariance_max_diff < kInvarianceTolerance && t < kExactCheckBudgetSeconds,
                 fmt("%d worlds, max |diff| %.3g, %ld failures, %.1fs", rep.worlds, rep.invariance_max_diff,
                     rep.invariance_failures, t));
}

Outcome influence_inequality(std::string& info) {
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng r(2);
  long checked = 0, violations = 0, literal = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kBinaryWorlds; ++i) {
    auto shape = oracle::random_shape(r, 10, 2, 3);
    shape.na = 2;
    const auto w = oracle::random_world(r, shape);
    const auto rep = oracle::verify_influence_inequality(w, oracle::InfluenceOrientation::kHardenedGroup);
    checked += rep.checked;
    violations += static_cast<long>(rep.violations.size());
    min_margin = std::min(min_margin, rep.min_margin);
    literal += static_cast<long>(oracle::verify_influence_inequality(w, oracle::InfluenceOrientation::kGroupOne).violations.size());
  }
  const double t = seconds_since(t0);
  info = fmt("group-one threshold on both sides of the band: %ld of %ld points violate", literal, checked);
  return verdict(violations == 0 && checked > 0 && t < kExactCheckBudgetSeconds,
                 fmt("%d worlds, %ld points, %ld violations, min margin %.3g, %.1fs", kBinaryWorlds, checked,
                     violations, min_margin, t));
}

Outcome metric_oracle() {
  SeededRng r(3);
  double worst = 0;
  for (int i = 0; i < kTables; ++i) {
    const int N = 2 + static_cast<int>(r.uniform_index(4)), M = 2 + static_cast<int>(r.uniform_index(4));
    const std::size_t n = 20 + r.uniform_index(200);
    std::vector<int> preds(n), targets(n);
    std::vector<std::optional<int>> groups(n);
    for (std::size_t k = 0; k < n; ++k) {
      targets[k] = static_cast<int>(r.uniform_index(M));
      preds[k] = static_cast<int>(r.uniform_index(M));
      groups[k] = static_cast<int>(r.uniform_index(N));
    }
    Matrix x(n, 1);
    const Dataset ds(x, targets, groups, M, N);
    const auto rows = fairpg::testing::iota_rows(n);
    FairnessReport rep;
    try {
      rep = evaluate_predictions(preds, ds, rows);
    } catch (const std::invalid_argument&) {
      continue;
    }
    // Triple loop over (class, group, group) with accuracies recounted from rows.
    auto acc = [&](int a, int y, bool& present) {
      long hit = 0, tot = 0;
      for (std::size_t k = 0; k < n; ++k)
        if (targets[k] == y && *groups[k] == a) {
          ++tot;
          hit += preds[k] == y;
        }
      present = tot > 0;
      return tot ? static_cast<double>(hit) / static_cast<double>(tot) : 0.0;
    };
    double dm = 0, da = 0;
    for (int y = 0; y < M; ++y) {
      double gap = 0;
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
          bool pa = false, pb = false;
          const double va = acc(a, y, pa), vb = acc(b, y, pb);
          if (pa && pb) gap = std::max(gap, std::abs(va - vb));
        }
      dm = std::max(dm, gap);
      da += gap / M;
    }
    worst = std::max({worst, std::abs(dm - rep.delta_m), std::abs(da - rep.delta_a)});
  }
  return verdict(worst < kOracleTolerance, fmt("%d tables, max |diff| %.3g", kTables, worst));
}

Outcome gradients() {
  SeededRng r(4);
  double worst[3] = {0, 0, 0};
  for (int kind = 0; kind < 3; ++kind) {
    for (int t = 0; t < kGradientConfigs; ++t) {
      const int d = 1 + static_cast<int>(r.uniform_index(5)), h = 1 + static_cast<int>(r.uniform_index(8)),
                k = 2 + static_cast<int>(r.uniform_index(3));
      MlpModel m = init_model(d, h, k, r.next_u64());
      for (double& v : m.b1) v = 0.3 * r.normal();
      for (double& v : m.b2) v = 0.3 * r.normal();
      const std::size_t n = 6 + r.uniform_index(10);
      Batch b;
      b.x = fairpg::testing::random_matrix(r, n, static_cast<std::size_t>(d));
      std::vector<int> groups(n);
      for (std::size_t i = 0; i < n; ++i) {
        b.labels.push_back(static_cast<int>(r.uniform_index(k)));
        b.weights.push_back(0.5 + r.uniform());
        b.rows.push_back(i);
        groups[i] = static_cast<int>(r.uniform_index(2));
      }
      FeaturePenalty pen;
      const double lambda = 1.0 + 9.0 * r.uniform();
      if (kind == 1) {
        pen = [groups, lambda](const Batch&, const Matrix& f, Matrix& grad) {
          Matrix local(f.rows, f.cols);
          const double v = hsic_with_grad(f, groups, local);
          for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += lambda * local.data[i];
          return lambda * v;
        };
      } else if (kind == 2) {
        const Matrix target = fairpg::testing::random_matrix(r, 5, static_cast<std::size_t>(h));
        const double sigma = 0.5 + r.uniform();
        pen = [target, sigma, lambda](const Batch&, const Matrix& f, Matrix& grad) {
          Matrix local(f.rows, f.cols);
          const double v = mmd2_with_grad(f, target, sigma, local);
          for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += lambda * local.data[i];
          return lambda * v;
        };
      }
      const auto lg = loss_and_grad(m, b, 0.0, pen);
      const double err = fairpg::testing::max_relative_error(
          [&](const std::vector<double>& p) {
            MlpModel q = m;
            q.assign_flat(p);
            return loss_and_grad(q, b, 0.0, pen).loss;
          },
          m.flatten(), lg.grad.flatten());
      worst[kind] = std::max(worst[kind], err);
    }
  }
  const bool ok = worst[0] < kGradientTolerance && worst[1] < kGradientTolerance && worst[2] < kGradientTolerance;
  return verdict(ok, fmt("%d configurations each, max relative error CE %.2g, CE+HSIC %.2g, CE+MMD %.2g",
                         kGradientConfigs, worst[0], worst[1], worst[2]));
}

Outcome threshold_extremes() {
  long compared = 0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    synth::SynthSpec s;
    s.group_shift = 4.0;
    s.n_train = 600;
    s.n_test = 4;
    s.seed = seed;
    const Dataset masked = synth::mask_groups(synth::generate(s).train, 0.2, seed);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.hidden = 16;
    const auto stage = prepare_group_model(masked, cfg, seed);
    const auto pl = assign_from_stage(stage, policy::PseudoLabel{}, masked).assignment;
    const auto rl = assign_from_stage(stage, policy::RandomLabel{}, masked).assignment;
    const auto c0 = assign_from_stage(stage, policy::Cgl{0.0}, masked).assignment;
    const auto c1 = assign_from_stage(stage, policy::Cgl{1.0}, masked).assignment;
    ok = ok && c0.rows == pl.rows && c0.pseudo_groups == pl.pseudo_groups && c1.rows == rl.rows &&
         c1.pseudo_groups == rl.pseudo_groups;
    compared += static_cast<long>(pl.rows.size());
  }
  return verdict(ok, fmt("4 seeds, %ld unlabeled rows compared", compared));
}

Outcome threshold_optimality() {
  SeededRng r(6);
  int mismatches = 0;
  for (int t = 0; t < kValidationSets; ++t) {
    const std::size_t n = 1 + r.uniform_index(80);
    std::vector<double> conf(n);
    std::vector<char> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = t % 3 == 0 ? 0.5 + 0.05 * static_cast<double>(r.uniform_index(11)) : 0.5 + 0.5 * r.uniform();
      correct[i] = r.uniform() < conf[i];
    }
    std::vector<double> sorted = conf;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> grid{0.0, 1.0};
    for (std::size_t i = 0; i + 1 < n; ++i) grid.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    long best = 0;
    for (double tau : grid) best = std::max(best, threshold_objective(conf, correct, tau));
    const auto found = search_threshold(conf, correct);
    if (found.objective != best || threshold_objective(conf, correct, found.tau) != best) ++mismatches;
  }
  return verdict(mismatches == 0, fmt("%d validation sets, %d mismatches", kValidationSets, mismatches));
}

harness::ExperimentConfig benchmark_config() {
  std::ifstream in(fs::path(FAIRPG_SOURCE_DIR) / "configs" / "synthetic_benchmark.json");
  auto c = harness::config_from_json(nlohmann::json::parse(in));
  c.formats.clear();
  return c;
}

Outcome synthetic_trend(const harness::ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = harness::run_sweep(c);
  const double t = seconds_since(t0);
  if (res.failures()) return fail(fmt("%zu cells failed", res.failures()));
  const double ratio = c.ratios.front();
  bool ok = t < kBenchmarkBudgetSeconds;
  std::string detail;
  for (const auto& tg : c.trainers) {
    const std::string tr = trainer_name(tg.spec);
    const auto* cgl = res.find(ratio, "cgl", tr);
    const auto* pl = res.find(ratio, "pseudo_label", tr);
    const auto* rl = res.find(ratio, "random_label", tr);
    const auto* glo = res.find(ratio, "group_labeled_only", tr);
    if (!cgl || !pl || !rl || !glo) return fail("benchmark config lacks a policy");
    ok = ok && cgl->delta_m_mean <= pl->delta_m_mean && cgl->delta_m_mean <= rl->delta_m_mean &&
         cgl->accuracy_mean >= glo->accuracy_mean + kAccuracyMargin;
    detail += fmt("%s: dm cgl %.4f pl %.4f rl %.4f, acc cgl %.4f glo %.4f; ", tr.c_str(), cgl->delta_m_mean,
                  pl->delta_m_mean, rl->delta_m_mean, cgl->accuracy_mean, glo->accuracy_mean);
  }
  return verdict(ok, detail + fmt("%zu seeds, %.0fs", c.seeds.size(), t));
}

Outcome sweet_spot(const harness::ExperimentConfig& c) {
  const auto res = harness::run_tau_study(c, c.tau_grid);
  const auto& pts = res.points;
  if (pts.size() < 3 || pts.front().tau != 0.0 || pts.back().tau != 1.0) return fail("grid must include 0, 1 and an interior point");
  const double bound = std::min(pts.front().delta_m_mean, pts.back().delta_m_mean);
  // An interior point counts only if it randomizes some rows and keeps some
  // predictions; otherwise it reproduces an endpoint.
  const harness::TauPoint* best = nullptr;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const double frac = harness::mean_and_std(pts[i].randomized_fraction).first;
    if (frac <= 0.0 || frac >= 1.0) continue;
    if (!best || pts[i].delta_m_mean < best->delta_m_mean) best = &pts[i];
  }
  if (!best) return fail("no interior tau changes the assignment");
  return verdict(best->delta_m_mean <= bound,
                 fmt("%s, %zu seeds: best interior tau %.2f dm %.4f, endpoints %.4f / %.4f", res.trainer.c_str(),
                     res.seeds.size(), best->tau, best->delta_m_mean, pts.front().delta_m_mean, pts.back().delta_m_mean));
}

Outcome compas_sanity() {
  const char* train = std::getenv("FAIRPG_COMPAS_TRAIN");
  const char* test = std::getenv("FAIRPG_COMPAS_TEST");
  if (!train || !test) return {Outcome::kSkip, "set FAIRPG_COMPAS_TRAIN and FAIRPG_COMPAS_TEST to run"};
  harness::ExperimentConfig c;
  c.name = "compas";
  c.source = harness::CsvSource{train, test, "compas", 2, 2};
  c.ratios = {0.1};
  c.policies = {policy::PseudoLabel{}, policy::Cgl{}};
  c.trainers = {harness::TrainerGrid{trainer::Lbc{}, default_grid(trainer::Lbc{})}};
  c.seeds = {0, 1, 2, 3};
  c.formats.clear();
  const auto res = harness::run_sweep(c);
  if (res.failures()) return fail(fmt("%zu cells failed", res.failures()));
  std::vector<double> scratch;
  for (const auto& [s, rep] : res.scratch) scratch.push_back(rep.accuracy);
  const double acc = harness::mean_and_std(scratch).first;
  const auto* cgl = res.find(0.1, "cgl", "lbc");
  const auto* pl = res.find(0.1, "pseudo_label", "lbc");
  const double pooled = std::sqrt(0.5 * (cgl->delta_m_std * cgl->delta_m_std + pl->delta_m_std * pl->delta_m_std));
  return verdict(acc >= 0.58 && acc <= 0.68 && cgl->delta_m_mean <= pl->delta_m_mean + pooled,
                 fmt("scratch acc %.4f, dm cgl %.4f pl %.4f pooled std %.4f", acc, cgl->delta_m_mean, pl->delta_m_mean,
                     pooled));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("fairpg_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = FAIRPG_CLI_PATH;

  nlohmann::json cfg = {{"name", "cli-determinism"},
                        {"dataset", {{"synthetic", {{"d", 4}, {"group_shift", 2.0}, {"n_train", 240}, {"n_test", 200}, {"seed", 5}}}}},
                        {"ratios", {1.0, 0.25}},
                        {"policies", {{{"kind", "group_labeled_only"}}, {{"kind", "pseudo_label"}}, {{"kind", "cgl"}}}},
                        {"trainers", {{{"kind", "fairhsic"}, {"grid", {1.0, 10.0}}}, {{"kind", "lbc"}, {"grid", {1.0}}}}},
                        {"seeds", {0, 1}},
                        {"train", {{"epochs", 3}, {"hidden", 8}}},
                        {"group_model", {{"epochs", 3}, {"hidden", 8}}},
                        {"tau_grid", {0.0, 0.7, 1.0}},
                        {"formats", {"csv"}}};
  std::ofstream(root / "config.json") << cfg.dump(2);

  struct Step {
    std::string name, args;
  };
  const std::string c = (root / "config.json").string();
  auto steps = [&](const fs::path& o) {
    const std::string d = o.string();
    return std::vector<Step>{
        {"gen", "gen --d 4 --group-shift 2 --n-train 300 --n-test 200 --seed 3 --ratio 0.3 --out " + d + "/gen"},
        {"assign", "assign --data " + d + "/gen/train.csv --policy cgl --config " + c + " --seed 2 --out " + d + "/assign"},
        {"train", "train --train " + d + "/gen/train.csv --test " + d + "/gen/test.csv --trainer fairhsic --strength 10 "
                  "--policy cgl --config " + c + " --seed 4 --out " + d + "/train"},
        {"sweep", "sweep --config " + c + " --out " + d + "/sweep"},
        {"tau-study", "tau-study --config " + c + " --out " + d + "/tau"},
        {"oracle", "oracle --count 40 --seed 7 --out " + d + "/oracle.json"},
        {"report", "report --in " + d + "/sweep/sweep.json --out " + d + "/report --formats csv"}};
  };
  for (const char* run : {"a", "b"}) {
    for (const auto& s : steps(root / run)) {
      const std::string cmd = cli + " " + s.args + " > " + (root / (std::string(run) + "_" + s.name + ".log")).string() + " 2>&1";
      if (std::system(cmd.c_str()) != 0) return fail(s.name + " exited non-zero: " + cmd);
    }
  }
  long files = 0;
  std::string diffs;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (e.path().extension() != ".json") continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / rel)) diffs += rel.string() + " ";
  }
  fs::remove_all(root);
  return verdict(files >= 7 && diffs.empty(),
                 fmt("%ld JSON files compared across 7 subcommands", files) + (diffs.empty() ? "" : "; differ: " + diffs));
}

}  // namespace

// Optional arguments select criteria by number; default runs all.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kFail ? "FAIL" : "SKIP";
    std::printf("%s [%d] %s: %s\n", tag, id, name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.kind == Outcome::kFail;
  };
  report(1, "invariance of the disparity under the induced distribution", exact_invariance);
  std::string info;
  report(2, "influence inequality for confidence-based assignment", [&] { return influence_inequality(info); });
  if (!info.empty()) std::printf("INFO [2] %s\n", info.c_str());
  report(3, "disparity metrics match the triple-loop oracle", metric_oracle);
  report(4, "analytic gradients match finite differences", gradients);
  report(5, "threshold 0 and 1 reproduce pseudo and random labels", threshold_extremes);
  report(6, "threshold search attains the exhaustive optimum", threshold_optimality);
  report(7, "synthetic benchmark trend at 10% group labels", [] { return synthetic_trend(benchmark_config()); });
  report(8, "interior threshold sweet spot", [] { return sweet_spot(benchmark_config()); });
  report(9, "COMPAS-scale sanity", compas_sanity);
  report(10, "CLI outputs are byte-identical across reruns", cli_determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
