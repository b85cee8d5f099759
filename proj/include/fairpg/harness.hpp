#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/cgl.hpp"
#include "fairpg/fairtrain.hpp"
#include "fairpg/metrics.hpp"
#include "fairpg/mlp.hpp"
#include "fairpg/synth.hpp"

namespace fairpg::harness {

struct SyntheticSource {
  synth::SynthSpec spec;  // regenerated per experiment seed
};

struct CsvSource {
  std::string train_path;
  std::string test_path;
  std::string name;  // "compas" lowers the default accuracy floor to 0.90
  int num_classes = 0;
  int num_groups = 0;
};

using DataSource = std::variant<SyntheticSource, CsvSource>;

struct TrainerGrid {
  TrainerSpec spec;
  std::vector<double> strengths;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataSource source = SyntheticSource{};
  std::vector<double> ratios{1.0, 0.8, 0.5, 0.25, 0.1};
  std::vector<AssignmentPolicy> policies;
  std::vector<TrainerGrid> trainers;
  std::vector<std::uint64_t> seeds{0};
  std::optional<double> accuracy_floor;  // unset: 0.95, or 0.90 for COMPAS
  std::string output_dir = "out";
  TrainConfig train;
  TrainConfig group_model;
  double group_train_fraction = 0.8;
  std::vector<double> tau_grid{0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::set<std::string> formats{"csv", "svg"};

  double effective_floor() const;
  // Throws std::invalid_argument with a message naming the offending field.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

struct CandidateSummary {
  double strength = 0.0;
  double accuracy = 0.0;
  double delta_m = 0.0;
  double delta_a = 0.0;
  friend bool operator==(const CandidateSummary&, const CandidateSummary&) = default;
};

struct CellResult {
  double ratio = 1.0;
  std::string policy;
  std::string trainer;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  FairnessReport report;
  double selected_strength = 0.0;
  std::vector<CandidateSummary> candidates;
  nlohmann::json diagnostics;  // CglDiagnostics, or null when no group model ran
};

struct Aggregate {
  double ratio = 1.0;
  std::string policy;
  std::string trainer;
  long n = 0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double delta_m_mean = 0.0, delta_m_std = 0.0;
  double delta_a_mean = 0.0, delta_a_std = 0.0;
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct SweepResult {
  std::string name;
  std::vector<double> ratios;
  std::vector<std::uint64_t> seeds;
  double accuracy_floor = 0.95;
  std::vector<std::pair<std::uint64_t, FairnessReport>> scratch;  // per seed
  std::vector<CellResult> cells;  // sorted by (trainer, policy, ratio, seed) in config order
  std::vector<Aggregate> aggregates;

  std::size_t failures() const;
  const Aggregate* find(double ratio, const std::string& policy, const std::string& trainer) const;
};

SweepResult run_sweep(const ExperimentConfig& config);

// Mean and sample standard deviation (n - 1; 0 for a single value).
std::pair<double, double> mean_and_std(std::span<const double> v);

struct TauPoint {
  double tau = 0.0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double delta_m_mean = 0.0, delta_m_std = 0.0;
  std::vector<double> accuracy, delta_m;  // per seed
  std::vector<double> randomized_fraction;
};

struct TauStudyResult {
  double ratio = 0.1;
  std::string trainer;
  double strength = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<TauPoint> points;  // ascending tau
  TauPoint pseudo_label;         // baseline cells; tau = 0 must match
  TauPoint random_label;         // tau = 1 must match
};

// Sweeps Cgl(tau) for the first ratio and first trainer of `config` at the
// first grid strength. tau = 0 keeps every prediction, tau = 1 randomizes every row.
TauStudyResult run_tau_study(const ExperimentConfig& config, std::vector<double> taus);

nlohmann::json to_json(const SweepResult& r);
SweepResult sweep_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TauStudyResult& r);

// "63.61 (±0.45)" with both values in percent.
std::string format_cell(double mean, double std);

// Writes sweep.json always; csv tables and svg plots when requested.
// Returns the written paths. Throws std::runtime_error on I/O failure.
std::vector<std::filesystem::path> emit_report(const SweepResult& r, const std::set<std::string>& formats,
                                               const std::filesystem::path& dir);
std::vector<std::filesystem::path> emit_tau_report(const TauStudyResult& r, const std::set<std::string>& formats,
                                                   const std::filesystem::path& dir);

// Number of cells run concurrently: FAIRPG_WORKERS, else the OpenMP default.
int worker_count();

struct LoadedData {
  Dataset train;
  Dataset test;
};
LoadedData load_data(const DataSource& source, std::uint64_t seed);

}  // namespace fairpg::harness
