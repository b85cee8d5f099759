#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/matrix.hpp"
#include "fairpg/rng.hpp"

namespace fairpg::oracle {

// Enumerable joint distribution over (X, A, Y) with a deterministic classifier f: X -> Y.
struct DiscreteWorld {
  int nx = 0, na = 0, ny = 0;
  std::vector<double> joint;    // index (x * na + a) * ny + y
  std::vector<int> classifier;  // size nx, values in [0, ny)

  double p(int x, int a, int y) const { return joint[(static_cast<std::size_t>(x) * na + a) * ny + y]; }
  double& p(int x, int a, int y) { return joint[(static_cast<std::size_t>(x) * na + a) * ny + y]; }

  double p_ay(int a, int y) const;
  double p_xy(int x, int y) const;
  double p_y(int y) const;
  // P(A = a | X = x, Y = y); NaN when P(x, y) = 0.
  double posterior(int x, int a, int y) const;

  // Throws std::invalid_argument unless sizes match, entries are non-negative
  // and the joint sums to 1 within 1e-12.
  void validate() const;

  friend bool operator==(const DiscreteWorld&, const DiscreteWorld&) = default;
};

// P(A = a, Y = y), na x ny.
Matrix group_class_mass(const DiscreteWorld& w);

struct DeoOptions {
  // Only these x contribute to the accuracies (empty = all of X).
  std::vector<char> x_mask;
  // Replaces the world's own P(A, Y) as the conditioning denominators.
  std::optional<Matrix> reference_mass;
};

struct DeoValues {
  double delta_m = 0.0;
  double delta_a = 0.0;
  Matrix acc;  // na x ny, E_{P(X|A=a,Y=y)}[1(f(X) = y)]
};

// Exact DEO by summation. A class counts when >= 2 groups have positive mass;
// delta_a averages over all ny classes. Throws if no class counts.
DeoValues exact_deo(const DiscreteWorld& w, const DeoOptions& opt = {});

// delta[x][y] = P(x | A=1, y) - P(x | A=0, y). Binary groups only.
Matrix influence_table(const DiscreteWorld& w, const std::optional<Matrix>& reference_mass = std::nullopt);

// Each transform replaces P(A | X, Y) and returns the world with joint
// P'(A | X, Y) P(X, Y); its conditionals P'(X | A, Y) renormalise by construction.
DiscreteWorld transform_vanilla_pl(const DiscreteWorld& w);
DiscreteWorld transform_cgl(const DiscreteWorld& w, std::span<const double> tau_per_class);
DiscreteWorld transform_random_partition(const DiscreteWorld& w, std::span<const char> unlabeled);

// Largest |sum_x P(x | a, y) - 1| over (a, y) with positive mass.
double conditional_normalization_error(const DiscreteWorld& w);

enum class InfluenceOrientation {
  // tau_y = (P(A=1|y) + 1) / 2 on both sides of the band.
  kGroupOne,
  // tau from the group vanilla hardening selects: (P(A=1|y)+1)/2 when
  // P(A=1|x,y) > 0.5, (P(A=0|y)+1)/2 otherwise.
  kHardenedGroup,
};

struct InfluencePoint {
  int x = 0, y = 0;
  double posterior = 0.0;  // P(A=1 | x, y)
  double tau = 0.0;
  double delta = 0.0, delta_vanilla = 0.0, delta_cgl = 0.0;
  double margin = 0.0;  // |delta - delta_vanilla| - |delta - delta_cgl|
};

struct InfluenceReport {
  long checked = 0;
  long half_posteriors = 0;  // points at exactly 0.5, hardened to group 0
  double min_margin = 0.0;   // +inf when vacuous
  std::vector<InfluencePoint> violations;

  bool vacuous() const { return checked == 0; }
  bool passed() const { return violations.empty(); }
};

// Checks the influence inequality on every x with f(x) = 1 inside the
// confidence band. Influences use the original P(A | Y) denominators.
InfluenceReport verify_influence_inequality(const DiscreteWorld& w, InfluenceOrientation orientation = InfluenceOrientation::kHardenedGroup,
                         double strict_margin = 1e-12);

struct InvarianceReport {
  DeoValues before;        // P restricted to the labeled x
  DeoValues after;         // transformed world, original P(A | Y) denominators
  DeoValues renormalized;  // transformed world with its own denominators
  double diff_m = 0.0, diff_a = 0.0;
};

InvarianceReport verify_disparity_invariance(const DiscreteWorld& w, std::span<const char> unlabeled);

struct WorldShape {
  int nx = 6, na = 2, ny = 2;
};

// Exponential weights over the joint, rejected until every (a, y) mass is
// >= min_cell_mass; binary posteriors within 1e-9 of 0.5 are nudged away.
// A fraction of (x, y) slices can be zeroed to exercise zero-mass points.
DiscreteWorld random_world(SeededRng& rng, const WorldShape& shape, double zero_slice_probability = 0.0,
                           double min_cell_mass = 1e-3);
WorldShape random_shape(SeededRng& rng, int max_nx, int max_na, int max_ny);
std::vector<char> random_partition(SeededRng& rng, int nx);

nlohmann::json to_json(const DiscreteWorld& w);
DiscreteWorld world_from_json(const nlohmann::json& j);

// Batch verification over seeded random worlds, as run by the CLI.
struct SuiteConfig {
  int count = 500;
  std::uint64_t seed = 0;
  int max_nx = 10, max_na = 4, max_ny = 3;
  double invariance_tolerance = 1e-10;
};

struct SuiteReport {
  int worlds = 0;
  double invariance_max_diff = 0.0;
  long invariance_failures = 0;
  long influence_checked = 0;
  long influence_violations = 0;
  long influence_group_one_violations = 0;
  double influence_min_margin = 0.0;
  double max_normalization_error = 0.0;

  bool passed() const { return invariance_failures == 0 && influence_violations == 0; }
};

SuiteReport run_suite(const SuiteConfig& cfg);
nlohmann::json to_json(const SuiteReport& r);

}  // namespace fairpg::oracle
