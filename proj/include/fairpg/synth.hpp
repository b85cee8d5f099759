#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairpg/dataset.hpp"

namespace fairpg::synth {

// Gaussian clusters. Class y is centred at class_sep * (y - (M-1)/2) on axis 0;
// group a adds group_shift * (a - (N-1)/2) on axis 0 and group_signal * (a - (N-1)/2)
// on axis 1. Remaining axes are pure noise.
struct SynthSpec {
  int d = 8;
  int M = 2;
  int N = 2;
  double class_sep = 2.0;
  double group_shift = 0.0;
  double group_signal = 1.0;
  // P(A = y mod N | Y = y) in the training set; unset means uniform groups.
  std::optional<double> aligned_fraction;
  double label_noise = 0.0;  // training targets only
  int n_train = 2000;
  int n_test = 2000;         // split evenly over the M * N cells
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

struct Generated {
  Dataset train;
  Dataset test;
};

Generated generate(const SynthSpec& spec);

// Keeps group labels on round(ratio * |cell|) rows of every (group, class) cell,
// at least one; cells clamped up to one row are reported in `warnings`.
Dataset mask_groups(const Dataset& ds, double ratio, std::uint64_t seed,
                    std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const SynthSpec& s);
SynthSpec spec_from_json(const nlohmann::json& j);

}  // namespace fairpg::synth
