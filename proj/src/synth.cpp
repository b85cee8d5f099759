#include "fairpg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fairpg::synth {

void SynthSpec::validate() const {
  if (d < 2) throw std::invalid_argument("synth: d must be >= 2");
  if (M < 2 || N < 1) throw std::invalid_argument("synth: need M >= 2 classes and N >= 1 groups");
  if (!(class_sep >= 0.0) || !std::isfinite(group_shift) || !std::isfinite(group_signal))
    throw std::invalid_argument("synth: class_sep must be >= 0 and shifts finite");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw std::invalid_argument("synth: label_noise must be in [0, 0.5)");
  if (aligned_fraction && !(*aligned_fraction >= 0.0 && *aligned_fraction <= 1.0))
    throw std::invalid_argument("synth: aligned_fraction must be in [0, 1]");
  if (n_train < 1) throw std::invalid_argument("synth: n_train must be positive");
  if (n_test < M * N) throw std::invalid_argument("synth: n_test must cover every (group, class) cell");
}

namespace {

void draw_features(SeededRng& rng, const SynthSpec& s, int y, int a, std::span<double> out) {
  for (double& v : out) v = rng.normal();
  const double yc = y - (s.M - 1) / 2.0;
  const double ac = a - (s.N - 1) / 2.0;
  out[0] += s.class_sep * yc + s.group_shift * ac;
  out[1] += s.group_signal * ac;
}

int draw_group(SeededRng& rng, const SynthSpec& s, int y) {
  if (s.N == 1) return 0;
  if (!s.aligned_fraction) return static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(s.N)));
  const int aligned = y % s.N;
  if (rng.uniform() < *s.aligned_fraction) return aligned;
  int other = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(s.N - 1)));
  return other >= aligned ? other + 1 : other;
}

}  // namespace

Generated generate(const SynthSpec& spec) {
  spec.validate();
  SeededRng root(spec.seed);
  const auto d = static_cast<std::size_t>(spec.d);

  SeededRng tr = root.substream(derive_seed(spec.seed, "train"));
  Matrix xtr(static_cast<std::size_t>(spec.n_train), d);
  std::vector<int> ytr(xtr.rows);
  std::vector<std::optional<int>> atr(xtr.rows);
  for (std::size_t i = 0; i < xtr.rows; ++i) {
    const int y = static_cast<int>(tr.uniform_index(static_cast<std::uint64_t>(spec.M)));
    const int a = draw_group(tr, spec, y);
    draw_features(tr, spec, y, a, xtr.row(i));
    int observed = y;
    if (spec.label_noise > 0.0 && tr.uniform() < spec.label_noise) {
      const int other = static_cast<int>(tr.uniform_index(static_cast<std::uint64_t>(spec.M - 1)));
      observed = other >= y ? other + 1 : other;
    }
    ytr[i] = observed;
    atr[i] = a;
  }

  SeededRng te = root.substream(derive_seed(spec.seed, "test"));
  const int per_cell = spec.n_test / (spec.M * spec.N);
  Matrix xte(static_cast<std::size_t>(per_cell * spec.M * spec.N), d);
  std::vector<int> yte;
  std::vector<std::optional<int>> ate;
  std::size_t r = 0;
  for (int y = 0; y < spec.M; ++y) {
    for (int a = 0; a < spec.N; ++a) {
      for (int k = 0; k < per_cell; ++k, ++r) {
        draw_features(te, spec, y, a, xte.row(r));
        yte.push_back(y);
        ate.push_back(a);
      }
    }
  }
  return {Dataset(std::move(xtr), std::move(ytr), std::move(atr), spec.M, spec.N),
          Dataset(std::move(xte), std::move(yte), std::move(ate), spec.M, spec.N)};
}

Dataset mask_groups(const Dataset& ds, double ratio, std::uint64_t seed, std::vector<std::string>* warnings) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("mask_groups: ratio must be in (0, 1]");
  std::map<std::pair<int, int>, IndexSet> cells;
  for (RowIndex i = 0; i < ds.size(); ++i) {
    if (!ds.group(i)) throw std::invalid_argument("mask_groups: dataset must be fully group-labeled");
    cells[{*ds.group(i), ds.target(i)}].push_back(i);
  }
  if (ratio == 1.0) return ds;

  SeededRng rng(seed);
  std::vector<std::optional<int>> groups(ds.size());
  for (auto& [cell, rows] : cells) {
    rng.shuffle(rows);
    long keep = std::lround(ratio * static_cast<double>(rows.size()));
    if (keep < 1) {
      keep = 1;
      if (warnings)
        warnings->push_back("cell (group " + std::to_string(cell.first) + ", class " + std::to_string(cell.second) +
                            ") keeps 1 of " + std::to_string(rows.size()) + " labels");
    }
    for (long k = 0; k < keep; ++k) groups[rows[static_cast<std::size_t>(k)]] = cell.first;
  }
  return ds.with_groups(std::move(groups));
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json j{{"d", s.d},
                   {"M", s.M},
                   {"N", s.N},
                   {"class_sep", s.class_sep},
                   {"group_shift", s.group_shift},
                   {"group_signal", s.group_signal},
                   {"label_noise", s.label_noise},
                   {"n_train", s.n_train},
                   {"n_test", s.n_test},
                   {"seed", s.seed},
                   {"rng", SeededRng::kAlgorithmId}};
  j["aligned_fraction"] = s.aligned_fraction ? nlohmann::json(*s.aligned_fraction) : nlohmann::json();
  return j;
}

SynthSpec spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.d = j.value("d", s.d);
  s.M = j.value("M", s.M);
  s.N = j.value("N", s.N);
  s.class_sep = j.value("class_sep", s.class_sep);
  s.group_shift = j.value("group_shift", s.group_shift);
  s.group_signal = j.value("group_signal", s.group_signal);
  s.label_noise = j.value("label_noise", s.label_noise);
  s.n_train = j.value("n_train", s.n_train);
  s.n_test = j.value("n_test", s.n_test);
  s.seed = j.value("seed", s.seed);
  if (j.contains("aligned_fraction") && !j.at("aligned_fraction").is_null())
    s.aligned_fraction = j.at("aligned_fraction").get<double>();
  s.validate();
  return s;
}

}  // namespace fairpg::synth
