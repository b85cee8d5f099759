#include "fairpg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fairpg::oracle {

double DiscreteWorld::p_ay(int a, int y) const {
  double s = 0.0;
  for (int x = 0; x < nx; ++x) s += p(x, a, y);
  return s;
}

double DiscreteWorld::p_xy(int x, int y) const {
  double s = 0.0;
  for (int a = 0; a < na; ++a) s += p(x, a, y);
  return s;
}

double DiscreteWorld::p_y(int y) const {
  double s = 0.0;
  for (int a = 0; a < na; ++a) s += p_ay(a, y);
  return s;
}

double DiscreteWorld::posterior(int x, int a, int y) const {
  const double m = p_xy(x, y);
  return m > 0.0 ? p(x, a, y) / m : std::numeric_limits<double>::quiet_NaN();
}

void DiscreteWorld::validate() const {
  if (nx <= 0 || na <= 0 || ny <= 0) throw std::invalid_argument("world: sizes must be positive");
  if (joint.size() != static_cast<std::size_t>(nx) * na * ny)
    throw std::invalid_argument("world: joint has " + std::to_string(joint.size()) + " entries, expected " +
                                std::to_string(static_cast<std::size_t>(nx) * na * ny));
  if (classifier.size() != static_cast<std::size_t>(nx)) throw std::invalid_argument("world: classifier size != nx");
  double total = 0.0;
  for (double v : joint) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("world: joint entries must be finite and >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("world: joint must sum to 1");
  for (int f : classifier) {
    if (f < 0 || f >= ny) throw std::invalid_argument("world: classifier output out of range");
  }
}

Matrix group_class_mass(const DiscreteWorld& w) {
  Matrix m(static_cast<std::size_t>(w.na), static_cast<std::size_t>(w.ny));
  for (int a = 0; a < w.na; ++a)
    for (int y = 0; y < w.ny; ++y) m(a, y) = w.p_ay(a, y);
  return m;
}

DeoValues exact_deo(const DiscreteWorld& w, const DeoOptions& opt) {
  if (!opt.x_mask.empty() && opt.x_mask.size() != static_cast<std::size_t>(w.nx))
    throw std::invalid_argument("exact_deo: x_mask size != nx");
  const Matrix mass = opt.reference_mass ? *opt.reference_mass : group_class_mass(w);
  if (mass.rows != static_cast<std::size_t>(w.na) || mass.cols != static_cast<std::size_t>(w.ny))
    throw std::invalid_argument("exact_deo: reference mass has wrong shape");

  DeoValues out;
  out.acc = Matrix(static_cast<std::size_t>(w.na), static_cast<std::size_t>(w.ny));
  double max_gap = 0.0, sum_gap = 0.0;
  int counted = 0;
  for (int y = 0; y < w.ny; ++y) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    int present = 0;
    for (int a = 0; a < w.na; ++a) {
      if (!(mass(a, y) > 0.0)) continue;
      double hit = 0.0;
      for (int x = 0; x < w.nx; ++x) {
        if (w.classifier[x] != y) continue;
        if (!opt.x_mask.empty() && !opt.x_mask[x]) continue;
        hit += w.p(x, a, y);
      }
      const double acc = hit / mass(a, y);
      out.acc(a, y) = acc;
      lo = std::min(lo, acc);
      hi = std::max(hi, acc);
      ++present;
    }
    if (present < 2) continue;
    ++counted;
    max_gap = std::max(max_gap, hi - lo);
    sum_gap += hi - lo;
  }
  if (counted == 0) throw std::invalid_argument("exact_deo: no class has two groups with positive mass");
  out.delta_m = max_gap;
  out.delta_a = sum_gap / w.ny;
  return out;
}

Matrix influence_table(const DiscreteWorld& w, const std::optional<Matrix>& reference_mass) {
  if (w.na != 2) throw std::invalid_argument("influence_table: binary groups required");
  const Matrix mass = reference_mass ? *reference_mass : group_class_mass(w);
  Matrix delta(static_cast<std::size_t>(w.nx), static_cast<std::size_t>(w.ny));
  for (int y = 0; y < w.ny; ++y) {
    if (!(mass(0, y) > 0.0) || !(mass(1, y) > 0.0))
      throw std::invalid_argument("influence_table: class " + std::to_string(y) + " lacks mass for a group");
    for (int x = 0; x < w.nx; ++x) delta(x, y) = w.p(x, 1, y) / mass(1, y) - w.p(x, 0, y) / mass(0, y);
  }
  return delta;
}

namespace {

template <class Rule>
DiscreteWorld replace_posteriors(const DiscreteWorld& w, Rule rule) {
  DiscreteWorld out = w;
  std::vector<double> post(static_cast<std::size_t>(w.na));
  for (int x = 0; x < w.nx; ++x) {
    for (int y = 0; y < w.ny; ++y) {
      const double m = w.p_xy(x, y);
      if (!(m > 0.0)) continue;
      for (int a = 0; a < w.na; ++a) post[a] = w.p(x, a, y) / m;
      rule(x, y, post);
      for (int a = 0; a < w.na; ++a) out.p(x, a, y) = post[a] * m;
    }
  }
  return out;
}

std::vector<double> class_conditional_groups(const DiscreteWorld& w, int y) {
  std::vector<double> g(static_cast<std::size_t>(w.na));
  const double py = w.p_y(y);
  for (int a = 0; a < w.na; ++a) g[a] = py > 0.0 ? w.p_ay(a, y) / py : 0.0;
  return g;
}

void require_binary(const DiscreteWorld& w, const char* what) {
  if (w.na != 2) throw std::invalid_argument(std::string(what) + ": binary groups required");
}

}  // namespace

DiscreteWorld transform_vanilla_pl(const DiscreteWorld& w) {
  require_binary(w, "transform_vanilla_pl");
  return replace_posteriors(w, [](int, int, std::vector<double>& post) {
    const double one = post[1] > 0.5 ? 1.0 : 0.0;
    post[1] = one;
    post[0] = 1.0 - one;
  });
}

DiscreteWorld transform_cgl(const DiscreteWorld& w, std::span<const double> tau_per_class) {
  require_binary(w, "transform_cgl");
  if (tau_per_class.size() != static_cast<std::size_t>(w.ny))
    throw std::invalid_argument("transform_cgl: need one threshold per class");
  for (double t : tau_per_class) {
    if (!(t >= 0.5 && t <= 1.0)) throw std::invalid_argument("transform_cgl: thresholds must lie in [0.5, 1]");
  }
  std::vector<std::vector<double>> prior;
  for (int y = 0; y < w.ny; ++y) prior.push_back(class_conditional_groups(w, y));
  return replace_posteriors(w, [&](int, int y, std::vector<double>& post) {
    const double tau = tau_per_class[y];
    const double p1 = post[1];
    if (p1 > 1.0 - tau && p1 < tau) {
      post = prior[y];
      return;
    }
    // Hardened; 0.5 at tau = 0.5 falls to group 0 as in the vanilla rule.
    const double one = (p1 >= tau && p1 > 1.0 - tau) ? 1.0 : 0.0;
    post[1] = one;
    post[0] = 1.0 - one;
  });
}

DiscreteWorld transform_random_partition(const DiscreteWorld& w, std::span<const char> unlabeled) {
  if (unlabeled.size() != static_cast<std::size_t>(w.nx))
    throw std::invalid_argument("transform_random_partition: mask size != nx");
  std::vector<std::vector<double>> prior;
  for (int y = 0; y < w.ny; ++y) prior.push_back(class_conditional_groups(w, y));
  return replace_posteriors(w, [&](int x, int y, std::vector<double>& post) {
    if (unlabeled[x]) post = prior[y];
  });
}

double conditional_normalization_error(const DiscreteWorld& w) {
  double worst = 0.0;
  for (int a = 0; a < w.na; ++a) {
    for (int y = 0; y < w.ny; ++y) {
      const double m = w.p_ay(a, y);
      if (!(m > 0.0)) continue;
      double s = 0.0;
      for (int x = 0; x < w.nx; ++x) s += w.p(x, a, y) / m;
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

InfluenceReport verify_influence_inequality(const DiscreteWorld& w, InfluenceOrientation orientation, double strict_margin) {
  require_binary(w, "verify_influence_inequality");
  const Matrix mass = group_class_mass(w);
  std::vector<double> tau_one(static_cast<std::size_t>(w.ny)), tau_zero(static_cast<std::size_t>(w.ny));
  for (int y = 0; y < w.ny; ++y) {
    const double py = w.p_y(y);
    tau_one[y] = py > 0.0 ? (mass(1, y) / py + 1.0) / 2.0 : 1.0;
    tau_zero[y] = py > 0.0 ? (mass(0, y) / py + 1.0) / 2.0 : 1.0;
  }
  const DiscreteWorld vanilla = transform_vanilla_pl(w);
  const DiscreteWorld cgl_one = transform_cgl(w, tau_one);
  const DiscreteWorld cgl_zero = transform_cgl(w, tau_zero);

  InfluenceReport rep;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (int y = 0; y < w.ny; ++y) {
    if (!(mass(0, y) > 0.0) || !(mass(1, y) > 0.0)) continue;
    for (int x = 0; x < w.nx; ++x) {
      if (w.classifier[x] != 1) continue;
      const double pxy = w.p_xy(x, y);
      if (!(pxy > 0.0)) continue;
      const double p1 = w.p(x, 1, y) / pxy;
      const bool use_zero = orientation == InfluenceOrientation::kHardenedGroup && !(p1 > 0.5);
      const double tau = use_zero ? tau_zero[y] : tau_one[y];
      if (!(p1 > 1.0 - tau && p1 < tau)) continue;
      const DiscreteWorld& cgl = use_zero ? cgl_zero : cgl_one;

      InfluencePoint pt;
      pt.x = x;
      pt.y = y;
      pt.posterior = p1;
      pt.tau = tau;
      pt.delta = w.p(x, 1, y) / mass(1, y) - w.p(x, 0, y) / mass(0, y);
      pt.delta_vanilla = vanilla.p(x, 1, y) / mass(1, y) - vanilla.p(x, 0, y) / mass(0, y);
      pt.delta_cgl = cgl.p(x, 1, y) / mass(1, y) - cgl.p(x, 0, y) / mass(0, y);
      pt.margin = std::abs(pt.delta - pt.delta_vanilla) - std::abs(pt.delta - pt.delta_cgl);
      ++rep.checked;
      if (p1 == 0.5) ++rep.half_posteriors;
      rep.min_margin = std::min(rep.min_margin, pt.margin);
      if (!(pt.margin > strict_margin)) rep.violations.push_back(pt);
    }
  }
  return rep;
}

InvarianceReport verify_disparity_invariance(const DiscreteWorld& w, std::span<const char> unlabeled) {
  if (unlabeled.size() != static_cast<std::size_t>(w.nx))
    throw std::invalid_argument("verify_disparity_invariance: mask size != nx");
  const Matrix mass = group_class_mass(w);
  const DiscreteWorld t = transform_random_partition(w, unlabeled);

  InvarianceReport rep;
  DeoOptions labeled_only;
  labeled_only.x_mask.resize(unlabeled.size());
  for (std::size_t x = 0; x < unlabeled.size(); ++x) labeled_only.x_mask[x] = unlabeled[x] ? 0 : 1;
  rep.before = exact_deo(w, labeled_only);
  DeoOptions original_denominators;
  original_denominators.reference_mass = mass;
  rep.after = exact_deo(t, original_denominators);
  rep.renormalized = exact_deo(t);
  rep.diff_m = std::abs(rep.before.delta_m - rep.after.delta_m);
  rep.diff_a = std::abs(rep.before.delta_a - rep.after.delta_a);
  return rep;
}

DiscreteWorld random_world(SeededRng& rng, const WorldShape& shape, double zero_slice_probability,
                           double min_cell_mass) {
  if (shape.nx < 1 || shape.na < 1 || shape.ny < 1) throw std::invalid_argument("random_world: bad shape");
  DiscreteWorld w;
  w.nx = shape.nx;
  w.na = shape.na;
  w.ny = shape.ny;
  w.joint.assign(static_cast<std::size_t>(w.nx) * w.na * w.ny, 0.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    double total = 0.0;
    for (int x = 0; x < w.nx; ++x) {
      for (int y = 0; y < w.ny; ++y) {
        const bool zero = zero_slice_probability > 0.0 && rng.uniform() < zero_slice_probability;
        for (int a = 0; a < w.na; ++a) {
          const double v = zero ? 0.0 : rng.exponential();
          w.p(x, a, y) = v;
          total += v;
        }
      }
    }
    if (!(total > 0.0)) continue;
    for (double& v : w.joint) v /= total;
    if (w.na == 2) {
      for (int x = 0; x < w.nx; ++x) {
        for (int y = 0; y < w.ny; ++y) {
          const double m = w.p_xy(x, y);
          if (m > 0.0 && std::abs(w.p(x, 1, y) / m - 0.5) < 1e-9) w.p(x, 1, y) *= 1.0 + 1e-6;
        }
      }
      double s = 0.0;
      for (double v : w.joint) s += v;
      for (double& v : w.joint) v /= s;
    }
    bool ok = true;
    for (int a = 0; a < w.na && ok; ++a)
      for (int y = 0; y < w.ny && ok; ++y) ok = w.p_ay(a, y) >= min_cell_mass;
    if (!ok) continue;
    w.classifier.resize(static_cast<std::size_t>(w.nx));
    for (int& f : w.classifier) f = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w.ny)));
    return w;
  }
  throw std::runtime_error("random_world: rejection sampling did not find a world with enough cell mass");
}

WorldShape random_shape(SeededRng& rng, int max_nx, int max_na, int max_ny) {
  if (max_nx < 2 || max_na < 2 || max_ny < 2) throw std::invalid_argument("random_shape: maxima must be >= 2");
  WorldShape s;
  s.nx = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_nx - 1)));
  s.na = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_na - 1)));
  s.ny = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_ny - 1)));
  return s;
}

std::vector<char> random_partition(SeededRng& rng, int nx) {
  std::vector<char> mask(static_cast<std::size_t>(nx));
  for (char& m : mask) m = rng.uniform() < 0.5 ? 1 : 0;
  return mask;
}

nlohmann::json to_json(const DiscreteWorld& w) {
  return {{"nx", w.nx}, {"na", w.na}, {"ny", w.ny}, {"joint", w.joint}, {"classifier", w.classifier}};
}

DiscreteWorld world_from_json(const nlohmann::json& j) {
  DiscreteWorld w;
  w.nx = j.at("nx").get<int>();
  w.na = j.at("na").get<int>();
  w.ny = j.at("ny").get<int>();
  w.joint = j.at("joint").get<std::vector<double>>();
  w.classifier = j.at("classifier").get<std::vector<int>>();
  w.validate();
  return w;
}

SuiteReport run_suite(const SuiteConfig& cfg) {
  if (cfg.count <= 0) throw std::invalid_argument("oracle suite: count must be positive");
  struct PerWorld {
    double invariance_diff = 0.0;
    double norm_err = 0.0;
    long checked = 0, violations = 0, literal_violations = 0;
    double min_margin = std::numeric_limits<double>::infinity();
  };
  std::vector<PerWorld> results(static_cast<std::size_t>(cfg.count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.count; ++i) {
    SeededRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    PerWorld& r = results[static_cast<std::size_t>(i)];

    const WorldShape shape = random_shape(rng, cfg.max_nx, cfg.max_na, cfg.max_ny);
    const DiscreteWorld w = random_world(rng, shape);
    const auto part = random_partition(rng, w.nx);
    const InvarianceReport p2 = verify_disparity_invariance(w, part);
    r.invariance_diff = std::max(p2.diff_m, p2.diff_a);
    r.norm_err = conditional_normalization_error(transform_random_partition(w, part));

    WorldShape binary = random_shape(rng, cfg.max_nx, 2, cfg.max_ny);
    binary.na = 2;
    const DiscreteWorld wb = random_world(rng, binary);
    const InfluenceReport hard = verify_influence_inequality(wb, InfluenceOrientation::kHardenedGroup);
    const InfluenceReport literal = verify_influence_inequality(wb, InfluenceOrientation::kGroupOne);
    r.checked = hard.checked;
    r.violations = static_cast<long>(hard.violations.size());
    r.literal_violations = static_cast<long>(literal.violations.size());
    r.min_margin = hard.min_margin;
    std::vector<double> half(static_cast<std::size_t>(wb.ny), 0.5);
    r.norm_err = std::max({r.norm_err, conditional_normalization_error(transform_vanilla_pl(wb)),
                           conditional_normalization_error(transform_cgl(wb, half))});
  }

  SuiteReport rep;
  rep.worlds = cfg.count;
  rep.influence_min_margin = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    rep.invariance_max_diff = std::max(rep.invariance_max_diff, r.invariance_diff);
    if (!(r.invariance_diff < cfg.invariance_tolerance)) ++rep.invariance_failures;
    rep.influence_checked += r.checked;
    rep.influence_violations += r.violations;
    rep.influence_group_one_violations += r.literal_violations;
    rep.influence_min_margin = std::min(rep.influence_min_margin, r.min_margin);
    rep.max_normalization_error = std::max(rep.max_normalization_error, r.norm_err);
  }
  return rep;
}

nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json j{{"worlds", r.worlds},
                   {"invariance_max_abs_diff", r.invariance_max_diff},
                   {"invariance_failures", r.invariance_failures},
                   {"influence_checked", r.influence_checked},
                   {"influence_violations", r.influence_violations},
                   {"influence_group_one_violations", r.influence_group_one_violations},
                   {"max_normalization_error", r.max_normalization_error},
                   {"passed", r.passed()}};
  j["influence_min_margin"] = std::isfinite(r.influence_min_margin) ? nlohmann::json(r.influence_min_margin) : nlohmann::json();
  return j;
}

}  // namespace fairpg::oracle
