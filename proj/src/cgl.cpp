#include "fairpg/cgl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

namespace fairpg {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

bool operator==(const AssignmentResult& a, const AssignmentResult& b) {
  const auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  return a.rows == b.rows && a.pseudo_groups == b.pseudo_groups && a.provenance == b.provenance &&
         std::equal(a.confidence.begin(), a.confidence.end(), b.confidence.begin(), b.confidence.end(), same) &&
         a.tau == b.tau && a.threshold_objective == b.threshold_objective && a.split_seed == b.split_seed;
}

std::string policy_name(const AssignmentPolicy& p) {
  return std::visit(overloaded{[](const policy::GroupLabeledOnly&) { return std::string("group_labeled_only"); },
                               [](const policy::RandomLabel&) { return std::string("random_label"); },
                               [](const policy::PseudoLabel&) { return std::string("pseudo_label"); },
                               [](const policy::Cgl&) { return std::string("cgl"); },
                               [](const policy::OracleRandomWrong&) { return std::string("oracle_random_wrong"); }},
                    p);
}

AssignmentPolicy policy_from_json(const nlohmann::json& j) {
  const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  if (kind == "group_labeled_only") return policy::GroupLabeledOnly{};
  if (kind == "random_label") return policy::RandomLabel{};
  if (kind == "pseudo_label") return policy::PseudoLabel{};
  if (kind == "oracle_random_wrong") return policy::OracleRandomWrong{};
  if (kind == "cgl") {
    policy::Cgl c;
    if (j.is_object() && j.contains("tau") && !j.at("tau").is_null()) {
      c.tau = j.at("tau").get<double>();
      if (!(*c.tau >= 0.0 && *c.tau <= 1.0)) throw std::invalid_argument("cgl: tau must be in [0, 1]");
    }
    return c;
  }
  throw std::invalid_argument("unknown assignment policy: " + kind);
}

nlohmann::json to_json(const AssignmentPolicy& p) {
  nlohmann::json j{{"kind", policy_name(p)}};
  if (const auto* c = std::get_if<policy::Cgl>(&p); c && c->tau) j["tau"] = *c->tau;
  return j;
}

std::string_view to_string(Provenance p) {
  return p == Provenance::kConfident ? "confident" : "randomized";
}

LabeledSplit split_labeled(const Dataset& ds, std::span<const RowIndex> labeled, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_labeled: fraction must be in (0, 1)");
  if (labeled.size() < 2) throw std::invalid_argument("split_labeled: at least two labeled rows are required");
  SeededRng rng(seed);

  std::map<std::pair<int, int>, IndexSet> cells;
  for (RowIndex r : labeled) {
    if (!ds.group(r)) throw std::invalid_argument("split_labeled: row without group label");
    cells[{*ds.group(r), ds.target(r)}].push_back(r);
  }
  const auto total = static_cast<long>(labeled.size());
  const long target = std::clamp(std::lround(fraction * static_cast<double>(total)), 1L, total - 1);

  struct Quota {
    IndexSet* rows;
    long take;
    double remainder;
  };
  std::vector<Quota> quotas;
  long assigned = 0;
  for (auto& [key, rows] : cells) {
    rng.shuffle(rows);
    const double exact = fraction * static_cast<double>(rows.size());
    const long base = static_cast<long>(std::floor(exact));
    quotas.push_back({&rows, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  // Largest remainder first when adding, smallest first when removing.
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  while (assigned < target) {
    bool moved = false;
    for (std::size_t i : order) {
      if (assigned == target) break;
      if (quotas[i].take < static_cast<long>(quotas[i].rows->size())) {
        ++quotas[i].take;
        ++assigned;
        moved = true;
      }
    }
    if (!moved) break;
  }
  while (assigned > target) {
    bool moved = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (assigned == target) break;
      if (quotas[*it].take > 0) {
        --quotas[*it].take;
        --assigned;
        moved = true;
      }
    }
    if (!moved) break;
  }

  LabeledSplit out;
  for (const auto& q : quotas) {
    out.train.insert(out.train.end(), q.rows->begin(), q.rows->begin() + q.take);
    out.val.insert(out.val.end(), q.rows->begin() + q.take, q.rows->end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  if (out.train.empty() || out.val.empty()) throw std::invalid_argument("split_labeled: one side would be empty");
  return out;
}

long threshold_objective(std::span<const double> confidence, std::span<const char> correct, double tau) {
  long score = 0;
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    if (confidence[i] > tau) score += correct[i] ? 1 : 0;
    else score += correct[i] ? 0 : 1;
  }
  return score;
}

ThresholdSearch search_threshold(std::span<const double> confidence, std::span<const char> correct) {
  if (confidence.size() != correct.size()) throw std::invalid_argument("search_threshold: size mismatch");
  const std::size_t n = confidence.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return confidence[a] < confidence[b]; });

  std::vector<double> candidates{0.0, 1.0};
  for (double c : confidence) candidates.push_back(c);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  // Objective with every point above the threshold, then move points into the
  // low branch as tau passes their confidence.
  long score = 0;
  for (std::size_t i = 0; i < n; ++i) score += correct[i] ? 1 : 0;
  std::size_t next = 0;
  ThresholdSearch best{candidates.front(), std::numeric_limits<long>::min(), n};
  for (double tau : candidates) {
    while (next < n && confidence[idx[next]] <= tau) {
      score += correct[idx[next]] ? -1 : 1;
      ++next;
    }
    if (score > best.objective) {
      best.objective = score;
      best.tau = tau;
    }
  }
  return best;
}

namespace {

struct ValPredictions {
  std::vector<double> confidence;
  std::vector<char> correct;
  std::vector<int> argmax;
};

ValPredictions predict_on(const MlpModel& g, const Dataset& ds, std::span<const RowIndex> rows) {
  ValPredictions out;
  const auto post = predict_posteriors(g, gather_rows(ds.features(), rows));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& truth = ds.group(rows[i]);
    if (!truth) throw std::invalid_argument("search_threshold: validation row without group label");
    const auto am = static_cast<int>(post[i].argmax());
    out.argmax.push_back(am);
    out.confidence.push_back(post[i].confidence());
    out.correct.push_back(am == *truth ? 1 : 0);
  }
  return out;
}

}  // namespace

ThresholdSearch search_threshold(const MlpModel& g, const Dataset& ds, std::span<const RowIndex> val) {
  const auto p = predict_on(g, ds, val);
  return search_threshold(p.confidence, p.correct);
}

AssignmentResult assign(const MlpModel* g, const AssignmentPolicy& policy, const Dataset& ds,
                        const AssignContext& ctx) {
  AssignmentResult out;
  out.tau = 0.0;
  if (std::holds_alternative<policy::GroupLabeledOnly>(policy)) return out;

  const LabeledPartition part = partition_group_labeled(ds);
  out.rows = part.unlabeled;
  const bool random_only = std::holds_alternative<policy::RandomLabel>(policy);
  if (!random_only && g == nullptr) throw std::invalid_argument("assign: policy needs a group classifier");
  const auto* cgl = std::get_if<policy::Cgl>(&policy);
  if (cgl && !cgl->tau) throw std::invalid_argument("assign: Cgl policy has no threshold");
  const bool oracle = std::holds_alternative<policy::OracleRandomWrong>(policy);
  if (oracle && ctx.hidden_groups.size() != ds.size())
    throw std::invalid_argument("assign: oracle policy needs hidden ground-truth groups");
  if ((random_only || cgl) && ctx.table == nullptr)
    throw std::invalid_argument("assign: policy needs the empirical conditional table");

  if (random_only) out.tau = 1.0;
  if (cgl) out.tau = *cgl->tau;
  if (out.rows.empty()) return out;

  std::vector<GroupPosterior> post;
  if (g) post = predict_posteriors(*g, gather_rows(ds.features(), out.rows));

  out.pseudo_groups.reserve(out.rows.size());
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const RowIndex r = out.rows[i];
    SeededRng rng(derive_seed(ctx.seed, r));
    const double conf = g ? post[i].confidence() : kNaN;
    const int am = g ? static_cast<int>(post[i].argmax()) : -1;
    auto draw = [&] { return sample_group_or_marginal(*ctx.table, ctx.marginal, ds.target(r), rng); };

    int group;
    Provenance prov;
    if (random_only) {
      group = draw();
      prov = Provenance::kRandomized;
    } else if (cgl) {
      if (conf > *cgl->tau) {
        group = am;
        prov = Provenance::kConfident;
      } else {
        group = draw();
        prov = Provenance::kRandomized;
      }
    } else if (oracle) {
      const auto& truth = ctx.hidden_groups[r];
      if (!truth) throw std::invalid_argument("assign: hidden group missing for row " + std::to_string(r));
      if (am == *truth) {
        group = am;
        prov = Provenance::kConfident;
      } else {
        group = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ds.num_groups())));
        prov = Provenance::kRandomized;
      }
    } else {
      group = am;
      prov = Provenance::kConfident;
    }
    out.pseudo_groups.push_back(group);
    out.provenance.push_back(prov);
    out.confidence.push_back(conf);
  }
  return out;
}

Histogram confidence_histogram(std::span<const double> confidence, double bucket_width) {
  if (!(bucket_width > 0.0 && bucket_width <= 1.0)) throw std::invalid_argument("histogram: bad bucket width");
  Histogram h;
  h.bucket_width = bucket_width;
  const auto buckets = static_cast<std::size_t>(std::ceil(1.0 / bucket_width - 1e-9));
  h.counts.assign(buckets, 0);
  for (double c : confidence) {
    if (std::isnan(c)) continue;
    auto b = static_cast<long>(std::floor(c / bucket_width + 1e-12));
    b = std::clamp(b, 0L, static_cast<long>(buckets) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

GroupModelStage prepare_group_model(const Dataset& ds, const TrainConfig& group_config, std::uint64_t seed,
                                    double train_fraction) {
  GroupModelStage st;
  st.seed = seed;
  st.partition = partition_group_labeled(ds);
  if (st.partition.labeled.size() < 2)
    throw std::invalid_argument("cgl: at least two group-labeled rows are required");
  st.split = split_labeled(ds, st.partition.labeled, train_fraction, derive_seed(seed, "split"));
  TrainConfig cfg = group_config;
  cfg.seed = derive_seed(seed, "group-model");
  st.g = train(ds, st.split.train, LabelColumn::kGroup, cfg);
  st.table = empirical_conditional(ds, st.partition.labeled);
  st.marginal = empirical_marginal(ds, st.partition.labeled);
  st.search = search_threshold(st.g, ds, st.split.val);
  return st;
}

CglOutput assign_from_stage(const GroupModelStage& stage, const AssignmentPolicy& policy, const Dataset& ds,
                            std::span<const std::optional<int>> hidden_groups) {
  AssignmentPolicy effective = policy;
  if (auto* c = std::get_if<policy::Cgl>(&effective); c && !c->tau) c->tau = stage.search.tau;

  AssignContext ctx;
  ctx.table = &stage.table;
  ctx.marginal = stage.marginal;
  ctx.seed = derive_seed(stage.seed, "assign");
  ctx.hidden_groups = hidden_groups;

  CglOutput out;
  out.assignment = assign(&stage.g, effective, ds, ctx);
  out.assignment.split_seed = derive_seed(stage.seed, "split");
  out.assignment.threshold_objective = stage.search.objective;

  auto& d = out.diagnostics;
  d.n_labeled = stage.partition.labeled.size();
  d.n_train = stage.split.train.size();
  d.n_val = stage.split.val.size();
  d.n_unlabeled = stage.partition.unlabeled.size();
  for (Provenance p : out.assignment.provenance) d.n_randomized += p == Provenance::kRandomized ? 1 : 0;
  d.searched_tau = stage.search.tau;
  d.threshold_objective = stage.search.objective;
  d.detection_accuracy = stage.search.detection_accuracy();

  const auto val = predict_on(stage.g, ds, stage.split.val);
  const auto* cgl = std::get_if<policy::Cgl>(&effective);
  const double rule_tau = cgl ? *cgl->tau : stage.search.tau;
  long argmax_hits = 0, rule_hits = 0;
  const std::uint64_t val_seed = derive_seed(stage.seed, "val-rule");
  for (std::size_t i = 0; i < stage.split.val.size(); ++i) {
    const RowIndex r = stage.split.val[i];
    const int truth = *ds.group(r);
    argmax_hits += val.correct[i] ? 1 : 0;
    int rule = val.argmax[i];
    if (!(val.confidence[i] > rule_tau)) {
      SeededRng rng(derive_seed(val_seed, r));
      rule = sample_group_or_marginal(stage.table, stage.marginal, ds.target(r), rng);
    }
    rule_hits += rule == truth ? 1 : 0;
  }
  const double nv = static_cast<double>(stage.split.val.size());
  d.val_group_accuracy = static_cast<double>(argmax_hits) / nv;
  d.threshold_rule_accuracy = static_cast<double>(rule_hits) / nv;
  d.validation_histogram = confidence_histogram(val.confidence);
  if (!stage.partition.unlabeled.empty()) {
    const auto post = predict_posteriors(stage.g, gather_rows(ds.features(), stage.partition.unlabeled));
    std::vector<double> conf;
    for (const auto& p : post) conf.push_back(p.confidence());
    d.unlabeled_histogram = confidence_histogram(conf);
  } else {
    d.unlabeled_histogram = confidence_histogram({});
  }
  return out;
}

CglOutput run_cgl_pipeline(const Dataset& ds, const AssignmentPolicy& policy, const TrainConfig& group_config,
                           std::uint64_t seed, std::span<const std::optional<int>> hidden_groups) {
  const GroupModelStage stage = prepare_group_model(ds, group_config, seed);
  return assign_from_stage(stage, policy, ds, hidden_groups);
}

std::vector<int> merged_groups(const Dataset& ds, const AssignmentResult& result) {
  std::vector<int> g(ds.size(), -1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.group(i)) g[i] = *ds.group(i);
  }
  for (std::size_t i = 0; i < result.rows.size(); ++i) g[result.rows[i]] = result.pseudo_groups[i];
  return g;
}

void write_assignment_csv(std::ostream& out, const AssignmentResult& r) {
  out << "row_index,pseudo_group,provenance,confidence\n";
  char buf[64];
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    out << r.rows[i] << ',' << r.pseudo_groups[i] << ',' << to_string(r.provenance[i]) << ',';
    if (!std::isnan(r.confidence[i])) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), r.confidence[i]);
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

nlohmann::json to_json(const Histogram& h) {
  return {{"bucket_width", h.bucket_width}, {"counts", h.counts}};
}

nlohmann::json to_json(const CglDiagnostics& d) {
  return {{"n_labeled", d.n_labeled},
          {"n_train", d.n_train},
          {"n_val", d.n_val},
          {"n_unlabeled", d.n_unlabeled},
          {"n_randomized", d.n_randomized},
          {"val_group_accuracy", d.val_group_accuracy},
          {"threshold_rule_accuracy", d.threshold_rule_accuracy},
          {"detection_accuracy", d.detection_accuracy},
          {"tau", d.searched_tau},
          {"threshold_objective", d.threshold_objective},
          {"validation_histogram", to_json(d.validation_histogram)},
          {"unlabeled_histogram", to_json(d.unlabeled_histogram)}};
}

}  // namespace fairpg
