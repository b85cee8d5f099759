#include "fairpg/dataset.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace fairpg {

Dataset::Dataset(Matrix features, std::vector<int> targets,
                 std::vector<std::optional<int>> groups, int num_classes, int num_groups)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      groups_(std::move(groups)),
      num_classes_(num_classes),
      num_groups_(num_groups) {
  const std::size_t n = targets_.size();
  if (n == 0) throw std::invalid_argument("Dataset: at least one row is required");
  if (features_.rows != n || groups_.size() != n)
    throw std::invalid_argument("Dataset: features, targets and groups differ in length");
  if (features_.cols == 0) throw std::invalid_argument("Dataset: feature dimension must be >= 1");
  if (num_classes_ < 1 || num_groups_ < 1)
    throw std::invalid_argument("Dataset: num_classes and num_groups must be >= 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (targets_[i] < 0 || targets_[i] >= num_classes_)
      throw std::invalid_argument("Dataset: target index out of range at row " + std::to_string(i));
    if (groups_[i] && (*groups_[i] < 0 || *groups_[i] >= num_groups_))
      throw std::invalid_argument("Dataset: group index out of range at row " + std::to_string(i));
  }
}

Dataset Dataset::with_groups(std::vector<std::optional<int>> groups) const {
  return Dataset(features_, targets_, std::move(groups), num_classes_, num_groups_);
}

LabeledPartition partition_group_labeled(const Dataset& ds) {
  LabeledPartition p;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (ds.group(i) ? p.labeled : p.unlabeled).push_back(i);
  }
  return p;
}

std::size_t GroupPosterior::argmax() const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < probs.size(); ++a) {
    if (probs[a] > probs[best]) best = a;
  }
  return best;
}

double GroupPosterior::confidence() const { return probs.empty() ? 0.0 : probs[argmax()]; }

bool GroupPosterior::is_valid(double tol) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return !probs.empty() && std::abs(sum - 1.0) <= tol;
}

bool ConditionalGroupTable::row_empty(int y) const {
  for (long c : counts[static_cast<std::size_t>(y)]) {
    if (c > 0) return false;
  }
  return true;
}

ConditionalGroupTable empirical_conditional(const Dataset& ds, std::span<const RowIndex> rows) {
  if (rows.empty()) throw std::invalid_argument("empirical_conditional: empty row set");
  const auto M = static_cast<std::size_t>(ds.num_classes());
  const auto N = static_cast<std::size_t>(ds.num_groups());
  ConditionalGroupTable out{Matrix(M, N), std::vector<std::vector<long>>(M, std::vector<long>(N, 0))};
  for (RowIndex r : rows) {
    const auto& g = ds.group(r);
    if (!g) throw std::invalid_argument("empirical_conditional: row without group label");
    ++out.counts[static_cast<std::size_t>(ds.target(r))][static_cast<std::size_t>(*g)];
  }
  for (std::size_t y = 0; y < M; ++y) {
    long total = 0;
    for (long c : out.counts[y]) total += c;
    if (total == 0) continue;
    for (std::size_t a = 0; a < N; ++a) {
      out.table(y, a) = static_cast<double>(out.counts[y][a]) / static_cast<double>(total);
    }
  }
  return out;
}

std::vector<double> empirical_marginal(const Dataset& ds, std::span<const RowIndex> rows) {
  if (rows.empty()) throw std::invalid_argument("empirical_marginal: empty row set");
  std::vector<double> p(static_cast<std::size_t>(ds.num_groups()), 0.0);
  for (RowIndex r : rows) {
    const auto& g = ds.group(r);
    if (!g) throw std::invalid_argument("empirical_marginal: row without group label");
    p[static_cast<std::size_t>(*g)] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(rows.size());
  return p;
}

int sample_group(const ConditionalGroupTable& table, int y, SeededRng& rng) {
  if (y < 0 || static_cast<std::size_t>(y) >= table.num_classes())
    throw std::invalid_argument("sample_group: class index out of range");
  if (table.row_empty(y))
    throw EmptyConditionalError("sample_group: no group-labeled rows for class " + std::to_string(y));
  return static_cast<int>(rng.categorical(table.row(y)));
}

int sample_group_or_marginal(const ConditionalGroupTable& table,
                             std::span<const double> marginal, int y, SeededRng& rng) {
  if (!table.row_empty(y)) return sample_group(table, y, rng);
  return static_cast<int>(rng.categorical(marginal));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view cell, std::size_t line_no, const char* what) {
  T value{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("dataset csv line " + std::to_string(line_no) + ": bad " + what +
                                " '" + std::string(cell) + "'");
  }
  return value;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, int num_classes, int num_groups) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 3 || header[header.size() - 2] != "target" || header.back() != "group")
    throw std::invalid_argument("dataset csv: header must end with target,group");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "feature_" + std::to_string(j))
      throw std::invalid_argument("dataset csv: expected column feature_" + std::to_string(j));
  }

  std::vector<double> values;
  std::vector<int> targets;
  std::vector<std::optional<int>> groups;
  std::size_t line_no = 1;
  int max_target = -1;
  int max_group = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != d + 2)
      throw std::invalid_argument("dataset csv line " + std::to_string(line_no) +
                                  ": expected " + std::to_string(d + 2) + " cells");
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number<double>(cells[j], line_no, "feature"));
    const int t = parse_number<int>(cells[d], line_no, "target");
    if (t < 0) throw std::invalid_argument("dataset csv line " + std::to_string(line_no) + ": negative target");
    targets.push_back(t);
    max_target = std::max(max_target, t);
    if (cells[d + 1].empty()) {
      groups.emplace_back(std::nullopt);
    } else {
      const int g = parse_number<int>(cells[d + 1], line_no, "group");
      if (g < 0) throw std::invalid_argument("dataset csv line " + std::to_string(line_no) + ": negative group");
      groups.emplace_back(g);
      max_group = std::max(max_group, g);
    }
  }
  if (targets.empty()) throw std::invalid_argument("dataset csv: no data rows");
  Matrix features(targets.size(), d);
  features.data = std::move(values);
  const int M = num_classes > 0 ? num_classes : std::max(max_target + 1, 1);
  const int N = num_groups > 0 ? num_groups : std::max(max_group + 1, 1);
  return Dataset(std::move(features), std::move(targets), std::move(groups), M, N);
}

Dataset read_dataset_csv(const std::string& path, int num_classes, int num_groups) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset csv: " + path);
  return read_dataset_csv(in, num_classes, num_groups);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dim(); ++j) out << "feature_" << j << ',';
  out << "target,group\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out.write(buf, ptr - buf);
      out << ',';
    }
    out << ds.target(i) << ',';
    if (ds.group(i)) out << *ds.group(i);
    out << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset csv: " + path);
  write_dataset_csv(out, ds);
}

}  // namespace fairpg
