#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fairpg/harness.hpp"

namespace fairpg::harness {

std::string format_cell(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f (±%.2f)", 100.0 * mean, 100.0 * std);
  return buf;
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string ratio_label(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g%%", 100.0 * r);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Static line plot with a legend; x and y ranges come from the data.
std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series, bool reverse_x = false) {
  const double W = 640, H = 420, L = 70, Rm = 190, T = 40, B = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto sx = [&](double x) {
    double t = (x - xmin) / (xmax - xmin);
    if (reverse_x) t = 1.0 - t;
    return L + t * (W - L - Rm);
  };
  auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
    << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - Rm << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
    const double x = xmin + (xmax - xmin) * k / 4.0;
    o << "<text x=\"" << sx(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - Rm) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << escape_xml(xlabel)
    << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\">" << escape_xml(ylabel) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    auto pts = series[i].points;
    std::sort(pts.begin(), pts.end());
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) o << sx(x) << ',' << sy(y) << ' ';
    o << "\"/>\n";
    for (auto [x, y] : pts) o << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i);
    o << "<line x1=\"" << W - Rm + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - Rm + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - Rm + 38 << "\" y=\"" << ly + 4 << "\">" << escape_xml(series[i].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string histogram_plot(const std::string& title, const std::vector<std::pair<std::string, Histogram>>& hists) {
  const double W = 640, H = 360, L = 60, Rm = 170, T = 40, B = 50;
  std::size_t buckets = 0;
  long peak = 1;
  double width = 0.05;
  for (const auto& [name, h] : hists) {
    buckets = std::max(buckets, h.counts.size());
    width = h.bucket_width;
    for (long c : h.counts) peak = std::max(peak, c);
  }
  if (buckets == 0) buckets = 1;
  const double plot_w = W - L - Rm, plot_h = H - T - B;
  const double slot = plot_w / static_cast<double>(buckets);
  const double bar = slot / static_cast<double>(std::max<std::size_t>(1, hists.size()));

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
    << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - Rm << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < hists.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const auto& h = hists[i].second;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const double hgt = plot_h * static_cast<double>(h.counts[b]) / static_cast<double>(peak);
      o << "<rect x=\"" << L + slot * static_cast<double>(b) + bar * static_cast<double>(i) << "\" y=\""
        << H - B - hgt << "\" width=\"" << bar << "\" height=\"" << hgt << "\" fill=\"" << color << "\"/>\n";
    }
    const double ly = T + 16.0 * static_cast<double>(i);
    o << "<rect x=\"" << W - Rm + 12 << "\" y=\"" << ly - 6 << "\" width=\"12\" height=\"12\" fill=\"" << color
      << "\"/>\n";
    o << "<text x=\"" << W - Rm + 30 << "\" y=\"" << ly + 4 << "\">" << escape_xml(hists[i].first) << "</text>\n";
  }
  for (std::size_t b = 0; b <= buckets; b += 4) {
    o << "<text x=\"" << L + slot * static_cast<double>(b) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
      << fmt(width * static_cast<double>(b)) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - Rm) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">max g(x)</text>\n";
  o << "<text x=\"" << L - 8 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << peak << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string method_label(const std::string& trainer, const std::string& policy) { return trainer + "/" + policy; }

}  // namespace

std::vector<std::filesystem::path> emit_report(const SweepResult& r, const std::set<std::string>& formats,
                                               const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  write_file(dir / "sweep.json", to_json(r).dump(2) + "\n");
  written.push_back(dir / "sweep.json");

  // Methods in first-seen order.
  std::vector<std::pair<std::string, std::string>> methods;
  for (const auto& a : r.aggregates) {
    std::pair<std::string, std::string> m{a.trainer, a.policy};
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  std::vector<double> scratch_acc, scratch_dm, scratch_da;
  for (const auto& [seed, rep] : r.scratch) {
    scratch_acc.push_back(rep.accuracy);
    scratch_dm.push_back(rep.delta_m);
    scratch_da.push_back(rep.delta_a);
  }

  struct Metric {
    const char* name;
    double Aggregate::*mean;
    double Aggregate::*sd;
    const std::vector<double>* scratch;
  };
  const Metric metrics[] = {{"accuracy", &Aggregate::accuracy_mean, &Aggregate::accuracy_std, &scratch_acc},
                            {"delta_m", &Aggregate::delta_m_mean, &Aggregate::delta_m_std, &scratch_dm},
                            {"delta_a", &Aggregate::delta_a_mean, &Aggregate::delta_a_std, &scratch_da}};

  if (formats.count("csv")) {
    for (const auto& m : metrics) {
      std::ostringstream o;
      o << "method";
      for (double ratio : r.ratios) o << ',' << ratio_label(ratio);
      o << '\n';
      if (!m.scratch->empty()) {
        auto [mu, sd] = mean_and_std(*m.scratch);
        o << "scratch";
        for (std::size_t j = 0; j < r.ratios.size(); ++j) o << ',' << csv_field(format_cell(mu, sd));
        o << '\n';
      }
      for (const auto& [trainer, policy] : methods) {
        o << csv_field(method_label(trainer, policy));
        for (double ratio : r.ratios) {
          const Aggregate* a = r.find(ratio, policy, trainer);
          o << ',';
          if (a && a->n > 0) o << csv_field(format_cell(a->*m.mean, a->*m.sd));
        }
        o << '\n';
      }
      const auto path = dir / (std::string(m.name) + ".csv");
      write_file(path, o.str());
      written.push_back(path);
    }
  }

  if (formats.count("svg")) {
    std::vector<std::string> trainers;
    for (const auto& [t, p] : methods) {
      if (std::find(trainers.begin(), trainers.end(), t) == trainers.end()) trainers.push_back(t);
    }
    for (const auto& trainer : trainers) {
      for (const auto& m : metrics) {
        if (std::string(m.name) == "delta_a") continue;
        std::vector<Series> series;
        for (const auto& [t, policy] : methods) {
          if (t != trainer) continue;
          Series s{policy, {}};
          for (double ratio : r.ratios) {
            const Aggregate* a = r.find(ratio, policy, trainer);
            if (a && a->n > 0) s.points.emplace_back(100.0 * ratio, 100.0 * (a->*m.mean));
          }
          series.push_back(std::move(s));
        }
        const std::string ylabel = std::string(m.name) == "accuracy" ? "accuracy (%)" : "delta_m (%)";
        const auto path = dir / (std::string(m.name) + "_vs_ratio_" + trainer + ".svg");
        write_file(path, line_plot(trainer + ": " + m.name + " vs group-label ratio", "group-label ratio (%)",
                                   ylabel, series, true));
        written.push_back(path);
      }
    }

    // Confidence histogram at the smallest ratio, summed over seeds.
    if (!r.ratios.empty()) {
      const double low = *std::min_element(r.ratios.begin(), r.ratios.end());
      Histogram val, unl;
      std::set<std::uint64_t> seen;
      for (const auto& c : r.cells) {
        if (c.ratio != low || c.diagnostics.is_null() || !seen.insert(c.seed).second) continue;
        auto add = [](Histogram& h, const nlohmann::json& j) {
          const auto counts = j.at("counts").get<std::vector<long>>();
          h.bucket_width = j.at("bucket_width").get<double>();
          if (h.counts.size() < counts.size()) h.counts.resize(counts.size(), 0);
          for (std::size_t b = 0; b < counts.size(); ++b) h.counts[b] += counts[b];
        };
        add(val, c.diagnostics.at("validation_histogram"));
        add(unl, c.diagnostics.at("unlabeled_histogram"));
      }
      if (!seen.empty()) {
        const auto path = dir / "confidence_histogram.svg";
        write_file(path, histogram_plot("group classifier confidence at ratio " + ratio_label(low),
                                        {{"validation split", val}, {"group-unlabeled", unl}}));
        written.push_back(path);
      }
    }
  }
  return written;
}

std::vector<std::filesystem::path> emit_tau_report(const TauStudyResult& r, const std::set<std::string>& formats,
                                                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  write_file(dir / "tau_study.json", to_json(r).dump(2) + "\n");
  written.push_back(dir / "tau_study.json");

  if (formats.count("csv")) {
    std::ostringstream o;
    o << "tau,accuracy,delta_m,randomized_fraction\n";
    for (const auto& p : r.points) {
      auto [rf, rs] = mean_and_std(p.randomized_fraction);
      (void)rs;
      o << p.tau << ',' << csv_field(format_cell(p.accuracy_mean, p.accuracy_std)) << ','
        << csv_field(format_cell(p.delta_m_mean, p.delta_m_std)) << ',' << rf << '\n';
    }
    o << "pseudo_label," << csv_field(format_cell(r.pseudo_label.accuracy_mean, r.pseudo_label.accuracy_std)) << ','
      << csv_field(format_cell(r.pseudo_label.delta_m_mean, r.pseudo_label.delta_m_std)) << ",0\n";
    o << "random_label," << csv_field(format_cell(r.random_label.accuracy_mean, r.random_label.accuracy_std)) << ','
      << csv_field(format_cell(r.random_label.delta_m_mean, r.random_label.delta_m_std)) << ",1\n";
    write_file(dir / "tau_study.csv", o.str());
    written.push_back(dir / "tau_study.csv");
  }
  if (formats.count("svg")) {
    Series acc{"accuracy", {}}, dm{"delta_m", {}};
    for (const auto& p : r.points) {
      acc.points.emplace_back(p.tau, 100.0 * p.accuracy_mean);
      dm.points.emplace_back(p.tau, 100.0 * p.delta_m_mean);
    }
    write_file(dir / "tau_accuracy.svg", line_plot(r.trainer + ": accuracy vs tau", "tau", "accuracy (%)", {acc}));
    write_file(dir / "tau_delta_m.svg", line_plot(r.trainer + ": delta_m vs tau", "tau", "delta_m (%)", {dm}));
    written.push_back(dir / "tau_accuracy.svg");
    written.push_back(dir / "tau_delta_m.svg");
  }
  return written;
}

}  // namespace fairpg::harness
