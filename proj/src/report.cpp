#include "seqfront/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace seqfront {

namespace {

std::string fmt(double v, const char* spec = "%.3f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "report: cannot open " + path);
  f << body;
  require(f.good(), "report: short write to " + path);
}

}  // namespace

std::string render_ablation_table(const AblationReport& rep) {
  size_t w_model = 5, w_feat = 8;
  for (const auto& r : rep.rows) {
    w_model = std::max(w_model, r.model.size());
    w_feat = std::max(w_feat, r.features.size());
  }
  std::ostringstream out;
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w - s.size() + 2, ' ');
  };
  out << pad("model", w_model) << pad("features", w_feat) << "  PER%   WAccP%   WAcc%\n";
  for (const auto& r : rep.rows) {
    out << pad(r.model, w_model) << pad(r.features, w_feat) << fmt(r.per, "%6.3f") << " "
        << fmt(r.waccp, "%7.2f") << " " << fmt(r.wacc, "%7.2f") << "\n";
  }
  out << "\nmetrics: extra-exclusive word category; PER micro-averaged over pooled phones\n";
  out << "p (MTL vs full baseline, paired bootstrap over word tokens): "
      << fmt(rep.p_mtl_vs_baseline, "%.4f") << "\n";
  return out.str();
}

void write_ablation_tsv(const std::string& path, const AblationReport& rep) {
  std::ostringstream out;
  out << "model\tfeatures\tper\twaccp\twacc\n";
  for (const auto& r : rep.rows)
    out << r.model << "\t" << r.features << "\t" << fmt(r.per, "%.6g") << "\t"
        << fmt(r.waccp, "%.6g") << "\t" << fmt(r.wacc, "%.6g") << "\n";
  write_text(path, out.str());
}

namespace {

void eval_rows(const EvalReport& rep,
               const std::function<void(const std::string&, const CategoryStats&)>& emit) {
  emit("all", rep.all);
  for (const auto& [cat, s] : rep.by_category) emit(to_string(cat), s);
}

}  // namespace

std::string render_eval_table(const EvalReport& rep) {
  std::ostringstream out;
  out << "category         words    PER%   WAccP%   WAcc%\n";
  eval_rows(rep, [&](const std::string& name, const CategoryStats& s) {
    out << name << std::string(name.size() < 16 ? 16 - name.size() : 1, ' ')
        << fmt(double(s.words), "%6.0f") << " " << fmt(s.per(), "%7.3f") << " "
        << fmt(s.waccp(), "%7.2f") << " " << fmt(s.wacc(), "%7.2f") << "\n";
  });
  return out.str();
}

void write_eval_tsv(const std::string& path, const EvalReport& rep) {
  std::ostringstream out;
  out << "category\twords\tref_phones\tedits\tper\twaccp\twacc\n";
  eval_rows(rep, [&](const std::string& name, const CategoryStats& s) {
    out << name << "\t" << s.words << "\t" << s.ref_phones << "\t" << s.edits << "\t"
        << fmt(s.per(), "%.6g") << "\t" << fmt(s.waccp(), "%.6g") << "\t"
        << fmt(s.wacc(), "%.6g") << "\n";
  });
  write_text(path, out.str());
}

namespace {

nlohmann::json stats_json(const CategoryStats& s) {
  return {{"words", s.words},
          {"ref_phones", s.ref_phones},
          {"edits", s.edits},
          {"phone_correct", s.phone_correct},
          {"full_correct", s.full_correct}};
}

CategoryStats stats_from(const nlohmann::json& j) {
  CategoryStats s;
  s.words = j.at("words").get<long>();
  s.ref_phones = j.at("ref_phones").get<long>();
  s.edits = j.at("edits").get<long>();
  s.phone_correct = j.at("phone_correct").get<long>();
  s.full_correct = j.at("full_correct").get<long>();
  return s;
}

WordCategory category_from(const std::string& name) {
  for (WordCategory c : {WordCategory::main_covered, WordCategory::extra_exclusive,
                         WordCategory::oov}) {
    if (to_string(c) == name) return c;
  }
  throw InvalidInputError("report: unknown word category '" + name + "'");
}

}  // namespace

void write_ablation_json(const std::string& path, const AblationReport& rep) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows)
    j["rows"].push_back({{"model", r.model},
                         {"features", r.features},
                         {"per", r.per},
                         {"waccp", r.waccp},
                         {"wacc", r.wacc}});
  j["p_mtl_vs_baseline"] = rep.p_mtl_vs_baseline;
  nlohmann::json full = nlohmann::json::object();
  for (const auto& [name, er] : rep.full) {
    nlohmann::json e;
    e["all"] = stats_json(er.all);
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [cat, s] : er.by_category) cats[to_string(cat)] = stats_json(s);
    e["by_category"] = cats;
    full[name] = e;
  }
  j["full"] = full;
  write_text(path, j.dump(2) + "\n");
}

AblationReport read_ablation_json(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "report: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("report: malformed JSON in " + path + ": " + e.what());
  }
  AblationReport rep;
  try {
    for (const auto& r : j.at("rows")) {
      AblationRow row;
      row.model = r.at("model").get<std::string>();
      row.features = r.at("features").get<std::string>();
      row.per = r.at("per").get<double>();
      row.waccp = r.at("waccp").get<double>();
      row.wacc = r.at("wacc").get<double>();
      rep.rows.push_back(std::move(row));
    }
    rep.p_mtl_vs_baseline = j.at("p_mtl_vs_baseline").get<double>();
    for (const auto& [name, e] : j.at("full").items()) {
      EvalReport er;
      er.all = stats_from(e.at("all"));
      for (const auto& [cat, s] : e.at("by_category").items())
        er.by_category[category_from(cat)] = stats_from(s);
      rep.full[name] = std::move(er);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("report: missing field in " + path + ": " + e.what());
  }
  return rep;
}

namespace {

// Fixed 720x420 canvas with a 70/25px margin box; crude but dependency-free.
constexpr double kW = 720, kH = 420, kL = 70, kR = 25, kT = 40, kB = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string svg_head(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"monospace\""
    << " font-size=\"14\">" << title << "</text>\n";
  return s.str();
}

struct Scale {
  double lo = 0, hi = 1, px0 = 0, px1 = 1;
  double operator()(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

void axis_ticks(std::ostringstream& s, const Scale& sc, bool vertical, double cross) {
  const double span = sc.hi - sc.lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  for (double v = std::ceil(sc.lo / step) * step; v <= sc.hi + 1e-9; v += step) {
    const double p = sc(v);
    if (vertical) {
      s << "<line x1=\"" << cross - 4 << "\" y1=\"" << p << "\" x2=\"" << cross << "\" y2=\""
        << p << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << cross - 8 << "\" y=\"" << p + 4
        << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">"
        << fmt(v, "%g") << "</text>\n";
    } else {
      s << "<line x1=\"" << p << "\" y1=\"" << cross << "\" x2=\"" << p << "\" y2=\""
        << cross + 4 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << p << "\" y=\"" << cross + 18
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
        << fmt(v, "%g") << "</text>\n";
    }
  }
}

}  // namespace

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series) {
  require(!series.empty(), "plot: no series");
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  }
  require(xlo <= xhi, "plot: no points");
  if (xlo == xhi) xhi = xlo + 1;
  if (ylo == yhi) yhi = ylo + 1;
  ylo = std::min(ylo, 0.0);
  const Scale sx{xlo, xhi, kL, kW - kR};
  const Scale sy{ylo, yhi, kH - kB, kT};

  std::ostringstream s;
  s << svg_head(title);
  s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
    << kH - kB << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  axis_ticks(s, sx, false, kH - kB);
  axis_ticks(s, sy, true, kL);
  s << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">" << x_label
    << "</text>\n";
  s << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2
    << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" transform=\""
    << "rotate(-90 16 " << (kT + kH - kB) / 2 << ")\">" << y_label << "</text>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    if (series[i].points.empty()) continue;
    s << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 8]
      << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : series[i].points) s << fmt(sx(x), "%.1f") << "," << fmt(sy(y), "%.1f") << " ";
    s << "\"/>\n";
    const double ly = kT + 16 + 16 * double(i);
    s << "<line x1=\"" << kW - kR - 150 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR - 130
      << "\" y2=\"" << ly << "\" stroke=\"" << kPalette[i % 8] << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << kW - kR - 124 << "\" y=\"" << ly + 4
      << "\" font-family=\"monospace\" font-size=\"11\">" << series[i].name << "</text>\n";
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

std::vector<Series> curve_series(const std::vector<CurveRow>& rows) {
  std::vector<Series> out(3);
  out[0].name = "L_p";
  out[1].name = "L_MTL";
  out[2].name = "val metric";
  for (const auto& r : rows) {
    out[0].points.push_back({double(r.step), r.lp});
    out[1].points.push_back({double(r.step), r.lmtl});
    if (r.has_val) out[2].points.push_back({double(r.step), r.val_metric});
  }
  if (out[2].points.empty()) out.pop_back();
  return out;
}

std::vector<CurveRow> read_curves(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "report: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), "report: empty curve file " + path);
  std::vector<CurveRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
      size_t tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    require(cells.size() == 5, "report: bad curve row '" + line + "'");
    CurveRow r;
    r.step = std::stol(cells[0]);
    r.lp = std::stod(cells[1]);
    r.la = std::stod(cells[2]);
    r.lmtl = std::stod(cells[3]);
    if (!cells[4].empty()) {
      r.val_metric = std::stod(cells[4]);
      r.has_val = true;
    }
    rows.push_back(r);
  }
  return rows;
}

void write_bar_svg(const std::string& path, const std::string& title,
                   const std::vector<std::string>& series_names,
                   const std::vector<BarGroup>& groups) {
  require(!series_names.empty() && !groups.empty(), "plot: empty bar chart");
  double hi = 0;
  for (const auto& g : groups) {
    require(g.values.size() == series_names.size(), "plot: ragged bar group");
    for (double v : g.values) hi = std::max(hi, v);
  }
  if (hi == 0) hi = 1;
  const Scale sy{0, hi * 1.1, kH - kB, kT};
  const double span = (kW - kL - kR) / double(groups.size());
  const double bar = span * 0.8 / double(series_names.size());

  std::ostringstream s;
  s << svg_head(title);
  s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
    << kH - kB << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n";
  axis_ticks(s, sy, true, kL);
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const double gx = kL + span * (double(gi) + 0.1);
    for (size_t si = 0; si < series_names.size(); ++si) {
      const double v = groups[gi].values[si];
      const double y = sy(v);
      s << "<rect x=\"" << fmt(gx + bar * double(si), "%.1f") << "\" y=\"" << fmt(y, "%.1f")
        << "\" width=\"" << fmt(bar * 0.9, "%.1f") << "\" height=\""
        << fmt(kH - kB - y, "%.1f") << "\" fill=\"" << kPalette[si % 8] << "\"/>\n";
      s << "<text x=\"" << fmt(gx + bar * (double(si) + 0.45), "%.1f") << "\" y=\""
        << fmt(y - 3, "%.1f")
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"9\">"
        << fmt(v, "%.2f") << "</text>\n";
    }
    s << "<text x=\"" << fmt(gx + bar * double(series_names.size()) / 2, "%.1f") << "\" y=\""
      << kH - kB + 18 << "\" text-anchor=\"middle\" font-family=\"monospace\""
      << " font-size=\"11\">" << groups[gi].label << "</text>\n";
  }
  for (size_t si = 0; si < series_names.size(); ++si) {
    const double ly = kT + 16 + 16 * double(si);
    s << "<rect x=\"" << kW - kR - 150 << "\" y=\"" << ly - 8
      << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[si % 8] << "\"/>\n"
      << "<text x=\"" << kW - kR - 132 << "\" y=\"" << ly + 3
      << "\" font-family=\"monospace\" font-size=\"11\">" << series_names[si] << "</text>\n";
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

std::vector<BarGroup> category_bars(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::vector<BarGroup> groups;
  for (WordCategory c : {WordCategory::main_covered, WordCategory::extra_exclusive,
                         WordCategory::oov}) {
    BarGroup g;
    g.label = to_string(c);
    bool any = false;
    for (const auto& [name, er] : reports) {
      auto it = er.by_category.find(c);
      g.values.push_back(it != er.by_category.end() ? it->second.per() : 0.0);
      any = any || it != er.by_category.end();
    }
    if (any) groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace seqfront
