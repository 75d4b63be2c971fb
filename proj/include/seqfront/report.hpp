#pragma once
// Report rendering: plain-text tables, TSV, a JSON bundle that round-trips,
// and dependency-free SVG plots (training curves, per-category bars).

#include <string>
#include <utility>
#include <vector>

#include "seqfront/experiment.hpp"

namespace seqfront {

std::string render_ablation_table(const AblationReport& rep);
void write_ablation_tsv(const std::string& path, const AblationReport& rep);

// Per-category block of one evaluation.
std::string render_eval_table(const EvalReport& rep);
void write_eval_tsv(const std::string& path, const EvalReport& rep);

// Full bundle including every per-category block, so `report` can re-render
// without re-running anything.
void write_ablation_json(const std::string& path, const AblationReport& rep);
AblationReport read_ablation_json(const std::string& path);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series);

// L_p, L_MTL and the validation metric from one training curve.
std::vector<Series> curve_series(const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves(const std::string& path);  // write_curves inverse

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series name
};

void write_bar_svg(const std::string& path, const std::string& title,
                   const std::vector<std::string>& series_names,
                   const std::vector<BarGroup>& groups);

// One group per word category, one PER bar per named report.
std::vector<BarGroup> category_bars(
    const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace seqfront
