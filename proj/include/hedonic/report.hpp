#pragma once

#include "hedonic/evaluation.hpp"
#include "hedonic/serialization.hpp"

#include <cstdio>
#include <sstream>

namespace hedonic {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string format_improvement(double baseline, double best) {
  const double pct = (1.0 - best / baseline) * 100.0;
  return pct >= 0.0 ? fixed(pct, 1) + "% improvement" : fixed(-pct, 1) + "% worse";
}

inline std::string column_title(const std::string& column) {
  if (column == "penalized_ols") return "Penalized OLS";
  if (column == "neural_network") return "Neural Network";
  if (column == "convoluted_no_att_p") return "Convoluted - no attributes in p~";
  if (column == "convoluted_att_p") return "Convoluted - attributes in p~";
  return column;
}

inline std::string row_title(const std::string& row) {
  if (row == "attributes") return "Attributes";
  if (row == "images") return "Images";
  if (row == "attributes+images") return "Attributes + Images";
  return row;
}

inline Json to_json(const EvaluationReport& report) {
  Json j;
  j["k"] = report.k;
  j["seed"] = report.seed;
  Json specs = Json::array();
  for (const auto& r : report.per_spec) {
    Json s;
    s["key"] = r.spec.key();
    s["spec"] = to_json(r.spec);
    s["method_column"] = method_column(r.spec);
    s["input_set"] = input_set(r.spec);
    s["mse"] = r.ok() ? Json(r.mse) : Json(nullptr);
    s["fold_mses"] = r.ok() ? Json(r.fold_mses) : Json(nullptr);
    s["error"] = r.error ? Json(*r.error) : Json(nullptr);
    specs.push_back(s);
  }
  j["per_spec"] = specs;
  Json cells = Json::array();
  for (const auto& c : report.aggregates)
    cells.push_back({{"method_column", c.method_column},
                     {"input_set", c.input_set},
                     {"min", c.min},
                     {"mean", c.mean},
                     {"max", c.max},
                     {"tout", c.tout ? Json(*c.tout) : Json(nullptr)},
                     {"n_specs", c.n_specs}});
  j["aggregates"] = cells;
  Json panels = Json::array();
  for (const auto& p : report.panels)
    panels.push_back({{"panel", p.panel},
                      {"combo", p.combo},
                      {"beta", p.beta},
                      {"se_clustered", p.se_clustered},
                      {"p_value", p.p_value},
                      {"r_squared", p.r_squared},
                      {"n", p.n}});
  j["panels"] = panels;
  return j;
}

inline EvaluationReport report_from_json(const Json& j) {
  EvaluationReport report;
  try {
    report.k = j.at("k").get<int>();
    report.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("per_spec")) {
      SpecResult r;
      r.spec = model_spec_from_json(s.at("spec"));
      if (!s.at("error").is_null()) r.error = s.at("error").get<std::string>();
      if (!s.at("mse").is_null()) r.mse = s.at("mse").get<double>();
      if (!s.at("fold_mses").is_null()) r.fold_mses = s.at("fold_mses").get<std::vector<double>>();
      report.per_spec.push_back(std::move(r));
    }
    for (const auto& c : j.at("aggregates")) {
      AggregateCell cell;
      cell.method_column = c.at("method_column").get<std::string>();
      cell.input_set = c.at("input_set").get<std::string>();
      cell.min = c.at("min").get<double>();
      cell.mean = c.at("mean").get<double>();
      cell.max = c.at("max").get<double>();
      if (!c.at("tout").is_null()) cell.tout = c.at("tout").get<double>();
      cell.n_specs = c.at("n_specs").get<int>();
      report.aggregates.push_back(cell);
    }
    for (const auto& p : j.at("panels")) {
      PanelResult r;
      r.panel = p.at("panel").get<int>();
      r.combo = p.at("combo").get<std::string>();
      r.beta = p.at("beta").get<double>();
      r.se_clustered = p.at("se_clustered").get<double>();
      r.p_value = p.at("p_value").get<double>();
      r.r_squared = p.at("r_squared").get<double>();
      r.n = p.at("n").get<Index>();
      report.panels.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return report;
}

namespace detail {

inline const AggregateCell* find_cell(const EvaluationReport& report, const std::string& column,
                                      const std::string& row) {
  for (const auto& c : report.aggregates)
    if (c.method_column == column && c.input_set == row) return &c;
  return nullptr;
}

inline std::string render_cell(const AggregateCell* cell) {
  if (!cell) return "MSE: --";
  if (cell->input_set == "attributes" || cell->n_specs == 1) {
    const std::string line = "MSE: " + fixed(cell->mean);
    return cell->tout ? "**" + line + "**" : line;
  }
  const auto line = [&](const char* label, double v, bool bold) {
    const std::string text = std::string(label) + " MSE: " + fixed(v);
    return bold ? "**" + text + "**" : text;
  };
  const bool tout_min = cell->tout && *cell->tout == cell->min;
  const bool tout_max = cell->tout && !tout_min && *cell->tout == cell->max;
  std::string out = line("Min", cell->min, tout_min) + "<br>" + line("Mean", cell->mean, false) + "<br>" +
                    line("Max", cell->max, tout_max);
  if (cell->tout && !tout_min && !tout_max) out += "<br>" + line("Tout", *cell->tout, true);
  return out;
}

}  // namespace detail

/// Markdown grid of min/mean/max MSE per input set and method, with the
/// tout-ensemble value in bold, followed by improvements over the
/// attributes-only penalized OLS baseline.
inline std::string summary_table(const EvaluationReport& report) {
  std::vector<std::string> columns;
  for (const auto& c : method_columns())
    for (const auto& cell : report.aggregates)
      if (cell.method_column == c) {
        columns.push_back(c);
        break;
      }
  std::vector<std::string> rows;
  for (const auto& r : input_sets())
    for (const auto& cell : report.aggregates)
      if (cell.input_set == r && std::find(columns.begin(), columns.end(), cell.method_column) != columns.end()) {
        rows.push_back(r);
        break;
      }

  std::ostringstream out;
  out << "| Inputs |";
  for (const auto& c : columns) out << ' ' << column_title(c) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << row_title(r) << " |";
    for (const auto& c : columns) out << ' ' << detail::render_cell(detail::find_cell(report, c, r)) << " |";
    out << '\n';
  }

  const auto* baseline = detail::find_cell(report, "penalized_ols", "attributes");
  if (baseline) {
    bool header = false;
    for (const auto& c : columns) {
      const auto* cell = detail::find_cell(report, c, "attributes+images");
      if (!cell) continue;
      if (!header) {
        out << "\nBest attributes + images MSE against attributes-only penalized OLS (MSE " << fixed(baseline->mean)
            << "):\n";
        header = true;
      }
      out << "- " << column_title(c) << ": " << fixed(cell->min) << ", "
          << format_improvement(baseline->mean, cell->min) << '\n';
    }
  }
  return out.str();
}

inline void write_table2_csv(const std::filesystem::path& path, const EvaluationReport& report) {
  csv::Writer out(path);
  out.row({"method", "inputs", "min_mse", "mean_mse", "max_mse", "tout_mse", "n_specs"});
  for (const auto& c : report.aggregates)
    out.row({c.method_column, c.input_set, csv::format_double(c.min), csv::format_double(c.mean),
             csv::format_double(c.max), c.tout ? csv::format_double(*c.tout) : "", std::to_string(c.n_specs)});
}

inline void write_table1_csv(const std::filesystem::path& path, const std::vector<PanelResult>& panels) {
  csv::Writer out(path);
  out.row({"panel", "combo", "beta", "se_clustered", "stars", "p_value", "r_squared", "n"});
  for (const auto& p : panels)
    out.row({std::to_string(p.panel), p.combo, csv::format_double(p.beta), csv::format_double(p.se_clustered),
             significance_stars(p.p_value), csv::format_double(p.p_value), csv::format_double(p.r_squared),
             std::to_string(p.n)});
}

inline std::string panel_title(int panel) {
  switch (panel) {
    case 1: return "Panel 1: No Attributes in Model, No Attributes in p~";
    case 2: return "Panel 2: No Attributes in Model, Attributes in p~";
    case 3: return "Panel 3: Attributes in Model, No Attributes in p~";
    case 4: return "Panel 4: Attributes in Model, Attributes in p~";
  }
  return "Panel";
}

inline std::string table1_markdown(const std::vector<PanelResult>& panels) {
  std::ostringstream out;
  for (int panel = 1; panel <= 4; ++panel) {
    bool any = false;
    for (const auto& p : panels) {
      if (p.panel != panel) continue;
      if (!any) {
        out << (panel > 1 ? "\n" : "") << "### " << panel_title(panel) << "\n\n";
        out << "| Combo | p~ coefficient | Clustered SE | R^2 | Observations |\n|---|---|---|---|---|\n";
        any = true;
      }
      out << "| " << p.combo << " | " << fixed(p.beta, 3) << significance_stars(p.p_value) << " | ("
          << fixed(p.se_clustered, 3) << ") | " << fixed(p.r_squared, 3) << " | " << p.n << " |\n";
    }
  }
  out << "\nRobust standard errors in parentheses, clustered on the property cluster. "
         "*** p<0.01, ** p<0.05, * p<0.1\n";
  return out.str();
}

}  // namespace hedonic
