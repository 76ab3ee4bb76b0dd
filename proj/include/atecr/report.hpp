#pragma once

#include <string>
#include <vector>

#include "atecr/csv.hpp"
#include "atecr/errors.hpp"
#include "atecr/sim.hpp"
#include "json.hpp"

namespace atecr {

// CSV with one row per (scenario, n, method, time) cell; band rows carry the
// literal time value "band". Numbers use 17 significant digits so a rerun
// with the same seed is byte-identical.
inline std::string emit_report_csv(const CoverageReport& report) {
  std::string out = "scenario,n,method,time,coverage,mc_se,mean_width,elapsed_ms\n";
  for (const auto& c : report.cells) {
    out += c.scenario;
    out += ',' + std::to_string(c.n);
    out += ',' + c.method;
    out += ',';
    out += c.is_band ? "band" : format_double(c.time);
    out += ',' + format_double(c.coverage);
    out += ',' + format_double(c.mc_se);
    out += ',' + format_double(c.mean_width);
    out += ',' + format_double(c.elapsed_ms);
    out += '\n';
  }
  return out;
}

inline std::string emit_report_json(const CoverageReport& report) {
  nlohmann::ordered_json j;
  j["attempted_replications"] = report.attempted_replications;
  j["failed_replications"] = report.failed_replications;
  j["diagnostics"] = report.diagnostics;
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json cell;
    cell["scenario"] = c.scenario;
    cell["n"] = c.n;
    cell["method"] = c.method;
    if (c.is_band) {
      cell["time"] = "band";
    } else {
      cell["time"] = c.time;
    }
    cell["coverage"] = c.coverage;
    cell["mc_se"] = c.mc_se;
    cell["mean_width"] = c.mean_width;
    cell["elapsed_ms"] = c.elapsed_ms;
    j["cells"].push_back(cell);
  }
  return j.dump(2) + "\n";
}

inline CoverageReport parse_report_csv(const std::string& text) {
  CsvTable table = read_csv(text);
  const std::vector<std::string> expected = {"scenario", "n",     "method",     "time",
                                             "coverage", "mc_se", "mean_width", "elapsed_ms"};
  if (table.header != expected) throw SchemaError("unexpected coverage-report header");
  CoverageReport report;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != expected.size()) {
      throw ParseError("coverage-report row " + std::to_string(i) + " has " +
                       std::to_string(row.size()) + " cells");
    }
    CoverageCell c;
    c.scenario = row[0];
    c.n = static_cast<std::size_t>(parse_double_cell(row[1], i, "n"));
    c.method = row[2];
    if (row[3] == "band") {
      c.is_band = true;
    } else {
      c.time = parse_double_cell(row[3], i, "time");
    }
    c.coverage = parse_double_cell(row[4], i, "coverage");
    c.mc_se = parse_double_cell(row[5], i, "mc_se");
    c.mean_width = parse_double_cell(row[6], i, "mean_width");
    c.elapsed_ms = parse_double_cell(row[7], i, "elapsed_ms");
    report.cells.push_back(std::move(c));
  }
  return report;
}

// JSON study configuration. Unknown keys are rejected to catch typos.
inline StudyConfig parse_study_config(const nlohmann::json& j) {
  auto check_keys = [](const nlohmann::json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const auto& k : allowed) ok = ok || it.key() == k;
      if (!ok) throw SchemaError("unknown key '" + it.key() + "' in " + where);
    }
  };

  StudyConfig s;
  check_keys(j, {"scenario", "scenario_label", "sample_sizes", "replications", "methods",
                 "report_times", "band_interval", "alpha", "B_ebs", "B_if", "B_wbs",
                 "master_seed", "oracle_n", "oracle_reps", "workers", "record_wallclock"},
             "study config");
  if (j.contains("scenario")) {
    const auto& sc = j.at("scenario");
    check_keys(sc, {"beta_1a", "alpha_0", "normal_covariate_sd", "censoring_scale", "type2",
                    "min_events_per_cause"},
               "scenario");
    const ScenarioConfig defaults;
    s.scenario.beta_1a = sc.value("beta_1a", defaults.beta_1a);
    s.scenario.alpha_0 = sc.value("alpha_0", defaults.alpha_0);
    s.scenario.normal_covariate_sd = sc.value("normal_covariate_sd", defaults.normal_covariate_sd);
    s.scenario.censoring_scale = sc.value("censoring_scale", defaults.censoring_scale);
    s.scenario.min_events_per_cause = sc.value("min_events_per_cause", 10);
    if (sc.contains("type2")) {
      const auto& t2 = sc.at("type2");
      check_keys(t2, {"target_event_count", "entry_horizon"}, "type2");
      Type2Settings cfg;
      cfg.target_event_count = t2.value("target_event_count", 0);
      cfg.entry_horizon = t2.value("entry_horizon", 1.0);
      s.scenario.type2 = cfg;
    }
  }
  s.scenario_label = j.value("scenario_label", std::string("default"));
  if (j.contains("sample_sizes")) {
    s.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
  }
  s.replications = j.value("replications", s.replications);
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : j.at("methods")) {
      const std::string name = m.get<std::string>();
      bool found = false;
      for (const auto& spec : all_methods()) {
        if (spec.label() == name) {
          s.methods.push_back(spec);
          found = true;
        }
      }
      if (!found) throw SchemaError("unknown method '" + name + "'");
    }
  }
  if (j.contains("report_times")) {
    s.report_times = j.at("report_times").get<std::vector<double>>();
  }
  if (j.contains("band_interval")) {
    const auto iv = j.at("band_interval").get<std::vector<double>>();
    if (iv.size() != 2) throw SchemaError("band_interval must be [t1, t2]");
    s.band_t1 = iv[0];
    s.band_t2 = iv[1];
  }
  s.alpha = j.value("alpha", s.alpha);
  s.B_ebs = j.value("B_ebs", s.B_ebs);
  s.B_if = j.value("B_if", s.B_if);
  s.B_wbs = j.value("B_wbs", s.B_wbs);
  s.master_seed = j.value("master_seed", s.master_seed);
  s.oracle_n = j.value("oracle_n", s.oracle_n);
  s.oracle_reps = j.value("oracle_reps", s.oracle_reps);
  s.workers = j.value("workers", s.workers);
  s.record_wallclock = j.value("record_wallclock", s.record_wallclock);
  return s;
}

}  // namespace atecr
