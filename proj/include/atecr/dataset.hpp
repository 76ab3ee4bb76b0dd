#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "atecr/csv.hpp"
#include "atecr/errors.hpp"
#include "atecr/rng.hpp"

namespace atecr {

// One subject: observed time T∧C, failure cause (0 = censored), binary
// treatment indicator, baseline covariates and an optional case weight.
struct SubjectRecord {
  double time = 0.0;
  int cause = 0;
  int treated = 0;
  std::vector<double> covariates;
  double weight = 1.0;
};

class Dataset {
 public:
  Dataset(std::vector<SubjectRecord> records, int num_causes,
          std::vector<std::string> covariate_names)
      : records_(std::move(records)),
        num_causes_(num_causes),
        covariate_names_(std::move(covariate_names)) {
    if (records_.size() < 2) throw DomainError("dataset needs at least 2 records");
    if (num_causes_ < 1) throw DomainError("num_causes must be positive");
    const std::size_t p = covariate_names_.size();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!(r.time >= 0.0)) throw DomainError("negative time at record " + std::to_string(i));
      if (r.cause < 0 || r.cause > num_causes_) {
        throw DomainError("cause code " + std::to_string(r.cause) + " at record " +
                          std::to_string(i) + " outside {0,...," +
                          std::to_string(num_causes_) + "}");
      }
      if (r.covariates.size() != p) {
        throw DomainError("covariate vector length mismatch at record " + std::to_string(i));
      }
      if (!(r.weight > 0.0)) throw DomainError("non-positive weight at record " + std::to_string(i));
      if (r.treated != 0 && r.treated != 1) {
        throw DomainError("treated must be 0/1 at record " + std::to_string(i));
      }
    }
    time_order_.resize(records_.size());
    for (std::size_t i = 0; i < time_order_.size(); ++i) time_order_[i] = i;
    std::stable_sort(time_order_.begin(), time_order_.end(),
                     [&](std::size_t a, std::size_t b) { return records_[a].time < records_[b].time; });
    sorted_times_.reserve(records_.size());
    for (std::size_t i : time_order_) sorted_times_.push_back(records_[i].time);
  }

  const std::vector<SubjectRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  int num_causes() const { return num_causes_; }
  std::size_t num_covariates() const { return covariate_names_.size(); }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  // Record indices sorted by observed time, ascending (stable in file order).
  const std::vector<std::size_t>& time_order() const { return time_order_; }
  double max_time() const { return sorted_times_.empty() ? 0.0 : sorted_times_.back(); }

  // Y(t) = #{i : time_i >= t}.
  std::size_t risk_set_size(double t) const {
    if (t < 0.0) throw DomainError("risk_set_size: negative time");
    auto it = std::lower_bound(sorted_times_.begin(), sorted_times_.end(), t);
    return static_cast<std::size_t>(sorted_times_.end() - it);
  }

 private:
  std::vector<SubjectRecord> records_;
  int num_causes_;
  std::vector<std::string> covariate_names_;
  std::vector<std::size_t> time_order_;
  std::vector<double> sorted_times_;
};

struct ValidationReport {
  std::vector<double> tie_violations;
  std::vector<std::size_t> events_per_cause;  // index k-1 holds cause-k count
  bool min_event_threshold_met = false;
  std::vector<std::string> warnings;
};

inline ValidationReport validate(const Dataset& ds, std::size_t min_events_per_cause) {
  ValidationReport report;
  report.events_per_cause.assign(static_cast<std::size_t>(ds.num_causes()), 0);
  std::map<double, std::size_t> event_time_counts;
  for (const auto& r : ds.records()) {
    if (r.cause >= 1) {
      ++report.events_per_cause[static_cast<std::size_t>(r.cause - 1)];
      ++event_time_counts[r.time];
    }
  }
  for (const auto& [t, count] : event_time_counts) {
    if (count > 1) report.tie_violations.push_back(t);
  }
  report.min_event_threshold_met = true;
  for (std::size_t k = 0; k < report.events_per_cause.size(); ++k) {
    if (report.events_per_cause[k] < min_events_per_cause) {
      report.min_event_threshold_met = false;
      report.warnings.push_back("cause " + std::to_string(k + 1) + " has only " +
                                std::to_string(report.events_per_cause[k]) + " events (threshold " +
                                std::to_string(min_events_per_cause) + ")");
    }
  }
  if (!report.tie_violations.empty()) {
    report.warnings.push_back(std::to_string(report.tie_violations.size()) +
                              " tied event time(s); estimators refuse ties unless jittered");
  }
  return report;
}

inline bool has_event_ties(const Dataset& ds) {
  return !validate(ds, 0).tie_violations.empty();
}

// Breaks event-time ties by adding uniform noise in (0, eps), with eps half
// the smallest positive gap between sorted distinct observed times.
inline Dataset jitter_ties(const Dataset& ds, std::uint64_t seed) {
  std::vector<double> distinct;
  for (const auto& r : ds.records()) distinct.push_back(r.time);
  std::sort(distinct.begin(), distinct.end());
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < distinct.size(); ++i) {
    double gap = distinct[i] - distinct[i - 1];
    if (gap > 0.0 && gap < min_gap) min_gap = gap;
  }
  if (!std::isfinite(min_gap)) min_gap = 1.0;  // all times identical
  const double eps = 0.5 * min_gap;

  std::map<double, std::size_t> event_time_counts;
  for (const auto& r : ds.records()) {
    if (r.cause >= 1) ++event_time_counts[r.time];
  }
  RngStream rng = RngStream::substream(seed, /*tag=*/0x6a69747465ULL, 0);
  std::vector<SubjectRecord> out = ds.records();
  std::map<double, bool> first_seen;
  for (auto& r : out) {
    if (r.cause < 1) continue;
    if (event_time_counts[r.time] <= 1) continue;
    if (!first_seen[r.time]) {
      first_seen[r.time] = true;  // keep one record per tied time in place
      continue;
    }
    double u;
    do {
      u = rng.uniform();
    } while (u <= 0.0);
    r.time += u * eps;
  }
  std::vector<std::string> names = ds.covariate_names();
  return Dataset(std::move(out), ds.num_causes(), std::move(names));
}

// Column-name mapping for parse_dataset. Covariates default to every header
// column not otherwise claimed, in header order. Categorical columns are
// expanded to dummies against a declared reference level.
struct CsvSchema {
  std::string time_column = "time";
  std::string cause_column = "cause";
  std::string treated_column = "treated";
  std::string weight_column = "weight";  // optional; used when present
  std::vector<std::string> covariate_columns;  // empty -> all remaining columns
  std::map<std::string, std::string> categorical;  // column -> reference level
  int num_causes_override = 0;  // 0 -> infer as max cause code present
};

inline Dataset parse_dataset(std::string_view csv_bytes, const CsvSchema& schema = {}) {
  CsvTable table = read_csv(csv_bytes);
  auto find_column = [&](const std::string& name) -> std::ptrdiff_t {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (table.header[j] == name) return static_cast<std::ptrdiff_t>(j);
    }
    return -1;
  };
  auto require_column = [&](const std::string& name) -> std::size_t {
    std::ptrdiff_t j = find_column(name);
    if (j < 0) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(j);
  };

  const std::size_t time_col = require_column(schema.time_column);
  const std::size_t cause_col = require_column(schema.cause_column);
  const std::size_t treated_col = require_column(schema.treated_column);
  const std::ptrdiff_t weight_col = find_column(schema.weight_column);

  std::vector<std::size_t> covar_cols;
  if (schema.covariate_columns.empty()) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (j == time_col || j == cause_col || j == treated_col ||
          static_cast<std::ptrdiff_t>(j) == weight_col) {
        continue;
      }
      covar_cols.push_back(j);
    }
  } else {
    for (const auto& name : schema.covariate_columns) covar_cols.push_back(require_column(name));
  }

  // Collect levels of categorical covariate columns.
  std::map<std::size_t, std::vector<std::string>> dummy_levels;
  for (std::size_t j : covar_cols) {
    auto it = schema.categorical.find(table.header[j]);
    if (it == schema.categorical.end()) continue;
    std::set<std::string> levels;
    for (const auto& row : table.rows) {
      if (j < row.size()) levels.insert(row[j]);
    }
    if (!levels.count(it->second)) {
      throw SchemaError("reference level '" + it->second + "' not present in column '" +
                        table.header[j] + "'");
    }
    levels.erase(it->second);
    dummy_levels[j] = std::vector<std::string>(levels.begin(), levels.end());
  }

  std::vector<std::string> covariate_names;
  for (std::size_t j : covar_cols) {
    auto it = dummy_levels.find(j);
    if (it == dummy_levels.end()) {
      covariate_names.push_back(table.header[j]);
    } else {
      for (const auto& level : it->second) covariate_names.push_back(table.header[j] + "=" + level);
    }
  }

  std::vector<SubjectRecord> records;
  records.reserve(table.rows.size());
  int max_cause = 0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != table.header.size()) {
      throw ParseError("row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                       " cells, header has " + std::to_string(table.header.size()));
    }
    SubjectRecord r;
    r.time = parse_double_cell(row[time_col], i, schema.time_column);
    double cause_val = parse_double_cell(row[cause_col], i, schema.cause_column);
    r.cause = static_cast<int>(cause_val);
    if (static_cast<double>(r.cause) != cause_val || r.cause < 0) {
      throw DomainError("cause code '" + row[cause_col] + "' at data row " + std::to_string(i) +
                        " is not a nonnegative integer");
    }
    double treated_val = parse_double_cell(row[treated_col], i, schema.treated_column);
    r.treated = static_cast<int>(treated_val);
    if (weight_col >= 0) {
      r.weight = parse_double_cell(row[static_cast<std::size_t>(weight_col)], i, schema.weight_column);
    }
    for (std::size_t j : covar_cols) {
      auto it = dummy_levels.find(j);
      if (it == dummy_levels.end()) {
        r.covariates.push_back(parse_double_cell(row[j], i, table.header[j]));
      } else {
        for (const auto& level : it->second) r.covariates.push_back(row[j] == level ? 1.0 : 0.0);
      }
    }
    max_cause = std::max(max_cause, r.cause);
    records.push_back(std::move(r));
  }

  int num_causes = schema.num_causes_override > 0 ? schema.num_causes_override
                                                  : std::max(max_cause, 1);
  if (schema.num_causes_override > 0 && max_cause > schema.num_causes_override) {
    throw DomainError("cause code " + std::to_string(max_cause) + " exceeds declared K = " +
                      std::to_string(schema.num_causes_override));
  }
  return Dataset(std::move(records), num_causes, std::move(covariate_names));
}

inline std::string serialize_dataset(const Dataset& ds) {
  std::string out = "time,cause,treated";
  for (const auto& name : ds.covariate_names()) out += "," + name;
  out += ",weight\n";
  for (const auto& r : ds.records()) {
    out += format_double(r.time);
    out += "," + std::to_string(r.cause);
    out += "," + std::to_string(r.treated);
    for (double z : r.covariates) out += "," + format_double(z);
    out += "," + format_double(r.weight);
    out += "\n";
  }
  return out;
}

}  // namespace atecr
