#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Outcome data model: one row per observation with entry/exit times, a
// censoring status, covariates, and optional cluster labels.  Status codes
// on disk: 0 right censored, 1 event, 2 left censored, 3 interval censored.

namespace survmc {

enum class CensoringStatus : int {
  RightCensored = 0,
  Event = 1,
  LeftCensored = 2,
  IntervalCensored = 3,
};

class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(std::size_t row, const std::string& reason)
      : std::runtime_error("row " + std::to_string(row) + ": " + reason),
        row(row) {}
  std::size_t row;
};

class MissingColumn : public std::runtime_error {
 public:
  explicit MissingColumn(const std::string& name)
      : std::runtime_error("missing column: " + name) {}
};

class ParseFailure : public std::runtime_error {
 public:
  ParseFailure(std::size_t row, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ": " + what) {}
};

struct SurvivalRecord {
  double entry_time = 0;              // T^E
  double time = 0;                    // T (exit, or interval lower bound)
  std::optional<double> upper_time;   // T^U, interval censoring only
  CensoringStatus status = CensoringStatus::Event;
  std::vector<double> covariates;
  std::map<std::string, std::string> cluster_labels;

  void validate(std::size_t row) const {
    if (!(time > 0)) throw InvariantViolation(row, "time must be > 0");
    if (!(entry_time >= 0))
      throw InvariantViolation(row, "entry time must be >= 0");
    if (!(entry_time < time))
      throw InvariantViolation(row, "entry time must precede exit time");
    const bool interval = status == CensoringStatus::IntervalCensored;
    if (interval != upper_time.has_value())
      throw InvariantViolation(
          row, "upper time present iff status is interval censored");
    if (interval && !(*upper_time > time))
      throw InvariantViolation(row, "interval upper bound must exceed time");
    for (double x : covariates)
      if (!std::isfinite(x))
        throw InvariantViolation(row, "covariates contain a missing value");
  }
};

struct StatusCounts {
  std::size_t events = 0, right = 0, left = 0, interval = 0;
  std::size_t total() const { return events + right + left + interval; }
};

struct Dataset {
  std::vector<SurvivalRecord> records;
  std::vector<std::string> covariate_names;
  // Per clustering factor: ordered list of observed levels.
  std::map<std::string, std::vector<std::string>> factor_levels;

  void validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
      records[i].validate(i);
      if (records[i].covariates.size() != covariate_names.size())
        throw InvariantViolation(i, "covariate dimension mismatch");
    }
  }

  StatusCounts counts() const {
    StatusCounts c;
    for (const auto& r : records) {
      switch (r.status) {
        case CensoringStatus::Event: ++c.events; break;
        case CensoringStatus::RightCensored: ++c.right; break;
        case CensoringStatus::LeftCensored: ++c.left; break;
        case CensoringStatus::IntervalCensored: ++c.interval; break;
      }
    }
    return c;
  }

  bool has_delayed_entry() const {
    for (const auto& r : records)
      if (r.entry_time > 0) return true;
    return false;
  }

  double t_max() const {
    double m = 0;
    for (const auto& r : records) {
      m = std::max(m, r.time);
      m = std::max(m, r.entry_time);
      if (r.upper_time) m = std::max(m, *r.upper_time);
    }
    return m;
  }

  // Total follow-up time, used for the crude event rate E/T.
  double total_follow_up() const {
    double t = 0;
    for (const auto& r : records) t += r.time - r.entry_time;
    return t;
  }

  void index_factors() {
    factor_levels.clear();
    for (const auto& r : records)
      for (const auto& [f, lvl] : r.cluster_labels) {
        auto& levels = factor_levels[f];
        if (std::find(levels.begin(), levels.end(), lvl) == levels.end())
          levels.push_back(lvl);
      }
  }

  std::size_t level_index(const std::string& factor,
                          const std::string& level) const {
    const auto& levels = factor_levels.at(factor);
    auto it = std::find(levels.begin(), levels.end(), level);
    if (it == levels.end())
      throw std::out_of_range("unknown level " + level + " of factor " + factor);
    return static_cast<std::size_t>(it - levels.begin());
  }
};

// --- CSV ---

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw MissingColumn(name);
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty file: " + path);
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size())
      throw ParseFailure(t.rows.size() + 1, "expected " +
                             std::to_string(t.columns.size()) + " fields, got " +
                             std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline double parse_double(const std::string& s, std::size_t row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseFailure(row, "cannot parse number from '" + s + "'");
  }
}

// Column-name mapping for loading a dataset from CSV.  Empty entry/upper
// names mean the column is absent (no delayed entry / no interval bounds).
struct DataSchema {
  std::string entry;   // optional
  std::string time;    // required
  std::string upper;   // optional
  std::string status;  // required
  std::vector<std::string> covariates;
  std::vector<std::string> factors;  // clustering factor columns
};

inline Dataset load_dataset(const std::string& path, const DataSchema& schema) {
  const CsvTable t = read_csv(path);
  const std::size_t c_time = t.column_index(schema.time);
  const std::size_t c_status = t.column_index(schema.status);
  std::optional<std::size_t> c_entry, c_upper;
  if (!schema.entry.empty()) c_entry = t.column_index(schema.entry);
  if (!schema.upper.empty()) c_upper = t.column_index(schema.upper);
  std::vector<std::size_t> c_cov, c_fac;
  for (const auto& n : schema.covariates) c_cov.push_back(t.column_index(n));
  for (const auto& n : schema.factors) c_fac.push_back(t.column_index(n));

  Dataset ds;
  ds.covariate_names = schema.covariates;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    SurvivalRecord r;
    r.time = parse_double(row[c_time], i + 1);
    const double st = parse_double(row[c_status], i + 1);
    if (st != 0 && st != 1 && st != 2 && st != 3)
      throw ParseFailure(i + 1, "status must be one of 0,1,2,3");
    r.status = static_cast<CensoringStatus>(static_cast<int>(st));
    if (c_entry && !row[*c_entry].empty())
      r.entry_time = parse_double(row[*c_entry], i + 1);
    if (c_upper && !row[*c_upper].empty())
      r.upper_time = parse_double(row[*c_upper], i + 1);
    for (std::size_t c : c_cov)
      r.covariates.push_back(parse_double(row[c], i + 1));
    for (std::size_t k = 0; k < c_fac.size(); ++k)
      r.cluster_labels[schema.factors[k]] = row[c_fac[k]];
    r.validate(i + 1);
    ds.records.push_back(std::move(r));
  }
  ds.index_factors();
  ds.validate();
  return ds;
}

// --- Kaplan-Meier ---

class UnsupportedStatus : public std::runtime_error {
 public:
  UnsupportedStatus()
      : std::runtime_error(
            "Kaplan-Meier requires right-censored or event records only") {}
};

struct KaplanMeierCurve {
  std::vector<double> times;     // ascending event times
  std::vector<double> survival;  // non-increasing

  // Step-function value: S(t) with S(t) = 1 before the first event time.
  double at(double t) const {
    double s = 1.0;
    for (std::size_t k = 0; k < times.size() && times[k] <= t; ++k)
      s = survival[k];
    return s;
  }
};

// Product-limit estimator with delayed-entry risk sets.  At each event time
// deaths are processed before censorings; a subject is at risk at t when
// entry < t <= exit.
inline KaplanMeierCurve kaplan_meier(const Dataset& data) {
  for (const auto& r : data.records)
    if (r.status != CensoringStatus::Event &&
        r.status != CensoringStatus::RightCensored)
      throw UnsupportedStatus();

  std::vector<double> event_times;
  for (const auto& r : data.records)
    if (r.status == CensoringStatus::Event) event_times.push_back(r.time);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()),
                    event_times.end());

  KaplanMeierCurve km;
  double s = 1.0;
  for (double t : event_times) {
    std::size_t at_risk = 0, deaths = 0;
    for (const auto& r : data.records) {
      if (r.entry_time < t && r.time >= t) ++at_risk;
      if (r.status == CensoringStatus::Event && r.time == t) ++deaths;
    }
    if (at_risk == 0) continue;
    s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
    km.times.push_back(t);
    km.survival.push_back(s);
  }
  return km;
}

}  // namespace survmc
