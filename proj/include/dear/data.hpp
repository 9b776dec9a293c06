#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dear/detail/format.hpp"
#include "dear/error.hpp"
#include "dear/kernels.hpp"
#include "dear/smooth.hpp"

namespace dear {

/// Aligned target series and row-major covariate matrix.
struct Dataset {
  std::string name;
  std::string target_name = "y";
  std::vector<std::string> covariate_names;
  std::vector<VariableKind> kinds;
  std::vector<std::int64_t> timestamps;
  std::vector<double> y;
  std::vector<double> x;

  [[nodiscard]] std::size_t size() const { return y.size(); }
  [[nodiscard]] std::size_t dim() const { return kinds.size(); }
  [[nodiscard]] std::span<const double> row(std::size_t t) const { return {x.data() + t * dim(), dim()}; }

  /// Covariates of rows [begin, end) as a shared smoother input.
  [[nodiscard]] CovariatesPtr covariates(std::size_t begin, std::size_t end) const {
    return std::make_shared<const Covariates>(
        dim(), std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(begin * dim()),
                                   x.begin() + static_cast<std::ptrdiff_t>(end * dim())));
  }

  [[nodiscard]] Dataset select(const std::vector<bool>& keep) const {
    Dataset out;
    out.name = name;
    out.target_name = target_name;
    out.covariate_names = covariate_names;
    out.kinds = kinds;
    for (std::size_t t = 0; t < size(); ++t) {
      if (!keep[t]) continue;
      out.timestamps.push_back(timestamps[t]);
      out.y.push_back(y[t]);
      const auto r = row(t);
      out.x.insert(out.x.end(), r.begin(), r.end());
    }
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

struct Schema {
  std::string time_column = "time";
  std::string target;
  std::vector<std::string> covariates;
  std::vector<std::string> circular;  // subset of covariates
  bool degrees = true;                // circular columns given in degrees
  bool time_of_day = false;           // append a circular time-of-day covariate
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_missing = 0;
  std::size_t dropped_unparseable = 0;
  std::size_t dropped_out_of_order = 0;

  [[nodiscard]] std::size_t dropped() const { return dropped_missing + dropped_unparseable + dropped_out_of_order; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one CSV record; double quotes group a field and "" escapes a quote.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "null";
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Days since 1970-01-01 of a proleptic Gregorian date.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace detail

/// Epoch seconds from an integer or an ISO-8601 date-time
/// (YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM]).
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  s = detail::trim(s);
  if (auto v = detail::parse_int<std::int64_t>(s)) return v;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto year = detail::parse_int<int>(s.substr(0, 4));
  const auto month = detail::parse_int<unsigned>(s.substr(5, 2));
  const auto day = detail::parse_int<unsigned>(s.substr(8, 2));
  if (!year || !month || !day || *month < 1 || *month > 12 || *day < 1 || *day > 31) return std::nullopt;
  std::int64_t secs = detail::days_from_civil(*year, *month, *day) * 86400;
  std::string_view rest = s.substr(10);
  if (rest.empty()) return secs;
  if (rest[0] != 'T' && rest[0] != ' ') return std::nullopt;
  rest.remove_prefix(1);
  if (rest.size() < 5 || rest[2] != ':') return std::nullopt;
  const auto hh = detail::parse_int<int>(rest.substr(0, 2));
  const auto mm = detail::parse_int<int>(rest.substr(3, 2));
  if (!hh || !mm || *hh > 23 || *mm > 59) return std::nullopt;
  secs += *hh * 3600 + *mm * 60;
  rest.remove_prefix(5);
  if (!rest.empty() && rest[0] == ':') {
    if (rest.size() < 3) return std::nullopt;
    const auto ss = detail::parse_int<int>(rest.substr(1, 2));
    if (!ss || *ss > 60) return std::nullopt;
    secs += *ss;
    rest.remove_prefix(3);
    if (!rest.empty() && rest[0] == '.') {
      rest.remove_prefix(1);
      while (!rest.empty() && rest[0] >= '0' && rest[0] <= '9') rest.remove_prefix(1);
    }
  }
  if (rest.empty() || rest == "Z") return secs;
  if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
    const auto oh = detail::parse_int<int>(rest.substr(1, 2));
    const auto om = detail::parse_int<int>(rest.substr(4, 2));
    if (!oh || !om) return std::nullopt;
    const int off = *oh * 3600 + *om * 60;
    return rest[0] == '+' ? secs - off : secs + off;
  }
  return std::nullopt;
}

/// 2 pi * (seconds since midnight UTC) / 86400.
inline double time_of_day_angle(std::int64_t ts) {
  std::int64_t s = ts % 86400;
  if (s < 0) s += 86400;
  return 2.0 * std::numbers::pi * static_cast<double>(s) / 86400.0;
}

/// Parses CSV text. Rows with a missing or unparseable required cell, or a
/// timestamp not after the previous kept row, are dropped and counted.
inline Dataset parse_csv(std::string_view text, const Schema& schema, IngestReport* report = nullptr) {
  IngestReport rep;
  std::vector<std::string> lines;
  {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
      lines.emplace_back(text.substr(pos, end - pos));
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
  }
  std::size_t li = 0;
  while (li < lines.size() && detail::trim(lines[li]).empty()) ++li;
  if (li == lines.size()) throw Error(ErrorCode::Schema, "missing header row");
  const auto header = detail::split_csv(lines[li++]);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::Schema, "missing column: " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.target.empty()) throw Error(ErrorCode::Schema, "no target column configured");
  const std::size_t tcol = column(schema.time_column);
  const std::size_t ycol = column(schema.target);
  std::vector<std::size_t> xcols;
  Dataset ds;
  ds.target_name = schema.target;
  for (const auto& c : schema.covariates) {
    xcols.push_back(column(c));
    ds.covariate_names.push_back(c);
    const bool circ = std::find(schema.circular.begin(), schema.circular.end(), c) != schema.circular.end();
    ds.kinds.push_back(circ ? VariableKind::Circular : VariableKind::Linear);
  }
  for (const auto& c : schema.circular) {
    if (std::find(schema.covariates.begin(), schema.covariates.end(), c) == schema.covariates.end()) {
      throw Error(ErrorCode::Schema, "circular column is not a selected covariate: " + c);
    }
  }
  if (schema.time_of_day) {
    ds.covariate_names.push_back("time_of_day");
    ds.kinds.push_back(VariableKind::Circular);
  }
  if (ds.kinds.empty()) throw Error(ErrorCode::Schema, "no covariates selected");

  std::vector<double> row(ds.kinds.size());
  for (; li < lines.size(); ++li) {
    if (detail::trim(lines[li]).empty()) continue;
    ++rep.rows_read;
    const auto cells = detail::split_csv(lines[li]);
    auto cell = [&](std::size_t c) -> std::string_view {
      return c < cells.size() ? std::string_view(cells[c]) : std::string_view();
    };
    bool missing = detail::is_missing(cell(tcol)) || detail::is_missing(cell(ycol));
    for (std::size_t c : xcols) missing = missing || detail::is_missing(cell(c));
    if (missing) {
      ++rep.dropped_missing;
      continue;
    }
    const auto ts = parse_timestamp(cell(tcol));
    const auto yv = detail::parse_number(cell(ycol));
    bool ok = ts && yv;
    for (std::size_t j = 0; j < xcols.size() && ok; ++j) {
      const auto v = detail::parse_number(cell(xcols[j]));
      if (!v) {
        ok = false;
        break;
      }
      row[j] = *v;
      if (ds.kinds[j] == VariableKind::Circular) {
        row[j] = reduce_angle(schema.degrees ? row[j] * std::numbers::pi / 180.0 : row[j]);
      }
    }
    if (!ok) {
      ++rep.dropped_unparseable;
      continue;
    }
    if (!ds.timestamps.empty() && *ts <= ds.timestamps.back()) {
      ++rep.dropped_out_of_order;
      continue;
    }
    if (schema.time_of_day) row.back() = time_of_day_angle(*ts);
    ds.timestamps.push_back(*ts);
    ds.y.push_back(*yv);
    ds.x.insert(ds.x.end(), row.begin(), row.end());
  }
  rep.rows_kept = ds.size();
  if (report) *report = rep;
  if (ds.size() == 0) throw Error(ErrorCode::EmptyDataset, "no rows survived ingestion");
  return ds;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Dataset ingest_csv(const std::string& path, const Schema& schema, IngestReport* report = nullptr) {
  Dataset ds = parse_csv(read_file(path), schema, report);
  ds.name = path;
  return ds;
}

/// CSV with epoch-second timestamps; circular columns in radians.
inline std::string to_csv(const Dataset& ds, const std::string& time_column = "time") {
  std::string out = time_column + "," + ds.target_name;
  for (const auto& n : ds.covariate_names) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < ds.size(); ++t) {
    out += std::to_string(ds.timestamps[t]) + "," + detail::g17(ds.y[t]);
    for (double v : ds.row(t)) out += "," + detail::g17(v);
    out += "\n";
  }
  return out;
}

/// Schema that reads back what to_csv wrote.
inline Schema schema_of(const Dataset& ds, const std::string& time_column = "time") {
  Schema s;
  s.time_column = time_column;
  s.target = ds.target_name;
  s.covariates = ds.covariate_names;
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    if (ds.kinds[j] == VariableKind::Circular) s.circular.push_back(ds.covariate_names[j]);
  }
  s.degrees = false;
  return s;
}

struct Bounds {
  std::optional<double> min;
  std::optional<double> max;
};

struct FilterRules {
  std::map<std::string, Bounds> bounds;  // by target or covariate name
  std::size_t zero_run = 0;              // drop zero-target runs of at least this length; 0 disables
};

struct FilterReport {
  std::size_t removed_bounds = 0;
  std::size_t removed_zero_run = 0;
};

/// Drops rows outside the bounds, then runs of >= zero_run consecutive
/// zero targets among the remaining rows. Idempotent.
inline Dataset filter_idle(const Dataset& ds, const FilterRules& rules, FilterReport* report = nullptr) {
  FilterReport rep;
  std::vector<bool> keep(ds.size(), true);
  for (const auto& [name, b] : rules.bounds) {
    std::optional<std::size_t> col;
    if (name != ds.target_name) {
      const auto it = std::find(ds.covariate_names.begin(), ds.covariate_names.end(), name);
      if (it == ds.covariate_names.end()) throw Error(ErrorCode::Schema, "filter column not in dataset: " + name);
      col = static_cast<std::size_t>(it - ds.covariate_names.begin());
    }
    for (std::size_t t = 0; t < ds.size(); ++t) {
      const double v = col ? ds.row(t)[*col] : ds.y[t];
      if ((b.min && v < *b.min) || (b.max && v > *b.max)) keep[t] = false;
    }
  }
  for (bool k : keep) rep.removed_bounds += k ? 0 : 1;
  if (rules.zero_run > 0) {
    std::vector<std::size_t> kept;
    for (std::size_t t = 0; t < ds.size(); ++t) {
      if (keep[t]) kept.push_back(t);
    }
    std::size_t i = 0;
    while (i < kept.size()) {
      if (ds.y[kept[i]] != 0.0) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < kept.size() && ds.y[kept[j]] == 0.0) ++j;
      if (j - i >= rules.zero_run) {
        for (std::size_t k = i; k < j; ++k) keep[kept[k]] = false;
        rep.removed_zero_run += j - i;
      }
      i = j;
    }
  }
  if (report) *report = rep;
  return ds.select(keep);
}

/// break_before[t] is true when the step from t-1 exceeds 1.5 times the
/// median sampling interval.
inline std::vector<bool> gap_flags(std::span<const std::int64_t> ts) {
  std::vector<bool> out(ts.size(), false);
  if (ts.size() < 2) return out;
  std::vector<std::int64_t> diffs;
  for (std::size_t t = 1; t < ts.size(); ++t) diffs.push_back(ts[t] - ts[t - 1]);
  std::vector<std::int64_t> sorted = diffs;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double med = static_cast<double>(sorted[sorted.size() / 2]);
  for (std::size_t t = 1; t < ts.size(); ++t) out[t] = static_cast<double>(diffs[t - 1]) > 1.5 * med;
  return out;
}

struct WindowSpan {
  std::size_t train_begin = 0;
  std::size_t train_end = 0;  // exclusive
  std::size_t test = 0;
};

/// For each test index in [start, end]: the W rows immediately before it.
inline std::vector<WindowSpan> rolling_windows(const Dataset& ds, std::size_t W, std::size_t start, std::size_t end) {
  if (W == 0) throw Error(ErrorCode::InvalidConfig, "window length must be >= 1");
  if (start < W) throw Error(ErrorCode::InsufficientHistory, "start index leaves fewer than W prior rows");
  if (end < start) throw Error(ErrorCode::InvalidConfig, "end index before start index");
  if (end >= ds.size()) throw Error(ErrorCode::InsufficientData, "end index beyond the dataset");
  std::vector<WindowSpan> out;
  for (std::size_t t = start; t <= end; ++t) out.push_back({t - W, t, t});
  return out;
}

inline double clamp(double y, double lower, double upper) { return std::min(std::max(y, lower), upper); }

}  // namespace dear
