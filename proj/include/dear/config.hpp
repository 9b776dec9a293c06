#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dear/backtest.hpp"
#include "dear/baselines.hpp"
#include "dear/data.hpp"
#include "dear/error.hpp"
#include "dear/estimator.hpp"
#include "dear/synth.hpp"

namespace dear {

/// Everything a command needs besides file paths. Parsed from plain
/// `key=value` text; `#` starts a comment.
struct RunConfig {
  Schema schema;
  FilterRules filter;
  std::size_t window = 2000;
  std::optional<std::size_t> start;
  std::optional<std::size_t> end;
  std::optional<MethodKind> method;
  DearConfig dear;
  BaselineConfig baseline;
  std::vector<std::string> groups;   // e.g. "speed+dir"; resolved against the dataset
  std::vector<std::string> anchors;  // covariate names
  std::optional<double> range;
  std::uint64_t seed = 1;
  std::vector<std::size_t> density_instants;  // test rows that get a density grid
  std::size_t density_grid_points = 200;
  bool parallel = false;
  unsigned threads = 0;
  SynthSpec synth;

  void validate() const {
    if (window == 0) throw Error(ErrorCode::InvalidConfig, "window must be >= 1");
    if (window < dear.min_window) throw Error(ErrorCode::InvalidConfig, "window is shorter than min_window");
    if (start && end && *end < *start) throw Error(ErrorCode::InvalidConfig, "end precedes start");
    if (range && !(*range > 0.0)) throw Error(ErrorCode::InvalidConfig, "range must be > 0");
    if (density_grid_points < 2) throw Error(ErrorCode::InvalidConfig, "density_grid_points must be >= 2");
    dear.validate();
    baseline.validate();
  }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find(sep, pos);
    const auto item = trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!item.empty()) out.emplace_back(item);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline double config_number(const std::string& key, std::string_view v) {
  const auto x = parse_number(v);
  if (!x) throw Error(ErrorCode::InvalidConfig, key + ": '" + std::string(v) + "' is not a number");
  return *x;
}

inline std::size_t config_count(const std::string& key, std::string_view v) {
  const double x = config_number(key, v);
  if (!(x >= 0.0) || x != static_cast<double>(static_cast<std::uint64_t>(x))) {
    throw Error(ErrorCode::InvalidConfig, key + ": '" + std::string(v) + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(x);
}

inline bool config_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::InvalidConfig, key + ": '" + std::string(v) + "' is not a boolean");
}

inline Method config_method(const std::string& key, std::string_view v) {
  if (v == "ll" || v == "local_linear") return Method::LocalLinear;
  if (v == "nw" || v == "nadaraya_watson") return Method::NadarayaWatson;
  throw Error(ErrorCode::InvalidConfig, key + ": expected ll or nw");
}

inline std::vector<double> config_numbers(const std::string& key, std::string_view v) {
  std::vector<double> out;
  for (const auto& s : split_list(v, ',')) out.push_back(config_number(key, s));
  return out;
}

template <class E>
E config_enum(const std::string& key, std::string_view v, const std::map<std::string_view, E>& names) {
  const auto it = names.find(v);
  if (it == names.end()) throw Error(ErrorCode::InvalidConfig, key + ": unknown value '" + std::string(v) + "'");
  return it->second;
}

inline void apply_synth_key(SynthSpec& s, const std::string& k, std::string_view v) {
  if (k == "mean") {
    s.mean = config_enum<MeanShape>(k, v, {{"linear", MeanShape::Linear}, {"sine", MeanShape::Sine},
                                           {"logistic", MeanShape::Logistic}});
  } else if (k == "sd") {
    s.sd = config_enum<SdShape>(k, v, {{"constant", SdShape::Constant}, {"step", SdShape::Step},
                                       {"smooth", SdShape::Smooth}});
  } else if (k == "ar") {
    s.ar = config_numbers(k, v);
  } else if (k == "innovation") {
    s.innovation = config_enum<Innovation>(k, v, {{"normal", Innovation::Normal}, {"skew", Innovation::SkewNormal},
                                                  {"uniform", Innovation::Uniform}});
  } else if (k == "covariates") {
    s.covariates = config_enum<CovariateProcess>(k, v, {{"iid", CovariateProcess::Iid}, {"ar", CovariateProcess::Ar}});
  } else if (k == "kinds") {
    s.kinds.clear();
    for (const auto& name : split_list(v, ',')) {
      s.kinds.push_back(config_enum<VariableKind>(k, name, {{"linear", VariableKind::Linear},
                                                            {"circular", VariableKind::Circular}}));
    }
  } else if (k == "length") {
    s.length = config_count(k, v);
  } else if (k == "seed") {
    s.seed = config_count(k, v);
  } else if (k == "covariate_ar") {
    s.covariate_ar = config_number(k, v);
  } else if (k == "start_time") {
    s.start_time = static_cast<std::int64_t>(config_number(k, v));
  } else if (k == "interval") {
    s.interval = static_cast<std::int64_t>(config_count(k, v));
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown key 'synth." + k + "'");
  }
}

}  // namespace detail

/// Parses config text. Unknown keys are errors so typos do not silently fall
/// back to defaults.
inline RunConfig parse_config(std::string_view text) {
  using namespace detail;
  RunConfig c;
  bool synth_seed = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string k(trim(line.substr(0, eq)));
    const std::string_view v = trim(line.substr(eq + 1));

    if (k == "target") c.schema.target = v;
    else if (k == "time") c.schema.time_column = v;
    else if (k == "covariates") c.schema.covariates = split_list(v, ',');
    else if (k == "circular") c.schema.circular = split_list(v, ',');
    else if (k == "degrees") c.schema.degrees = config_bool(k, v);
    else if (k == "time_of_day") c.schema.time_of_day = config_bool(k, v);
    else if (k.starts_with("filter.min.")) c.filter.bounds[k.substr(11)].min = config_number(k, v);
    else if (k.starts_with("filter.max.")) c.filter.bounds[k.substr(11)].max = config_number(k, v);
    else if (k == "filter.zero_run") c.filter.zero_run = config_count(k, v);
    else if (k == "window") c.window = config_count(k, v);
    else if (k == "start") c.start = config_count(k, v);
    else if (k == "end") c.end = config_count(k, v);
    else if (k == "method") c.method = parse_method(v);
    else if (k == "refit_every") c.dear.refit_every = c.baseline.refit_every = config_count(k, v);
    else if (k == "min_window") c.dear.min_window = c.baseline.min_window = config_count(k, v);
    else if (k == "lower") c.dear.lower = c.baseline.lower = config_number(k, v);
    else if (k == "upper") c.dear.upper = c.baseline.upper = config_number(k, v);
    else if (k == "sparsity_tau") c.dear.tau = c.baseline.tau = config_number(k, v);
    else if (k == "groups") c.groups = split_list(v, ';');
    else if (k == "anchors") c.anchors = split_list(v, ',');
    else if (k == "bandwidths") c.dear.bandwidths = c.baseline.bandwidths = config_numbers(k, v);
    else if (k == "range") c.range = config_number(k, v);
    else if (k == "seed") c.seed = config_count(k, v);
    else if (k == "density_instants") {
      c.density_instants.clear();
      for (const auto& s : split_list(v, ',')) c.density_instants.push_back(config_count(k, s));
    } else if (k == "density_grid_points") c.density_grid_points = config_count(k, v);
    else if (k == "parallel") c.parallel = config_bool(k, v);
    else if (k == "threads") c.threads = static_cast<unsigned>(config_count(k, v));
    else if (k == "p_max") c.dear.p_max = config_count(k, v);
    else if (k == "order") c.dear.order = config_count(k, v);
    else if (k == "order_criterion") {
      c.dear.criterion = config_enum<OrderCriterion>(k, v, {{"bic", OrderCriterion::BIC}, {"aic", OrderCriterion::AIC}});
    } else if (k == "ar_intercept") c.dear.ar_intercept = config_bool(k, v);
    else if (k == "alpha") c.dear.alpha = config_number(k, v);
    else if (k == "coef_tol") c.dear.coef_tol = config_number(k, v);
    else if (k == "max_iterations") c.dear.max_iterations = config_count(k, v);
    else if (k == "mean_method") c.dear.mean_method = config_method(k, v);
    else if (k == "variance_method") c.dear.variance_method = config_method(k, v);
    else if (k == "refit_density_bandwidth") c.dear.refit_density_bandwidth = config_bool(k, v);
    else if (k == "lambda") c.baseline.lambda = config_number(k, v);
    else if (k == "response_bandwidth") c.baseline.response_bandwidth = config_number(k, v);
    else if (k.starts_with("synth.")) {
      apply_synth_key(c.synth, k.substr(6), v);
      synth_seed = synth_seed || k == "synth.seed";
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + k + "'");
    }
  }
  if (!synth_seed) c.synth.seed = c.seed;
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

/// Group and anchor names mapped to covariate indices of `ds`; copies them
/// into the estimator and baseline configs.
inline void resolve_kernel_groups(RunConfig& c, const Dataset& ds) {
  auto index_of = [&](const std::string& name) {
    for (std::size_t j = 0; j < ds.covariate_names.size(); ++j) {
      if (ds.covariate_names[j] == name) return j;
    }
    throw Error(ErrorCode::InvalidConfig, "kernel group names unknown covariate '" + name + "'");
  };
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& g : c.groups) {
    std::vector<std::size_t> idx;
    for (const auto& name : detail::split_list(g, '+')) idx.push_back(index_of(name));
    groups.push_back(std::move(idx));
  }
  std::vector<std::size_t> anchors;
  for (const auto& name : c.anchors) anchors.push_back(index_of(name));
  c.dear.groups = c.baseline.groups = groups;
  c.dear.anchors = c.baseline.anchors = anchors;
}

}  // namespace dear
