#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dear/detail/format.hpp"
#include "dear/error.hpp"
#include "dear/forecast.hpp"

namespace dear {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct LevelMetrics {
  double nominal = 0.0;
  double lower_level = 0.0;
  double upper_level = 0.0;
  double coverage = 0.0;
  double dev = 0.0;
  double pinaw = 0.0;
};

struct MetricsReport {
  double rmse = 0.0;
  double crps_mean = 0.0;
  std::vector<LevelMetrics> per_level;
  double adev = 0.0;
  double apinaw = 0.0;
  std::size_t n_test = 0;
  double target_range = 0.0;
};

inline double rmse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) throw Error(ErrorCode::LengthMismatch, "predictions and actuals differ");
  if (predictions.empty()) throw Error(ErrorCode::EmptyDataset, "rmse of empty vectors");
  double ss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - actuals[i];
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(predictions.size()));
}

inline double crps(const PredictiveDensity& density, double y) { return density.crps(y); }

inline double empirical_coverage(std::span<const Interval> intervals, std::span<const double> actuals) {
  if (intervals.size() != actuals.size()) throw Error(ErrorCode::LengthMismatch, "intervals and actuals differ");
  if (intervals.empty()) throw Error(ErrorCode::EmptyDataset, "coverage of no intervals");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (actuals[i] >= intervals[i].lower && actuals[i] <= intervals[i].upper) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

/// |nominal - empirical coverage|.
inline double coverage_dev(std::span<const Interval> intervals, std::span<const double> actuals, double nominal) {
  return std::abs(nominal - empirical_coverage(intervals, actuals));
}

/// Mean interval width divided by the target range R.
inline double pinaw(std::span<const Interval> intervals, double target_range) {
  if (!(target_range > 0.0)) throw Error(ErrorCode::InvalidConfig, "target range must be > 0");
  if (intervals.empty()) throw Error(ErrorCode::EmptyDataset, "pinaw of no intervals");
  double w = 0.0;
  for (const auto& iv : intervals) w += iv.upper - iv.lower;
  return w / (static_cast<double>(intervals.size()) * target_range);
}

/// Evaluates forecasts against outcomes on the 19 central intervals. R
/// defaults to the range of the actuals; when that range is zero PINAW is
/// reported as NaN rather than failing the whole evaluation.
inline MetricsReport evaluate(std::span<const Forecast> forecasts, std::span<const double> actuals,
                              std::optional<double> target_range = std::nullopt) {
  if (forecasts.size() != actuals.size()) throw Error(ErrorCode::LengthMismatch, "forecasts and actuals differ");
  if (forecasts.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
  const std::size_t n = forecasts.size();
  MetricsReport rep;
  rep.n_test = n;
  if (target_range) {
    rep.target_range = *target_range;
  } else {
    const auto [mn, mx] = std::minmax_element(actuals.begin(), actuals.end());
    rep.target_range = *mx - *mn;
  }
  std::vector<double> means(n);
  double crps_sum = 0.0;
  std::vector<std::array<double, kNumLevels>> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    means[i] = forecasts[i].mean;
    crps_sum += forecasts[i].crps(actuals[i]);
    for (std::size_t k = 0; k < kNumLevels; ++k) q[i][k] = forecasts[i].level_quantile(k);
  }
  rep.rmse = rmse(means, actuals);
  rep.crps_mean = crps_sum / static_cast<double>(n);

  std::vector<Interval> iv(n);
  double dev_sum = 0.0, pinaw_sum = 0.0;
  for (std::size_t j = 0; j < kNumIntervals; ++j) {
    for (std::size_t i = 0; i < n; ++i) iv[i] = {q[i][j], q[i][kNumLevels - 1 - j]};
    LevelMetrics lm;
    lm.lower_level = kQuantileLevels[j];
    lm.upper_level = kQuantileLevels[kNumLevels - 1 - j];
    lm.nominal = interval_nominal(j);
    lm.coverage = empirical_coverage(iv, actuals);
    lm.dev = std::abs(lm.nominal - lm.coverage);
    lm.pinaw = rep.target_range > 0.0 ? pinaw(iv, rep.target_range) : std::numeric_limits<double>::quiet_NaN();
    dev_sum += lm.dev;
    pinaw_sum += lm.pinaw;
    rep.per_level.push_back(lm);
  }
  rep.adev = dev_sum / static_cast<double>(kNumIntervals);
  rep.apinaw = pinaw_sum / static_cast<double>(kNumIntervals);
  return rep;
}

/// Flat `key=value` lines.
inline std::string to_key_value(const MetricsReport& r) {
  using detail::g17;
  std::string out;
  out += "rmse=" + g17(r.rmse) + "\n";
  out += "crps=" + g17(r.crps_mean) + "\n";
  out += "adev=" + g17(r.adev) + "\n";
  out += "apinaw=" + g17(r.apinaw) + "\n";
  out += "n_test=" + std::to_string(r.n_test) + "\n";
  out += "target_range=" + g17(r.target_range) + "\n";
  return out;
}

/// One CSV row per interval level.
inline std::string to_csv(const MetricsReport& r) {
  using detail::g17;
  std::string out = "nominal,lower_level,upper_level,coverage,dev,pinaw\n";
  for (const auto& l : r.per_level) {
    out += g17(l.nominal) + "," + g17(l.lower_level) + "," + g17(l.upper_level) + "," +
           g17(l.coverage) + "," + g17(l.dev) + "," + g17(l.pinaw) + "\n";
  }
  return out;
}

}  // namespace dear
