#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "dear/density.hpp"

namespace dear {

inline double clamp_value(double y, double lower, double upper) { return std::min(std::max(y, lower), upper); }

/// One-step-ahead forecast. The density (absent for point forecasts such as
/// persistence) is never truncated; reported mean and quantiles are clamped
/// into [lower, upper].
struct Forecast {
  double mean = 0.0;
  double raw_mean = 0.0;
  std::optional<PredictiveDensity> density;
  bool clamped = false;
  bool sparse = false;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  [[nodiscard]] double quantile(double q) const {
    return clamp_value(density ? density->quantile(q) : raw_mean, lower, upper);
  }
  [[nodiscard]] double level_quantile(std::size_t k) const {
    return clamp_value(density ? density->level_quantile(k) : raw_mean, lower, upper);
  }
  /// CRPS of the untruncated density; a point forecast scores |mean - y|.
  [[nodiscard]] double crps(double y) const { return density ? density->crps(y) : std::abs(mean - y); }
};

inline Forecast make_forecast(double raw_mean, std::optional<PredictiveDensity> density, double lower, double upper) {
  Forecast f;
  f.raw_mean = raw_mean;
  f.mean = clamp_value(raw_mean, lower, upper);
  f.clamped = f.mean != raw_mean;
  f.density = std::move(density);
  f.lower = lower;
  f.upper = upper;
  return f;
}

}  // namespace dear
