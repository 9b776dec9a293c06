#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace dear::detail {

/// Standard normal CDF tabulated as a piecewise quintic Hermite interpolant on
/// [-9, 9] with step 1/64 (value, first and second derivative matched at the
/// nodes). Absolute error is below 1e-14; outside the range the result is 0
/// or 1, which is off by less than 1.2e-19. Used in the inner loops of mixture
/// CDF evaluation where erfc dominates the cost.
///
/// For z >= 0 the table holds the upper tail Q = 1 - Phi and returns 1 - Q, so
/// coefficients keep full relative precision far out and the result is
/// non-decreasing in z.
class NormalCdfTable {
 public:
  static constexpr double kLimit = 9.0;
  static constexpr double kStep = 1.0 / 64.0;
  static constexpr std::size_t kIntervals = static_cast<std::size_t>(2.0 * kLimit / kStep);
  static constexpr double kTop = static_cast<double>(kIntervals) + 1.5;

  // Interval 0 and interval kIntervals + 1 are constant 0 and 1 so that the
  // lookup needs no branches. Entry layout: base, then polynomial in t.
  NormalCdfTable() : coef_(kIntervals + 2) {
    const double h = kStep;
    auto lower = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
    auto upper = [](double z) { return -0.5 * std::erfc(z / std::numbers::sqrt2); };
    auto d1 = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
    coef_.front() = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    coef_.back() = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < kIntervals; ++i) {
      const double z0 = -kLimit + static_cast<double>(i) * h;
      const double z1 = z0 + h;
      const bool up = z0 >= 0.0;
      const double f0 = up ? upper(z0) : lower(z0);
      const double f1 = up ? upper(z1) : lower(z1);
      const double g0 = h * d1(z0), g1 = h * d1(z1);
      const double s0 = h * h * (-z0 * d1(z0)), s1 = h * h * (-z1 * d1(z1));
      auto& c = coef_[i + 1];
      c[0] = up ? 1.0 : 0.0;
      c[1] = f0;
      c[2] = g0;
      c[3] = 0.5 * s0;
      c[4] = -10.0 * f0 - 6.0 * g0 - 1.5 * s0 + 0.5 * s1 - 4.0 * g1 + 10.0 * f1;
      c[5] = 15.0 * f0 + 8.0 * g0 + 1.5 * s0 - s1 + 7.0 * g1 - 15.0 * f1;
      c[6] = -6.0 * f0 - 3.0 * g0 - 0.5 * s0 + 0.5 * s1 - 3.0 * g1 + 6.0 * f1;
    }
  }

  /// z must not be NaN.
  [[nodiscard]] double operator()(double z) const {
    double pos = (z + kLimit) * (1.0 / kStep) + 1.0;
    pos = pos > 0.0 ? pos : 0.0;
    pos = pos < kTop ? pos : kTop;
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    const auto& c = coef_[i];
    return c[0] + (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * (c[5] + t * c[6])))));
  }

  /// Interpolated CDF and its derivative (the density, accurate to ~1e-9).
  [[nodiscard]] std::pair<double, double> with_density(double z) const {
    double pos = (z + kLimit) * (1.0 / kStep) + 1.0;
    pos = pos > 0.0 ? pos : 0.0;
    pos = pos < kTop ? pos : kTop;
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    const auto& c = coef_[i];
    const double f = c[0] + (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * (c[5] + t * c[6])))));
    const double d = c[2] + t * (2.0 * c[3] + t * (3.0 * c[4] + t * (4.0 * c[5] + t * 5.0 * c[6])));
    return {f, d * (1.0 / kStep)};
  }

 private:
  std::vector<std::array<double, 7>> coef_;
};

inline const NormalCdfTable& normal_cdf_table() {
  static const NormalCdfTable table;
  return table;
}

inline double fast_normal_cdf(double z) { return normal_cdf_table()(z); }

}  // namespace dear::detail
