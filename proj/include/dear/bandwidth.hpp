#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "dear/error.hpp"
#include "dear/kernels.hpp"
#include "dear/tseries.hpp"

namespace dear {

enum class Selector { DPI, RuleOfThumb };

struct BandwidthChoice {
  double value = 1.0;
  Selector selector = Selector::DPI;
};

/// Bandwidths attached to one fitted model.
struct BandwidthReport {
  std::vector<double> per_variable_regression;
  std::vector<double> per_variable_variance;
  double density_global = 1.0;
  std::vector<double> density_adaptive;
  Selector selector_used = Selector::DPI;
};

/// Smallest bandwidth assigned to a circular covariate; keeps 1/h^2 under the
/// Von Mises overflow guard.
inline const double kMinCircularBandwidth = 1.0 / std::sqrt(699.0);

namespace detail {

inline double sample_mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_sd(std::span<const double> x) {
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Type-7 (linear interpolation) quantile of an already sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double robust_scale(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double iqr = sorted_quantile(s, 0.75) - sorted_quantile(s, 0.25);
  const double sd = sample_sd(x);
  if (iqr > 0.0) return std::min(sd, iqr / 1.34);
  return sd;
}

inline constexpr double kInvSqrtTwoPi = 0.3989422804014327;

// Derivatives of the standard normal density: phi^(4) and phi^(6) via Hermite polynomials.
inline double phi4(double x) {
  const double x2 = x * x;
  return (x2 * x2 - 6.0 * x2 + 3.0) * kInvSqrtTwoPi * std::exp(-0.5 * x2);
}

inline double phi6(double x) {
  const double x2 = x * x;
  return (x2 * x2 * x2 - 15.0 * x2 * x2 + 45.0 * x2 - 15.0) * kInvSqrtTwoPi * std::exp(-0.5 * x2);
}

// Kernel functional estimate psi_r(g) = n^-2 g^-(r+1) sum_i sum_j phi^(r)((x_i - x_j) / g).
template <class Deriv>
double kernel_functional(std::span<const double> x, double g, Deriv deriv, int r) {
  const std::size_t n = x.size();
  const double inv_g = 1.0 / g;
  double off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) off += deriv((x[i] - x[j]) * inv_g);
  }
  const double total = 2.0 * off + static_cast<double>(n) * deriv(0.0);
  const double nn = static_cast<double>(n);
  return total / (nn * nn * std::pow(g, r + 1));
}

struct QuarticBlocks {
  double rss = 0.0;
  double rss_linear = 0.0;  // same blocks, straight lines only
  double theta22 = 0.0;
};

// Fits an independent quartic to each of `blocks` contiguous runs of the
// x-sorted sample. Returns the residual sum of squares and the mean squared
// second derivative of the blockwise fit at the data points.
inline QuarticBlocks fit_quartic_blocks(std::span<const double> xs, std::span<const double> ys, std::size_t blocks) {
  const std::size_t n = xs.size();
  QuarticBlocks out;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * n / blocks;
    const std::size_t hi = (b + 1) * n / blocks;
    const std::size_t m = hi - lo;
    double c = 0.0;
    for (std::size_t i = lo; i < hi; ++i) c += xs[i];
    c /= static_cast<double>(m);
    double half = 0.5 * (xs[hi - 1] - xs[lo]);
    if (!(half > 0.0)) half = 1.0;
    Eigen::MatrixXd design(m, 5);
    Eigen::VectorXd resp(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double t = (xs[lo + i] - c) / half;
      double p = 1.0;
      for (int k = 0; k < 5; ++k) {
        design(static_cast<Eigen::Index>(i), k) = p;
        p *= t;
      }
      resp(static_cast<Eigen::Index>(i)) = ys[lo + i];
    }
    const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(resp);
    const Eigen::VectorXd resid = resp - design * beta;
    out.rss += resid.squaredNorm();
    const Eigen::MatrixXd line = design.leftCols(2);
    out.rss_linear += (resp - line * line.colPivHouseholderQr().solve(resp)).squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double t = (xs[lo + i] - c) / half;
      const double d2 = (2.0 * beta(2) + 6.0 * beta(3) * t + 12.0 * beta(4) * t * t) / (half * half);
      out.theta22 += d2 * d2;
    }
  }
  out.theta22 /= static_cast<double>(n);
  return out;
}

}  // namespace detail

/// Normal-reference bandwidth 1.06 * min(sd, IQR/1.34) * n^(-1/5).
inline double rule_of_thumb_bandwidth(std::span<const double> sample) {
  if (sample.size() < 2) throw Error(ErrorCode::InvalidSample, "rule of thumb needs at least two points");
  const double scale = detail::robust_scale(sample);
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::InvalidSample, "sample has zero spread");
  }
  return 1.06 * scale * std::pow(static_cast<double>(sample.size()), -0.2);
}

/// Level of the test for blockwise curvature in dpi_regression_bandwidth.
inline constexpr double kCurvatureAlpha = 0.05;

/// Direct plug-in bandwidth for local linear regression of y on x (Gaussian
/// kernel). Blockwise quartic fits, block count chosen by Mallows' Cp over
/// 1..max(2, n/50), supply the curvature functional int (m'')^2 f and the error
/// variance; the returned value is the asymptotic-MISE optimum
///   h = [sigma^2 (b - a) R(K) / (mu2^2 theta22 n)]^(1/5),
/// capped at twice the x range. The cap is also returned when the blockwise
/// quadratic-and-higher terms are not significant. Falls back to the rule of thumb on x when the
/// sample is too small or degenerate.
inline BandwidthChoice dpi_regression_bandwidth(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "x and y differ in length");
  const std::size_t n = x.size();
  auto fallback = [&]() {
    BandwidthChoice c{1.0, Selector::RuleOfThumb};
    try {
      c.value = rule_of_thumb_bandwidth(x);
    } catch (const Error&) {
      // zero spread in x: any positive value gives the same smoother
    }
    return c;
  };
  if (n < 20) return fallback();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const double range = xs.back() - xs.front();
  if (!(range > 0.0)) return fallback();

  const std::size_t max_blocks = std::max<std::size_t>(2, n / 50);
  std::vector<detail::QuarticBlocks> fits(max_blocks + 1);
  for (std::size_t b = 1; b <= max_blocks; ++b) fits[b] = detail::fit_quartic_blocks(xs, ys, b);

  const double nd = static_cast<double>(n);
  const double sigma2_max = fits[max_blocks].rss / (nd - 5.0 * static_cast<double>(max_blocks));
  std::size_t best = 1;
  if (sigma2_max > 0.0) {
    double best_cp = std::numeric_limits<double>::infinity();
    for (std::size_t b = 1; b <= max_blocks; ++b) {
      const double cp = fits[b].rss / sigma2_max - (nd - 10.0 * static_cast<double>(b));
      if (cp < best_cp) {
        best_cp = cp;
        best = b;
      }
    }
  }
  const double sigma2 = fits[best].rss / (nd - 5.0 * static_cast<double>(best));
  const double theta22 = fits[best].theta22;
  const double rk = 0.5 / std::sqrt(std::numbers::pi);
  const double cap = 2.0 * range;
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) return fallback();
  if (!(theta22 > 0.0)) return {cap, Selector::DPI};
  // When the quadratic and higher terms are not significant, theta22 is pure
  // noise and would shrink h arbitrarily; treat m'' as zero instead.
  const double curvature_stat = (fits[best].rss_linear - fits[best].rss) / sigma2;
  if (chisq_survival(curvature_stat, 3 * best) > kCurvatureAlpha) return {cap, Selector::DPI};
  const double h = std::pow(sigma2 * range * rk / (theta22 * nd), 0.2);
  if (!std::isfinite(h) || !(h > 0.0)) return fallback();
  return {std::min(h, cap), Selector::DPI};
}

/// Two-stage direct plug-in bandwidth for a Gaussian kernel density estimate:
/// normal reference for psi_8, kernel estimate of psi_6, kernel estimate of
/// psi_4, then h = [R(K) / (mu2^2 psi_4 n)]^(1/5).
inline BandwidthChoice dpi_density_bandwidth(std::span<const double> r) {
  const std::size_t n = r.size();
  if (n < 20) return {rule_of_thumb_bandwidth(r), Selector::RuleOfThumb};
  const double scale = detail::robust_scale(r);
  if (!(scale > 0.0) || !std::isfinite(scale)) return {rule_of_thumb_bandwidth(r), Selector::RuleOfThumb};

  const double nd = static_cast<double>(n);
  const double sqrt_pi = std::sqrt(std::numbers::pi);
  const double psi8 = 105.0 / (32.0 * sqrt_pi * std::pow(scale, 9));
  // -2 phi^(6)(0) = 30 / sqrt(2 pi)
  const double g1 = std::pow(30.0 * detail::kInvSqrtTwoPi / (psi8 * nd), 1.0 / 9.0);
  const double psi6 = detail::kernel_functional(r, g1, detail::phi6, 6);
  // -2 phi^(4)(0) = -6 / sqrt(2 pi)
  const double g2 = std::pow(-6.0 * detail::kInvSqrtTwoPi / (psi6 * nd), 1.0 / 7.0);
  if (!(psi6 < 0.0) || !std::isfinite(g2)) return {rule_of_thumb_bandwidth(r), Selector::RuleOfThumb};
  const double psi4 = detail::kernel_functional(r, g2, detail::phi4, 4);
  if (!(psi4 > 0.0)) return {rule_of_thumb_bandwidth(r), Selector::RuleOfThumb};
  const double h = std::pow(0.5 / (sqrt_pi * psi4 * nd), 0.2);
  if (!std::isfinite(h) || !(h > 0.0)) return {rule_of_thumb_bandwidth(r), Selector::RuleOfThumb};
  return {h, Selector::DPI};
}

inline constexpr double kPilotFloor = 1e-12;

/// Fixed-bandwidth Gaussian KDE of `r` at `at`, floored for the log.
inline double pilot_density(double at, std::span<const double> r, double h) {
  const double coef = 1.0 / (std::sqrt(kTwoPi) * h);
  const double inv = 0.5 / (h * h);
  double sum = 0.0;
  for (double v : r) sum += std::exp(-(at - v) * (at - v) * inv);
  return std::max(coef * sum / static_cast<double>(r.size()), kPilotFloor);
}

struct AdaptiveBandwidths {
  std::vector<double> values;
  double log_geometric_mean = 0.0;  // log s
};

/// Silverman-style local bandwidths h_i = h (g(r_i) / s)^(-1/2), where g is
/// the fixed-bandwidth pilot KDE and s the geometric mean of g(r_i).
inline AdaptiveBandwidths adaptive_bandwidths_with_scale(std::span<const double> r, double h) {
  detail::check_bandwidth(h);
  const std::size_t n = r.size();
  if (n == 0) return {};
  const double inv = 0.5 / (h * h);
  std::vector<double> sums(n, 1.0);  // self term exp(0)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = std::exp(-(r[i] - r[j]) * (r[i] - r[j]) * inv);
      sums[i] += k;
      sums[j] += k;
    }
  }
  const double coef = 1.0 / (std::sqrt(kTwoPi) * h * static_cast<double>(n));
  std::vector<double> logg(n);
  double mean_log = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logg[i] = std::log(std::max(coef * sums[i], kPilotFloor));
    mean_log += logg[i];
  }
  mean_log /= static_cast<double>(n);
  AdaptiveBandwidths out;
  out.log_geometric_mean = mean_log;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = h * std::exp(-0.5 * (logg[i] - mean_log));
  return out;
}

inline std::vector<double> adaptive_bandwidths(std::span<const double> r, double h) {
  return adaptive_bandwidths_with_scale(r, h).values;
}

/// Per-covariate regression bandwidths. Circular covariates use the same
/// selector on the angle values, floored so 1/h^2 stays under the guard.
inline std::vector<BandwidthChoice> select_regression_bandwidths(std::span<const double> x_rowmajor, std::size_t dim,
                                                                 std::span<const double> y,
                                                                 const std::vector<VariableKind>& kinds) {
  if (dim == 0 || x_rowmajor.size() != dim * y.size() || kinds.size() != dim) {
    throw Error(ErrorCode::LengthMismatch, "covariate matrix does not match response/kinds");
  }
  const std::size_t n = y.size();
  std::vector<BandwidthChoice> out(dim);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t t = 0; t < n; ++t) col[t] = x_rowmajor[t * dim + j];
    out[j] = dpi_regression_bandwidth(col, y);
    if (kinds[j] == VariableKind::Circular) out[j].value = std::max(out[j].value, kMinCircularBandwidth);
  }
  return out;
}

}  // namespace dear
