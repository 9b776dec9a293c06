#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dear/detail/normal_table.hpp"
#include "dear/error.hpp"

namespace dear {

/// Quantile levels 0.025, 0.05, ..., 0.975 without the median.
inline constexpr std::size_t kNumLevels = 38;
inline constexpr std::size_t kNumIntervals = 19;

inline constexpr std::array<double, kNumLevels> quantile_levels() {
  std::array<double, kNumLevels> out{};
  std::size_t i = 0;
  for (int k = 1; k <= 39; ++k) {
    if (k != 20) out[i++] = 0.025 * k;
  }
  return out;
}

inline constexpr std::array<double, kNumLevels> kQuantileLevels = quantile_levels();

/// Interval j (0-based) pairs levels j and 37 - j; nominal coverage 0.95 - 0.05 j.
inline constexpr double interval_nominal(std::size_t j) { return 1.0 - 2.0 * kQuantileLevels[j]; }

inline double gaussian_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Standard normal CDF via erfc.
inline double gaussian_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Acklam's rational approximation to the normal quantile (relative error
/// about 1e-9); only used as a starting point for root finding.
inline double gaussian_quantile_approx(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  constexpr double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Gaussian kernel mixture sum_i w_i N(c_i, h_i^2) in standardised
/// coordinates. Weights default to uniform. Quantiles at the 38 evaluation
/// levels are computed once at construction.
class KernelMixture {
 public:
  /// Components are kept in one support window of +-9 bandwidths; weights
  /// below `prune` times the largest weight are dropped and the rest
  /// renormalised.
  /// `hints`, when given, are previous level quantiles used as Newton starts.
  KernelMixture(std::vector<double> centers, std::vector<double> bandwidths, std::vector<double> weights = {},
                double prune = 0.0, const std::array<double, 38>* hints = nullptr)
      : centers_(std::move(centers)), bandwidths_(std::move(bandwidths)), weights_(std::move(weights)) {
    if (centers_.empty()) throw Error(ErrorCode::InvalidSample, "mixture needs at least one center");
    if (centers_.size() != bandwidths_.size()) throw Error(ErrorCode::LengthMismatch, "centers and bandwidths differ");
    if (!weights_.empty() && weights_.size() != centers_.size()) {
      throw Error(ErrorCode::LengthMismatch, "weights and centers differ");
    }
    for (double h : bandwidths_) {
      if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::InvalidBandwidth, "mixture bandwidth must be > 0");
    }
    if (weights_.empty()) {
      weights_.assign(centers_.size(), 1.0 / static_cast<double>(centers_.size()));
    } else {
      prune_and_normalize(prune);
    }
    inv_h_.resize(bandwidths_.size());
    offset_.resize(bandwidths_.size());
    for (std::size_t i = 0; i < bandwidths_.size(); ++i) {
      inv_h_[i] = 1.0 / bandwidths_[i];
      offset_[i] = centers_[i] * inv_h_[i];
    }
    lo_ = std::numeric_limits<double>::infinity();
    hi_ = -lo_;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      lo_ = std::min(lo_, centers_[i] - kSupportWidth * bandwidths_[i]);
      hi_ = std::max(hi_, centers_[i] + kSupportWidth * bandwidths_[i]);
    }
    double m = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      m += weights_[i] * centers_[i];
      s2 += weights_[i] * (centers_[i] * centers_[i] + bandwidths_[i] * bandwidths_[i]);
    }
    mean_ = m;
    sd_ = std::sqrt(std::max(s2 - m * m, 0.0));
    // Each level starts from the hint or from a Newton step off the previous
    // level, and is bracketed below by the previous level.
    double prev = lo_;
    for (std::size_t k = 0; k < kNumLevels; ++k) {
      std::optional<double> guess;
      if (hints) {
        guess = (*hints)[k];
      } else if (k > 0) {
        const double p = pdf(prev);
        if (p > 0.0) guess = prev + (kQuantileLevels[k] - kQuantileLevels[k - 1]) / p;
      }
      levels_[k] = solve_quantile(kQuantileLevels[k], prev, hi_, guess);
      prev = levels_[k];
    }
  }

  static constexpr double kSupportWidth = 9.0;

  [[nodiscard]] std::size_t size() const { return centers_.size(); }
  [[nodiscard]] const std::vector<double>& centers() const { return centers_; }
  [[nodiscard]] const std::vector<double>& bandwidths() const { return bandwidths_; }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] double mean() const { return mean_; }
  [[nodiscard]] double sd() const { return sd_; }
  [[nodiscard]] std::pair<double, double> support() const { return {lo_, hi_}; }

  [[nodiscard]] double pdf(double s) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      const double z = (s - centers_[i]) * inv_h_[i];
      sum += weights_[i] * inv_h_[i] * std::exp(-0.5 * z * z);
    }
    return sum / std::sqrt(2.0 * std::numbers::pi);
  }

  [[nodiscard]] double cdf(double s) const {
    if (std::isnan(s)) return s;
    const auto& phi = detail::normal_cdf_table();
    double sum = 0.0;
    const std::size_t n = centers_.size();
    for (std::size_t i = 0; i < n; ++i) sum += weights_[i] * phi(s * inv_h_[i] - offset_[i]);
    return std::clamp(sum, 0.0, 1.0);
  }

  /// CDF computed with erfc instead of the interpolation table.
  [[nodiscard]] double cdf_exact(double s) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < centers_.size(); ++i) sum += weights_[i] * gaussian_cdf((s - centers_[i]) * inv_h_[i]);
    return std::clamp(sum, 0.0, 1.0);
  }

  [[nodiscard]] std::pair<double, double> cdf_pdf(double s) const {
    if (std::isnan(s)) return {s, s};
    const auto& phi = detail::normal_cdf_table();
    double c = 0.0, p = 0.0;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      const auto [f, d] = phi.with_density(s * inv_h_[i] - offset_[i]);
      c += weights_[i] * f;
      p += weights_[i] * inv_h_[i] * d;
    }
    return {std::clamp(c, 0.0, 1.0), p};
  }

  /// Standardised quantile at level index k of kQuantileLevels.
  [[nodiscard]] double level_quantile(std::size_t k) const { return levels_.at(k); }
  [[nodiscard]] const std::array<double, kNumLevels>& level_quantiles() const { return levels_; }

  [[nodiscard]] double quantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::InvalidConfig, "quantile level must be in (0, 1)");
    for (std::size_t k = 0; k < kNumLevels; ++k) {
      if (q == kQuantileLevels[k]) return levels_[k];
    }
    return solve_quantile(q, lo_, hi_, std::nullopt);
  }

  /// CRPS of the mixture at standardised outcome s: integral of
  /// (F(x) - 1{x >= s})^2 by adaptive Gauss-Kronrod quadrature, split at s.
  [[nodiscard]] double crps(double s) const;

 private:
  void prune_and_normalize(double prune) {
    double wmax = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidSample, "mixture weights must be >= 0");
      wmax = std::max(wmax, w);
    }
    if (!(wmax > 0.0)) throw Error(ErrorCode::Sparsity, "mixture weights are all zero");
    const double cut = prune * wmax;
    std::size_t j = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] > cut || weights_[i] == wmax) {
        centers_[j] = centers_[i];
        bandwidths_[j] = bandwidths_[i];
        weights_[j] = weights_[i];
        total += weights_[i];
        ++j;
      }
    }
    centers_.resize(j);
    bandwidths_.resize(j);
    weights_.resize(j);
    for (double& w : weights_) w /= total;
  }

  // Newton's method kept inside a shrinking bracket; falls back to bisection
  // whenever the step leaves the bracket.
  [[nodiscard]] double solve_quantile(double q, double lo, double hi, std::optional<double> guess) const {
    double x = guess ? *guess : mean_ + sd_ * gaussian_quantile_approx(q);
    if (!(x > lo)) x = lo;
    if (!(x < hi)) x = hi;
    for (int it = 0; it < 200; ++it) {
      const auto [f, p] = cdf_pdf(x);
      const double g = f - q;
      if (std::abs(g) <= 1e-12) return x;
      if (g < 0.0) {
        lo = x;
      } else {
        hi = x;
      }
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) return x;
      double next = p > 0.0 ? x - g / p : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      x = next;
    }
    return x;
  }

  std::vector<double> centers_;
  std::vector<double> bandwidths_;
  std::vector<double> weights_;
  std::vector<double> inv_h_;
  std::vector<double> offset_;  // c_i / h_i
  double lo_ = 0.0;
  double hi_ = 0.0;
  double mean_ = 0.0;
  double sd_ = 1.0;
  std::array<double, kNumLevels> levels_{};
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

// One G7K15 panel: returns (Kronrod estimate, error estimate), the error
// scaled as in QUADPACK's qk15.
template <class F>
std::pair<double, double> gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  std::array<double, 15> fv;
  fv[7] = f(c);
  for (std::size_t i = 0; i < 7; ++i) {
    const double dx = h * kKronrodNodes[i];
    fv[i] = f(c - dx);
    fv[14 - i] = f(c + dx);
  }
  double k = fv[7] * kKronrodWeights[7];
  double g = fv[7] * kGaussWeights[3];
  for (std::size_t i = 0; i < 7; ++i) {
    const double s = fv[i] + fv[14 - i];
    k += kKronrodWeights[i] * s;
    if (i % 2 == 1) g += kGaussWeights[i / 2] * s;
  }
  const double mean = 0.5 * k;
  double asc = kKronrodWeights[7] * std::abs(fv[7] - mean);
  for (std::size_t i = 0; i < 7; ++i) {
    asc += kKronrodWeights[i] * (std::abs(fv[i] - mean) + std::abs(fv[14 - i] - mean));
  }
  asc *= std::abs(h);
  double err = std::abs((k - g) * h);
  if (asc != 0.0 && err != 0.0) err = asc * std::min(1.0, std::pow(200.0 * err / asc, 1.5));
  return {k * h, err};
}

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

// Globally adaptive G7K15: bisects the panel with the largest error estimate
// until the summed estimate is below tol or max_panels is reached. f(x, i)
// receives the index of the initial panel containing x.
template <class F>
double adaptive_gk(F&& f, std::span<const double> cuts, double tol, std::size_t max_panels = 2000) {
  std::vector<Panel> heap;
  double value = 0.0, error = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (!(cuts[i + 1] > cuts[i])) continue;
    auto g = [&](double x) { return f(x, i); };
    const auto [v, e] = gk15(g, cuts[i], cuts[i + 1]);
    heap.push_back({cuts[i], cuts[i + 1], v, e});
    value += v;
    error += e;
  }
  auto owner_of = [&](double x) {
    return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin()) - 1;
  };
  std::make_heap(heap.begin(), heap.end());
  while (error > tol && heap.size() < max_panels) {
    std::pop_heap(heap.begin(), heap.end());
    const Panel p = heap.back();
    heap.pop_back();
    const double m = 0.5 * (p.a + p.b);
    if (!(m > p.a && m < p.b)) {
      heap.push_back({p.a, p.b, p.value, 0.0});
      std::push_heap(heap.begin(), heap.end());
      error -= p.error;
      continue;
    }
    const std::size_t idx = owner_of(m);
    auto g = [&](double x) { return f(x, idx); };
    const auto [v1, e1] = gk15(g, p.a, m);
    const auto [v2, e2] = gk15(g, m, p.b);
    value += v1 + v2 - p.value;
    error += e1 + e2 - p.error;
    heap.push_back({p.a, m, v1, e1});
    std::push_heap(heap.begin(), heap.end());
    heap.push_back({m, p.b, v2, e2});
    std::push_heap(heap.begin(), heap.end());
  }
  return value;
}
}  // namespace detail

inline double KernelMixture::crps(double s) const {
  // Summed error estimate; the QUADPACK estimate overstates the true error by
  // orders of magnitude on these integrands.
  constexpr double tol = 1e-6;
  const double lo = std::min(lo_, s);
  const double hi = std::max(hi_, s);
  // Panel breakpoints: a uniform split plus, for components much narrower
  // than the mixture spread, their center and +-6 bandwidths. A step that falls
  // between an endpoint and the first Kronrod node is invisible to both rules,
  // so each side of a narrow step gets its own short panel.
  std::vector<double> cuts;
  constexpr int base_panels = 4;
  for (int i = 0; i <= base_panels; ++i) cuts.push_back(lo + (hi - lo) * i / base_panels);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    m1 += weights_[i] * centers_[i];
    m2 += weights_[i] * (centers_[i] * centers_[i] + bandwidths_[i] * bandwidths_[i]);
  }
  const double narrow = std::sqrt(std::max(m2 - m1 * m1, 0.0)) / 16.0;
  std::vector<std::pair<double, std::size_t>> thin;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    if (bandwidths_[i] < narrow) thin.emplace_back(weights_[i], i);
  }
  constexpr std::size_t max_thin = 256;
  if (thin.size() > max_thin) {
    std::nth_element(thin.begin(), thin.begin() + max_thin, thin.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    thin.resize(max_thin);
  }
  for (const auto& [w, i] : thin) {
    cuts.push_back(centers_[i] - 6.0 * bandwidths_[i]);
    cuts.push_back(centers_[i]);
    cuts.push_back(centers_[i] + 6.0 * bandwidths_[i]);
  }
  cuts.push_back(s);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Panels left of s integrate F^2, panels right of it (1 - F)^2.
  const std::size_t split = static_cast<std::size_t>(std::find(cuts.begin(), cuts.end(), s) - cuts.begin());
  auto integrand = [this, split](double x, std::size_t panel) {
    const double f = cdf(x);
    const double v = panel < split ? f : 1.0 - f;
    return v * v;
  };
  const double total = detail::adaptive_gk(integrand, cuts, tol);
  return std::max(total, 0.0);
}

using KernelMixturePtr = std::shared_ptr<const KernelMixture>;

/// Location-scale view y = location + scale * s of a standardised mixture.
struct PredictiveDensity {
  KernelMixturePtr mixture;
  double location = 0.0;
  double scale = 1.0;

  [[nodiscard]] double standardize(double y) const { return (y - location) / scale; }
  [[nodiscard]] double pdf(double y) const { return mixture->pdf(standardize(y)) / scale; }
  [[nodiscard]] double cdf(double y) const { return mixture->cdf(standardize(y)); }
  [[nodiscard]] double quantile(double q) const { return location + scale * mixture->quantile(q); }
  [[nodiscard]] double level_quantile(std::size_t k) const { return location + scale * mixture->level_quantile(k); }
  [[nodiscard]] double mean() const { return location + scale * mixture->mean(); }
  [[nodiscard]] double crps(double y) const { return scale * mixture->crps(standardize(y)); }
  [[nodiscard]] std::pair<double, double> support() const {
    const auto [a, b] = mixture->support();
    return {location + scale * a, location + scale * b};
  }
};

inline PredictiveDensity make_density(std::vector<double> centers, std::vector<double> bandwidths, double location,
                                      double scale, std::vector<double> weights = {}) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidConfig, "density scale must be > 0");
  return {std::make_shared<const KernelMixture>(std::move(centers), std::move(bandwidths), std::move(weights)),
          location, scale};
}

inline double pdf(const PredictiveDensity& d, double y) { return d.pdf(y); }
inline double cdf(const PredictiveDensity& d, double y) { return d.cdf(y); }
inline double quantile(const PredictiveDensity& d, double q) { return d.quantile(q); }

}  // namespace dear
