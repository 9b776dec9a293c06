#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dear/error.hpp"

namespace dear {

enum class VariableKind { Linear, Circular };

/// Kernel values below this are flushed to zero so weight sums never carry denormals.
inline constexpr double kKernelFlush = 1e-300;

/// Largest Von Mises concentration 1/h^2 accepted before the overflow guard trips.
inline constexpr double kMaxConcentration = 700.0;

/// Upper limit on the number of covariates the kernel evaluator handles.
inline constexpr std::size_t kMaxDim = 16;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduces an angle to [0, 2pi).
inline double reduce_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Wraps an angular difference to (-pi, pi].
inline double wrap_angle(double u) {
  double r = std::fmod(u, kTwoPi);
  if (r > std::numbers::pi) r -= kTwoPi;
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

namespace detail {

inline constexpr double kSeriesLimit = 15.0;

// Sum of (x/2)^{2k}/(k!)^2; all terms positive so no cancellation.
inline double bessel_i0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Asymptotic factor S(x) with I0(x) = e^x / sqrt(2 pi x) * S(x). Truncated at
// the smallest term; for x > 15 that term is below 1e-13.
inline double bessel_i0_asymptotic_factor(double x) {
  const double z = 8.0 * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * odd * odd / (static_cast<double>(k) * z);
    if (next > term) break;
    term = next;
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

/// log(I0(x)) - x, finite for every x >= 0.
inline double log_bessel_i0_scaled(double x) {
  if (x <= kSeriesLimit) return std::log(bessel_i0_series(x)) - x;
  return -0.5 * std::log(kTwoPi * x) + std::log(bessel_i0_asymptotic_factor(x));
}

inline double flush(double v) { return v < kKernelFlush ? 0.0 : v; }

inline void check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::InvalidBandwidth, "bandwidth must be positive and finite, got " + std::to_string(h));
  }
}

inline double von_mises_concentration(double h) {
  check_bandwidth(h);
  const double kappa = 1.0 / (h * h);
  if (kappa > kMaxConcentration) {
    throw Error(ErrorCode::OverflowGuard,
                "Von Mises concentration 1/h^2 = " + std::to_string(kappa) + " exceeds 700");
  }
  return kappa;
}

// Normalised Von Mises density, log-domain: exp(kappa (cos u - 1) - log 2pi - (log I0 - kappa)).
inline double von_mises_eval(double u, double kappa, double log_norm) {
  return flush(std::exp(kappa * (std::cos(u) - 1.0) + log_norm));
}

inline double von_mises_log_norm(double kappa) {
  return -std::log(kTwoPi) - log_bessel_i0_scaled(kappa);
}

inline double gaussian_eval(double u, double coef, double inv_two_h2) {
  return flush(coef * std::exp(-u * u * inv_two_h2));
}

}  // namespace detail

/// Modified Bessel function of the first kind, order 0. Power series up to
/// x = 15, asymptotic expansion above; relative error below 1e-10 throughout.
/// Past x = 700 the value overflows, use log_bessel_i0 there.
inline double bessel_i0(double x) {
  if (!(x >= 0.0)) throw Error(ErrorCode::InvalidSample, "bessel_i0 requires x >= 0");
  if (x > kMaxConcentration) {
    throw Error(ErrorCode::OverflowGuard, "bessel_i0 overflows for x > 700; use log_bessel_i0");
  }
  if (x <= detail::kSeriesLimit) return detail::bessel_i0_series(x);
  return std::exp(x) / std::sqrt(kTwoPi * x) * detail::bessel_i0_asymptotic_factor(x);
}

inline double log_bessel_i0(double x) {
  if (!(x >= 0.0)) throw Error(ErrorCode::InvalidSample, "log_bessel_i0 requires x >= 0");
  return detail::log_bessel_i0_scaled(x) + x;
}

/// K(u; h) = exp(-u^2 / (2 h^2)) / (sqrt(2 pi) h)
inline double gaussian_kernel(double u, double h) {
  detail::check_bandwidth(h);
  return detail::gaussian_eval(u, 1.0 / (std::sqrt(kTwoPi) * h), 0.5 / (h * h));
}

/// K(u; h) = exp(cos(u) / h^2) / (2 pi I0(1 / h^2)), evaluated in the log domain.
inline double von_mises_kernel(double u, double h) {
  const double kappa = detail::von_mises_concentration(h);
  return detail::von_mises_eval(u, kappa, detail::von_mises_log_norm(kappa));
}

struct VariableSpec {
  VariableKind kind = VariableKind::Linear;
  double bandwidth = 1.0;
};

/// Per-variable kernels plus the additive group structure: the multivariate
/// weight is the mean over groups of the product kernel of each group.
struct KernelConfig {
  std::vector<VariableSpec> variables;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> anchors;

  [[nodiscard]] std::size_t dim() const { return variables.size(); }

  void validate() const {
    if (variables.empty()) throw Error(ErrorCode::InvalidConfig, "kernel config has no variables");
    if (variables.size() > kMaxDim) throw Error(ErrorCode::InvalidConfig, "too many covariates");
    for (const auto& v : variables) {
      detail::check_bandwidth(v.bandwidth);
      if (v.kind == VariableKind::Circular) detail::von_mises_concentration(v.bandwidth);
    }
    if (groups.empty()) throw Error(ErrorCode::InvalidConfig, "kernel config has no groups");
    std::vector<bool> covered(variables.size(), false);
    for (const auto& g : groups) {
      if (g.empty()) throw Error(ErrorCode::InvalidConfig, "empty kernel group");
      if (g.size() > 3) throw Error(ErrorCode::InvalidConfig, "kernel group larger than 3");
      for (std::size_t j : g) {
        if (j >= variables.size()) throw Error(ErrorCode::InvalidConfig, "group index out of range");
        covered[j] = true;
      }
      for (std::size_t a : anchors) {
        if (std::find(g.begin(), g.end(), a) == g.end()) {
          throw Error(ErrorCode::InvalidConfig, "anchor variable missing from a group");
        }
      }
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
      throw Error(ErrorCode::InvalidConfig, "groups do not cover every variable");
    }
  }
};

/// Groups used when the config does not list any: one product kernel when
/// d <= 3, otherwise every anchors-plus-others combination of size 3.
inline std::vector<std::vector<std::size_t>> default_groups(std::size_t d,
                                                            const std::vector<std::size_t>& anchors = {}) {
  std::vector<std::vector<std::size_t>> groups;
  if (d == 0) return groups;
  if (d <= 3) {
    std::vector<std::size_t> all(d);
    for (std::size_t j = 0; j < d; ++j) all[j] = j;
    groups.push_back(all);
    return groups;
  }
  if (anchors.size() >= 3) throw Error(ErrorCode::InvalidConfig, "at most two anchors allowed when d > 3");
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < d; ++j) {
    if (std::find(anchors.begin(), anchors.end(), j) == anchors.end()) free.push_back(j);
  }
  const std::size_t slots = 3 - anchors.size();
  std::vector<bool> pick(free.size(), false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(slots), true);
  do {
    std::vector<std::size_t> g(anchors.begin(), anchors.end());
    for (std::size_t i = 0; i < free.size(); ++i) {
      if (pick[i]) g.push_back(free[i]);
    }
    std::sort(g.begin(), g.end());
    groups.push_back(std::move(g));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return groups;
}

inline KernelConfig make_kernel_config(const std::vector<VariableKind>& kinds, const std::vector<double>& bandwidths,
                                       std::vector<std::vector<std::size_t>> groups = {},
                                       std::vector<std::size_t> anchors = {}) {
  if (kinds.size() != bandwidths.size()) {
    throw Error(ErrorCode::LengthMismatch, "kinds and bandwidths differ in length");
  }
  KernelConfig cfg;
  for (std::size_t j = 0; j < kinds.size(); ++j) cfg.variables.push_back({kinds[j], bandwidths[j]});
  cfg.groups = groups.empty() ? default_groups(kinds.size(), anchors) : std::move(groups);
  cfg.anchors = std::move(anchors);
  cfg.validate();
  return cfg;
}

/// Precomputed evaluator for amk_weight. Holds per-variable normalising
/// constants so the Bessel function is evaluated once per bandwidth.
class AmkKernel {
 public:
  AmkKernel() = default;

  explicit AmkKernel(KernelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t d = cfg_.dim();
    params_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = cfg_.variables[j].bandwidth;
      Param& p = params_[j];
      p.circular = cfg_.variables[j].kind == VariableKind::Circular;
      if (p.circular) {
        p.a = detail::von_mises_concentration(h);
        p.b = detail::von_mises_log_norm(p.a);
      } else {
        p.a = 1.0 / (std::sqrt(kTwoPi) * h);
        p.b = 0.5 / (h * h);
      }
    }
    single_product_ = cfg_.groups.size() == 1 && cfg_.groups.front().size() == d;
  }

  [[nodiscard]] const KernelConfig& config() const { return cfg_; }
  [[nodiscard]] std::size_t dim() const { return params_.size(); }

  /// Univariate kernel of variable j at raw difference u.
  [[nodiscard]] double component(std::size_t j, double u) const {
    const Param& p = params_[j];
    if (p.circular) return detail::von_mises_eval(wrap_angle(u), p.a, p.b);
    return detail::gaussian_eval(u, p.a, p.b);
  }

  /// Combines per-variable kernel values into the additive-multiplicative weight.
  [[nodiscard]] double combine(const double* k) const {
    if (single_product_) {
      double prod = 1.0;
      for (std::size_t j = 0; j < params_.size(); ++j) prod *= k[j];
      return detail::flush(prod);
    }
    double sum = 0.0;
    for (const auto& g : cfg_.groups) {
      double prod = 1.0;
      for (std::size_t j : g) prod *= k[j];
      sum += detail::flush(prod);
    }
    return detail::flush(sum / static_cast<double>(cfg_.groups.size()));
  }

  [[nodiscard]] double operator()(const double* x, const double* xi) const {
    std::array<double, kMaxDim> k{};
    for (std::size_t j = 0; j < params_.size(); ++j) k[j] = component(j, x[j] - xi[j]);
    return combine(k.data());
  }

  [[nodiscard]] double operator()(std::span<const double> x, std::span<const double> xi) const {
    return (*this)(x.data(), xi.data());
  }

 private:
  struct Param {
    bool circular = false;
    double a = 0.0;  // Gaussian: 1/(sqrt(2pi) h); Von Mises: kappa
    double b = 0.0;  // Gaussian: 1/(2h^2); Von Mises: log normaliser
  };

  KernelConfig cfg_;
  std::vector<Param> params_;
  bool single_product_ = false;
};

/// Product kernel over the members of `group`. Circular distances are
/// wrapped to (-pi, pi] before evaluation.
inline double multiplicative_kernel(std::span<const double> x, std::span<const double> xi, const KernelConfig& cfg,
                                    std::span<const std::size_t> group) {
  if (group.empty()) throw Error(ErrorCode::InvalidConfig, "empty kernel group");
  if (x.size() != cfg.dim() || xi.size() != cfg.dim()) {
    throw Error(ErrorCode::LengthMismatch, "covariate vector does not match kernel config");
  }
  double prod = 1.0;
  for (std::size_t j : group) {
    if (j >= cfg.dim()) throw Error(ErrorCode::InvalidConfig, "group index out of range");
    const auto& v = cfg.variables[j];
    const double u = x[j] - xi[j];
    prod *= v.kind == VariableKind::Circular ? von_mises_kernel(wrap_angle(u), v.bandwidth)
                                             : gaussian_kernel(u, v.bandwidth);
  }
  return detail::flush(prod);
}

/// Mean over the configured groups of their multiplicative kernels.
inline double amk_weight(std::span<const double> x, std::span<const double> xi, const KernelConfig& cfg) {
  if (cfg.groups.empty()) throw Error(ErrorCode::InvalidConfig, "kernel config has no groups");
  double sum = 0.0;
  for (const auto& g : cfg.groups) sum += multiplicative_kernel(x, xi, cfg, g);
  return detail::flush(sum / static_cast<double>(cfg.groups.size()));
}

}  // namespace dear
