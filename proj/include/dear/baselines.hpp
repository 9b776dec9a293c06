#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dear/bandwidth.hpp"
#include "dear/density.hpp"
#include "dear/error.hpp"
#include "dear/estimator.hpp"
#include "dear/forecast.hpp"
#include "dear/kernels.hpp"
#include "dear/smooth.hpp"

namespace dear {

enum class BaselineKind { AMK, AML, Persistence, KDES };

struct BaselineConfig {
  double lambda = 1.0;  // KDES forgetting factor
  std::optional<double> tau;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> anchors;
  std::optional<std::vector<double>> bandwidths;  // covariate bandwidths
  std::optional<double> response_bandwidth;       // h_y of the AMK/KDES mixture
  std::size_t min_window = 1;
  std::size_t refit_every = 0;  // 0: window / 10
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double prune = 1e-12;  // mixture components below prune * max weight are dropped

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be in (0, 1]");
    if (!(lower < upper)) throw Error(ErrorCode::InvalidConfig, "lower bound must be below upper bound");
    if (tau && !(*tau >= 0.0)) throw Error(ErrorCode::InvalidConfig, "sparsity threshold must be >= 0");
    if (response_bandwidth && !(*response_bandwidth > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "response bandwidth must be > 0");
    }
    if (!(prune >= 0.0 && prune < 1.0)) throw Error(ErrorCode::InvalidConfig, "prune must be in [0, 1)");
  }
};

/// Covariate smoother plus response bandwidth: everything the conditional
/// kernel density needs.
struct ConditionalKde {
  SmootherFit fit;
  double response_bandwidth = 1.0;
};

namespace detail {

inline std::vector<double> covariate_bandwidths(const Covariates& x, std::span<const double> y,
                                                const std::vector<VariableKind>& kinds, const BaselineConfig& cfg) {
  if (cfg.bandwidths) {
    if (cfg.bandwidths->size() != kinds.size()) throw Error(ErrorCode::LengthMismatch, "bandwidth count mismatch");
    return *cfg.bandwidths;
  }
  return bandwidth_values(select_regression_bandwidths(x.values, x.dim, y, kinds), nullptr);
}

inline SmootherFit baseline_smoother(const CovariatesPtr& x, const std::vector<double>& y,
                                     const std::vector<VariableKind>& kinds, const BaselineConfig& cfg, Method method) {
  const auto h = covariate_bandwidths(*x, y, kinds, cfg);
  return SmootherFit(x, y, make_kernel_config(kinds, h, cfg.groups, cfg.anchors), method, cfg.tau);
}

inline PredictiveDensity weighted_density(const std::vector<double>& centers, double h, std::vector<double> weights,
                                          double prune) {
  std::vector<double> hs(centers.size(), h);
  auto mix = std::make_shared<const KernelMixture>(centers, std::move(hs), std::move(weights), prune);
  return PredictiveDensity{std::move(mix), 0.0, 1.0};
}

}  // namespace detail

inline ConditionalKde fit_conditional_kde(const CovariatesPtr& x, const std::vector<double>& y,
                                          const std::vector<VariableKind>& kinds, const BaselineConfig& cfg = {}) {
  cfg.validate();
  if (!x || y.empty()) throw Error(ErrorCode::InsufficientData, "empty training window");
  ConditionalKde out;
  out.fit = detail::baseline_smoother(x, y, kinds, cfg, Method::NadarayaWatson);
  out.response_bandwidth = cfg.response_bandwidth ? *cfg.response_bandwidth : dpi_density_bandwidth(y).value;
  return out;
}

/// Conditional kernel density sum_i w_i(x) K(y - Y_i; h_y) with
/// Nadaraya-Watson weights under the additive multiplicative kernel.
inline PredictiveDensity amk_density(std::span<const double> x, const ConditionalKde& kde, double prune = 1e-12) {
  return detail::weighted_density(kde.fit.responses(), kde.response_bandwidth, nw_weights(x, kde.fit), prune);
}

/// Local linear mean under the additive multiplicative kernel. Sparsity
/// errors propagate.
inline double aml_mean(std::span<const double> x, const SmootherFit& fit) { return local_linear_mean(x, fit); }

inline double persistence(std::span<const double> history) {
  if (history.empty()) throw Error(ErrorCode::InsufficientHistory, "persistence needs at least one observation");
  return history.back();
}

/// Weights proportional to lambda^(t_now - i) K(x, X_i) for rows i = 1..T,
/// normalised to sum to one.
inline std::vector<double> kdes_weights(std::span<const double> x, const SmootherFit& fit, double lambda,
                                        std::size_t t_now) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be in (0, 1]");
  const std::size_t n = fit.size();
  if (t_now < n) throw Error(ErrorCode::InvalidConfig, "t_now precedes the last training row");
  std::vector<double> k;
  detail::kernel_weights(fit.kernel(), fit.covariates(), x.data(), k);
  // Scaled by lambda^-(youngest age) so the newest row's factor is 1.
  const double log_l = std::log(lambda);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lambda < 1.0) k[i] *= std::exp(static_cast<double>(n - 1 - i) * log_l);
    sum += k[i];
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::Sparsity, "all forgetting-weighted kernel weights underflow");
  detail::normalize_in_place(k, sum);
  return k;
}

inline PredictiveDensity kdes_density(std::span<const double> x, const ConditionalKde& kde, double lambda,
                                      std::size_t t_now, double prune = 1e-12) {
  return detail::weighted_density(kde.fit.responses(), kde.response_bandwidth,
                                  kdes_weights(x, kde.fit, lambda, t_now), prune);
}

namespace detail {

// Most recent rows of a series, oldest first, bounded by a capacity.
class RowBuffer {
 public:
  RowBuffer() = default;
  RowBuffer(const Window& w, std::size_t capacity)
      : dim_(w.x->dim), capacity_(capacity), x_(w.x->values), y_(w.y) {
    if (w.x->size() != w.y.size()) throw Error(ErrorCode::LengthMismatch, "covariates and targets differ in length");
  }

  void push(std::span<const double> x, double y) {
    if (x.size() != dim_) throw Error(ErrorCode::LengthMismatch, "covariate vector has wrong length");
    x_.insert(x_.end(), x.begin(), x.end());
    y_.push_back(y);
    if (y_.size() > capacity_) {
      const std::size_t drop = y_.size() - capacity_;
      x_.erase(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(drop * dim_));
      y_.erase(y_.begin(), y_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
  }

  [[nodiscard]] CovariatesPtr covariates() const { return std::make_shared<const Covariates>(dim_, x_); }
  [[nodiscard]] const std::vector<double>& y() const { return y_; }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }

 private:
  std::size_t dim_ = 0;
  std::size_t capacity_ = 0;
  std::vector<double> x_;
  std::vector<double> y_;
};

inline void check_window(const Window& w, std::size_t min_window) {
  if (!w.x || w.y.empty()) throw Error(ErrorCode::InsufficientData, "empty training window");
  if (w.x->size() != w.y.size()) throw Error(ErrorCode::LengthMismatch, "covariates and targets differ in length");
  if (w.kinds.size() != w.x->dim) throw Error(ErrorCode::LengthMismatch, "variable kinds do not match covariates");
  if (w.y.size() < min_window) throw Error(ErrorCode::InsufficientData, "window shorter than the configured minimum");
}

inline std::size_t cadence(std::size_t refit_every, std::size_t capacity) {
  return refit_every > 0 ? refit_every : std::max<std::size_t>(1, capacity / 10);
}

}  // namespace detail

/// Rolling AML: local linear conditional mean, point forecast only.
class AmlModel {
 public:
  static AmlModel fit(const Window& w, const BaselineConfig& cfg = {}) {
    cfg.validate();
    detail::check_window(w, cfg.min_window);
    AmlModel m;
    m.cfg_ = cfg;
    m.kinds_ = w.kinds;
    m.rows_ = detail::RowBuffer(w, w.y.size());
    m.refit_every_ = detail::cadence(cfg.refit_every, w.y.size());
    m.refit();
    return m;
  }

  [[nodiscard]] const SmootherFit& smoother() const { return fit_; }

  [[nodiscard]] Forecast forecast(std::span<const double> x, bool = true) const {
    const auto row = fit_.row(x);
    Forecast f = make_forecast(fit_.dot(row.weights), std::nullopt, cfg_.lower, cfg_.upper);
    f.sparse = row.kind != RowKind::LocalLinear;
    return f;
  }

  void update(std::span<const double> x, double y, bool = true) {
    rows_.push(x, y);
    if (++steps_ >= refit_every_) {
      refit();
    } else {
      fit_ = fit_.with_training(rows_.covariates(), rows_.y());
    }
  }

 private:
  void refit() {
    fit_ = detail::baseline_smoother(rows_.covariates(), rows_.y(), kinds_, cfg_, Method::LocalLinear);
    steps_ = 0;
  }

  BaselineConfig cfg_;
  std::vector<VariableKind> kinds_;
  detail::RowBuffer rows_;
  SmootherFit fit_;
  std::size_t refit_every_ = 1;
  std::size_t steps_ = 0;
};

/// Rolling conditional kernel density: AMK when lambda = 1, KDES otherwise.
/// The forecast mean is the mixture mean sum_i w_i Y_i. When every weight
/// underflows the forecast falls back to uniform weights and is flagged
/// sparse.
class KernelDensityModel {
 public:
  static KernelDensityModel fit(const Window& w, const BaselineConfig& cfg = {}) {
    cfg.validate();
    detail::check_window(w, cfg.min_window);
    KernelDensityModel m;
    m.cfg_ = cfg;
    m.kinds_ = w.kinds;
    m.rows_ = detail::RowBuffer(w, w.y.size());
    m.refit_every_ = detail::cadence(cfg.refit_every, w.y.size());
    m.refit();
    return m;
  }

  [[nodiscard]] const ConditionalKde& kde() const { return kde_; }
  [[nodiscard]] double lambda() const { return cfg_.lambda; }

  [[nodiscard]] Forecast forecast(std::span<const double> x, bool = true) const {
    const std::size_t n = kde_.fit.size();
    bool sparse = false;
    PredictiveDensity d;
    try {
      d = cfg_.lambda < 1.0 ? kdes_density(x, kde_, cfg_.lambda, n + 1, cfg_.prune)
                            : amk_density(x, kde_, cfg_.prune);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Sparsity) throw;
      sparse = true;
      d = detail::weighted_density(kde_.fit.responses(), kde_.response_bandwidth, {}, 0.0);
    }
    const double mu = d.mean();
    Forecast f = make_forecast(mu, std::move(d), cfg_.lower, cfg_.upper);
    f.sparse = sparse;
    return f;
  }

  void update(std::span<const double> x, double y, bool = true) {
    rows_.push(x, y);
    if (++steps_ >= refit_every_) {
      refit();
    } else {
      kde_.fit = kde_.fit.with_training(rows_.covariates(), rows_.y());
    }
  }

 private:
  void refit() {
    kde_ = fit_conditional_kde(rows_.covariates(), rows_.y(), kinds_, cfg_);
    steps_ = 0;
  }

  BaselineConfig cfg_;
  std::vector<VariableKind> kinds_;
  detail::RowBuffer rows_;
  ConditionalKde kde_;
  std::size_t refit_every_ = 1;
  std::size_t steps_ = 0;
};

/// Last observed value as a point forecast.
class PersistenceModel {
 public:
  static PersistenceModel fit(const Window& w, const BaselineConfig& cfg = {}) {
    cfg.validate();
    if (w.y.empty()) throw Error(ErrorCode::InsufficientHistory, "persistence needs at least one observation");
    PersistenceModel m;
    m.cfg_ = cfg;
    m.last_ = w.y.back();
    return m;
  }

  [[nodiscard]] Forecast forecast(std::span<const double>, bool = true) const {
    return make_forecast(last_, std::nullopt, cfg_.lower, cfg_.upper);
  }

  void update(std::span<const double>, double y, bool = true) { last_ = y; }

 private:
  BaselineConfig cfg_;
  double last_ = 0.0;
};

}  // namespace dear
