#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dear/bandwidth.hpp"
#include "dear/density.hpp"
#include "dear/detail/format.hpp"
#include "dear/error.hpp"
#include "dear/forecast.hpp"
#include "dear/kernels.hpp"
#include "dear/smooth.hpp"
#include "dear/tseries.hpp"

namespace dear {

struct DearConfig {
  std::size_t p_max = 5;
  std::optional<std::size_t> order;  // fixed AR order, skips selection
  OrderCriterion criterion = OrderCriterion::BIC;
  bool ar_intercept = false;
  double alpha = 0.05;
  double coef_tol = 1e-4;
  std::size_t max_iterations = 10;
  std::size_t min_window = 200;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::optional<double> tau;
  Method mean_method = Method::LocalLinear;
  Method variance_method = Method::LocalLinear;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> anchors;
  std::optional<std::vector<double>> bandwidths;  // fixed mean-smoother bandwidths
  std::size_t refit_every = 0;                    // 0: window / 10
  bool refit_density_bandwidth = true;            // false keeps h_r from the first fit

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be in (0, 1)");
    if (!(coef_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "coefficient tolerance must be > 0");
    if (max_iterations == 0) throw Error(ErrorCode::InvalidConfig, "max_iterations must be >= 1");
    if (!(lower < upper)) throw Error(ErrorCode::InvalidConfig, "lower bound must be below upper bound");
    if (tau && !(*tau >= 0.0)) throw Error(ErrorCode::InvalidConfig, "sparsity threshold must be >= 0");
    if (order && *order > p_max) throw Error(ErrorCode::InvalidConfig, "fixed order exceeds p_max");
  }
};

/// Training rows: covariates, raw targets, kinds and, per row, the number of
/// immediately preceding rows with no time gap in between (empty = no gaps).
struct Window {
  CovariatesPtr x;
  std::vector<double> y;
  std::vector<VariableKind> kinds;
  std::vector<std::size_t> run;
};

/// Runs from break flags: run[t] = 0 after a gap, else run[t-1] + 1.
inline std::vector<std::size_t> contiguity_runs(const std::vector<bool>& break_before) {
  std::vector<std::size_t> run(break_before.size(), 0);
  for (std::size_t t = 1; t < run.size(); ++t) run[t] = break_before[t] ? 0 : run[t - 1] + 1;
  return run;
}

/// Initial smoothers of the window (first step of the fitting loop).
struct InitialFit {
  SmootherFit mean;
  VarianceFit variance;
  std::vector<double> fitted_mean;
  std::vector<double> fitted_sd;
  BandwidthReport bandwidths;
  std::size_t fallback_rows = 0;
};

namespace detail {

inline constexpr std::size_t kDenseHatLimit = 6000;

// In-sample application of a linear smoother: dense hat matrix for moderate
// T, otherwise rows recomputed on every call.
class InSampleSmoother {
 public:
  InSampleSmoother() = default;

  // Builds the fit with its sparsity threshold taken from the kernel matrix
  // when none is configured, so that matrix is computed only once.
  InSampleSmoother(CovariatesPtr x, std::vector<double> y, KernelConfig cfg, Method method, std::optional<double> tau) {
    const std::size_t n = x->size();
    if (n <= kDenseHatLimit) {
      SmootherFit probe(x, y, cfg, method, 0.0);
      RowMatrix K;
      probe.fill_kernel_matrix(K);
      if (!tau) tau = kDefaultTauFactor * K.rowwise().sum().maxCoeff() / static_cast<double>(n);
      fit_ = SmootherFit(std::move(x), std::move(y), std::move(cfg), method, tau);
      fit_.kernel_to_hat(K, &fallback_rows_);
      hat_ = std::move(K);
      dense_ = true;
    } else {
      fit_ = SmootherFit(std::move(x), std::move(y), std::move(cfg), method, tau);
      for (std::size_t t = 0; t < n; ++t) {
        if (fit_.row(fit_.covariates().row(t)).kind != RowKind::LocalLinear && method == Method::LocalLinear) {
          ++fallback_rows_;
        }
      }
    }
  }

  [[nodiscard]] const SmootherFit& fit() const { return fit_; }
  [[nodiscard]] std::size_t fallback_rows() const { return fallback_rows_; }

  [[nodiscard]] std::vector<double> apply(const std::vector<double>& v) const {
    const std::size_t n = v.size();
    std::vector<double> out(n);
    if (dense_) {
      Eigen::Map<const Eigen::VectorXd> vin(v.data(), static_cast<Eigen::Index>(n));
      Eigen::Map<Eigen::VectorXd> vout(out.data(), static_cast<Eigen::Index>(n));
      vout.noalias() = hat_ * vin;
    } else {
      const Covariates& X = fit_.covariates();
      for (std::size_t t = 0; t < n; ++t) {
        const auto w = fit_.row(X.row(t)).weights;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += w[i] * v[i];
        out[t] = s;
      }
    }
    return out;
  }

 private:
  SmootherFit fit_;
  RowMatrix hat_;
  bool dense_ = false;
  std::size_t fallback_rows_ = 0;
};

inline KernelConfig kernel_config_for(const std::vector<VariableKind>& kinds, const std::vector<double>& bandwidths,
                                      const DearConfig& cfg) {
  return make_kernel_config(kinds, bandwidths, cfg.groups, cfg.anchors);
}

inline std::vector<double> bandwidth_values(const std::vector<BandwidthChoice>& c, bool* fallback) {
  std::vector<double> out;
  for (const auto& b : c) {
    out.push_back(b.value);
    if (b.selector == Selector::RuleOfThumb && fallback) *fallback = true;
  }
  return out;
}

inline std::size_t lag_depth(const std::vector<std::size_t>& run, std::size_t t) {
  return run.empty() ? t : std::min(run[t], t);
}

// sum_k a_k u_{t-k} over the lags available at t; the intercept only when all
// p lags are present.
inline double ar_term(const ArFit& ar, const std::vector<double>& u, std::size_t t, std::size_t depth) {
  double s = depth >= ar.order ? ar.intercept : 0.0;
  const std::size_t p = std::min(ar.order, depth);
  for (std::size_t k = 1; k <= p; ++k) s += ar.coefficients[k - 1] * u[t - k];
  return s;
}

inline double clamp_sd(double variance, double floor) { return std::sqrt(std::max(variance, floor)); }

struct InitialOps {
  InitialFit fit;
  InSampleSmoother mean;
  InSampleSmoother variance;
};

inline InitialOps fit_initial_ops(const Window& w, const DearConfig& cfg) {
  cfg.validate();
  if (!w.x) throw Error(ErrorCode::InsufficientData, "window has no covariates");
  const std::size_t n = w.y.size();
  if (w.x->size() != n) throw Error(ErrorCode::LengthMismatch, "covariates and targets differ in length");
  if (w.kinds.size() != w.x->dim) throw Error(ErrorCode::LengthMismatch, "variable kinds do not match covariates");
  if (n < cfg.min_window) throw Error(ErrorCode::InsufficientData, "window shorter than the configured minimum");
  InitialOps ops;
  InitialFit& out = ops.fit;
  bool fallback = false;
  std::vector<double> hm;
  if (cfg.bandwidths) {
    hm = *cfg.bandwidths;
  } else {
    hm = bandwidth_values(select_regression_bandwidths(w.x->values, w.x->dim, w.y, w.kinds), &fallback);
  }
  ops.mean = InSampleSmoother(w.x, w.y, kernel_config_for(w.kinds, hm, cfg), cfg.mean_method, cfg.tau);
  out.fitted_mean = ops.mean.apply(w.y);
  std::vector<double> z(n);
  for (std::size_t t = 0; t < n; ++t) z[t] = (w.y[t] - out.fitted_mean[t]) * (w.y[t] - out.fitted_mean[t]);
  const auto hv = bandwidth_values(select_regression_bandwidths(w.x->values, w.x->dim, z, w.kinds), &fallback);
  ops.variance = InSampleSmoother(w.x, z, kernel_config_for(w.kinds, hv, cfg), cfg.variance_method, cfg.tau);
  out.variance.floor = variance_floor(w.y);
  const auto s2 = ops.variance.apply(z);
  out.fitted_sd.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.fitted_sd[t] = clamp_sd(s2[t], out.variance.floor);
  out.mean = ops.mean.fit();
  out.variance.fit = ops.variance.fit();
  out.fallback_rows = ops.mean.fallback_rows();
  out.bandwidths.per_variable_regression = hm;
  out.bandwidths.per_variable_variance = hv;
  out.bandwidths.selector_used = fallback ? Selector::RuleOfThumb : Selector::DPI;
  return ops;
}

}  // namespace detail

/// Initial local-linear mean and variance smoothers with plug-in bandwidths
/// (mean on Y, variance on the squared in-sample residuals).
inline InitialFit fit_initial(const Window& w, const DearConfig& cfg) {
  return detail::fit_initial_ops(w, cfg).fit;
}

/// Fitted model: smoothers on the calibrated window, AR coefficients, the
/// standardised-residual pool and its adaptive kernel density. Supports
/// one-step forecasts and streaming updates over a rolling window.
class DearModel {
 public:
  DearModel() = default;

  /// Full fit on a window: initial smoothers, AR order, then the calibration
  /// loop until the AR coefficients settle and the residual pool passes
  /// Ljung-Box at every lag 1..p, or max_iterations is reached.
  static DearModel fit(Window w, const DearConfig& cfg) {
    DearModel m;
    m.cfg_ = cfg;
    m.capacity_ = w.y.size();
    m.refit_every_ = cfg.refit_every > 0 ? cfg.refit_every : std::max<std::size_t>(1, w.y.size() / 10);
    m.fit_window(std::move(w), std::nullopt);
    return m;
  }

  [[nodiscard]] const DearConfig& config() const { return cfg_; }
  [[nodiscard]] const SmootherFit& mean_fit() const { return mean_; }
  [[nodiscard]] const VarianceFit& variance_fit() const { return var_; }
  [[nodiscard]] const ArFit& ar() const { return ar_; }
  [[nodiscard]] std::size_t order() const { return ar_.order; }
  [[nodiscard]] const std::vector<double>& targets() const { return y_; }
  [[nodiscard]] const std::vector<double>& calibrated_targets() const { return ycal_; }
  [[nodiscard]] const std::vector<double>& squared_residuals() const { return z_; }
  [[nodiscard]] const std::vector<double>& u_history() const { return u_; }
  /// Residual per window row; NaN where fewer than p lags are available.
  [[nodiscard]] const std::vector<double>& residual_rows() const { return r_; }
  [[nodiscard]] std::vector<double> standardized_innovations() const { return finite_only(r_); }
  [[nodiscard]] const std::vector<std::size_t>& runs() const { return run_; }
  [[nodiscard]] const BandwidthReport& bandwidths() const { return bw_; }
  [[nodiscard]] const KernelMixturePtr& residual_mixture() const { return mixture_; }
  [[nodiscard]] std::size_t iterations_run() const { return iterations_; }
  [[nodiscard]] bool converged() const { return converged_; }
  [[nodiscard]] bool ar_failed() const { return ar_failed_; }
  [[nodiscard]] const std::vector<double>& ljung_box_p_values() const { return lb_p_; }
  [[nodiscard]] std::size_t fallback_rows() const { return fallback_rows_; }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] std::size_t refit_every() const { return refit_every_; }
  [[nodiscard]] std::size_t refits() const { return refits_; }
  [[nodiscard]] std::size_t steps_since_refit() const { return steps_since_refit_; }
  [[nodiscard]] std::size_t size() const { return y_.size(); }
  [[nodiscard]] const std::vector<VariableKind>& kinds() const { return kinds_; }

  [[nodiscard]] double mean_at(std::span<const double> x) const { return mean_.predict(x); }
  [[nodiscard]] double sd_at(std::span<const double> x) const { return var_.sd(x); }

  /// m(x) + sigma(x) * sum_k a_k u_lags[k-1]; u_lags[0] is the most recent.
  /// NaN lags (across a time gap) contribute nothing.
  [[nodiscard]] double conditional_mean(std::span<const double> x, std::span<const double> u_lags) const {
    if (u_lags.size() < ar_.order) throw Error(ErrorCode::InsufficientHistory, "fewer lagged residuals than p");
    return mean_at(x) + sd_at(x) * lag_term(u_lags);
  }

  /// Lagged residuals for the next instant (most recent first), NaN where
  /// the lag lies across a gap or before the window.
  [[nodiscard]] std::vector<double> next_lags(bool contiguous = true) const {
    const std::size_t p = ar_.order;
    std::vector<double> lags(p, std::numeric_limits<double>::quiet_NaN());
    if (!contiguous || y_.empty()) return lags;
    const std::size_t T = y_.size();
    const std::size_t depth = detail::lag_depth(run_, T - 1) + 1;
    for (std::size_t k = 1; k <= std::min(p, depth); ++k) lags[k - 1] = u_[T - k];
    return lags;
  }

  /// One-step forecast at x_next: mean m + sigma * AR term, density the
  /// residual mixture shifted and scaled by (mean, sigma).
  [[nodiscard]] Forecast forecast(std::span<const double> x_next, bool contiguous = true) const {
    const auto p = point(x_next);
    const auto lags = next_lags(contiguous);
    const double mu = p.m + p.sd * lag_term(lags);
    Forecast f = make_forecast(mu, PredictiveDensity{mixture_, mu, p.sd}, cfg_.lower, cfg_.upper);
    f.sparse = p.kind != RowKind::LocalLinear && cfg_.mean_method == Method::LocalLinear;
    return f;
  }

  /// Appends the realised (x, y) to the window, dropping the oldest row at
  /// capacity. Every refit_every updates the model is refitted from the raw
  /// window; in between the smoothers keep their bandwidths and thresholds.
  void update(std::span<const double> x_new, double y_new, bool contiguous = true) {
    if (x_new.size() != kinds_.size()) throw Error(ErrorCode::LengthMismatch, "covariate vector has wrong length");
    const auto p = point(x_new);
    const auto lags = next_lags(contiguous);
    bool full = true;
    for (double v : lags) full = full && std::isfinite(v);
    const double term = lag_term(lags);
    const double u_new = (y_new - p.m) / p.sd;
    const double ycal = y_new - p.sd * term;
    const double r_new = full ? u_new - term : std::numeric_limits<double>::quiet_NaN();
    double h_new = std::numeric_limits<double>::quiet_NaN();
    if (full) {
      const double g = pilot_density(r_new, pool_, bw_.density_global);
      h_new = bw_.density_global * std::exp(-0.5 * (std::log(g) - log_s_));
    }
    const std::size_t run_new = contiguous && !run_.empty() ? run_.back() + 1 : 0;

    std::vector<double> xv = x_->values;
    xv.insert(xv.end(), x_new.begin(), x_new.end());
    y_.push_back(y_new);
    ycal_.push_back(ycal);
    z_.push_back((ycal - p.m) * (ycal - p.m));
    u_.push_back(u_new);
    r_.push_back(r_new);
    h_.push_back(h_new);
    run_.push_back(run_new);
    if (y_.size() > capacity_) {
      const std::size_t drop = y_.size() - capacity_;
      xv.erase(xv.begin(), xv.begin() + static_cast<std::ptrdiff_t>(drop * kinds_.size()));
      for (auto* v : {&y_, &ycal_, &z_, &u_, &r_, &h_}) v->erase(v->begin(), v->begin() + static_cast<std::ptrdiff_t>(drop));
      run_.erase(run_.begin(), run_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    x_ = std::make_shared<const Covariates>(kinds_.size(), std::move(xv));
    ++steps_since_refit_;
    if (steps_since_refit_ >= refit_every_) {
      Window w{x_, y_, kinds_, run_};
      fit_window(std::move(w), cfg_.refit_density_bandwidth ? std::nullopt : std::optional<double>(bw_.density_global));
      ++refits_;
      return;
    }
    mean_ = mean_.with_training(x_, ycal_);
    var_.fit = var_.fit.with_training(x_, z_);
    rebuild_mixture();
  }

  void write(std::ostream& os) const;
  static DearModel read(std::istream& is);

 private:
  struct Point {
    double m = 0.0;
    double sd = 1.0;
    RowKind kind = RowKind::LocalLinear;
  };

  [[nodiscard]] Point point(std::span<const double> x) const {
    if (x.size() != kinds_.size()) throw Error(ErrorCode::LengthMismatch, "covariate vector has wrong length");
    const auto row = mean_.row(x);
    return {mean_.dot(row.weights), var_.sd(x), row.kind};
  }

  [[nodiscard]] double lag_term(std::span<const double> lags) const {
    double s = 0.0;
    bool full = true;
    for (std::size_t k = 0; k < ar_.order; ++k) {
      if (std::isfinite(lags[k])) {
        s += ar_.coefficients[k] * lags[k];
      } else {
        full = false;
      }
    }
    return full ? s + ar_.intercept : s;
  }

  static std::vector<double> finite_only(const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) {
      if (std::isfinite(x)) out.push_back(x);
    }
    return out;
  }

  void rebuild_mixture() {
    pool_.clear();
    std::vector<double> hs;
    for (std::size_t t = 0; t < r_.size(); ++t) {
      if (std::isfinite(r_[t])) {
        pool_.push_back(r_[t]);
        hs.push_back(h_[t]);
      }
    }
    if (pool_.empty()) throw Error(ErrorCode::InsufficientData, "no rows with full AR lags in the window");
    const auto* hints = mixture_ ? &mixture_->level_quantiles() : nullptr;
    mixture_ = std::make_shared<const KernelMixture>(pool_, std::move(hs), std::vector<double>{}, 0.0, hints);
  }

  void fit_window(Window w, std::optional<double> fixed_h) {
    kinds_ = w.kinds;
    const std::size_t n = w.y.size();
    if (w.run.empty()) {
      w.run.resize(n);
      for (std::size_t t = 0; t < n; ++t) w.run[t] = t;
    }
    if (w.run.size() != n) throw Error(ErrorCode::LengthMismatch, "run lengths do not match the window");
    detail::InitialOps ops = detail::fit_initial_ops(w, cfg_);
    const InitialFit& init = ops.fit;
    const double floor = init.variance.floor;
    const detail::InSampleSmoother& mean_op = ops.mean;
    const detail::InSampleSmoother& var_op = ops.variance;
    std::vector<double> m = init.fitted_mean;
    std::vector<double> sd = init.fitted_sd;
    std::vector<double> u(n);
    for (std::size_t t = 0; t < n; ++t) u[t] = (w.y[t] - m[t]) / sd[t];

    auto usable_mask = [&](std::size_t p) {
      std::vector<bool> mask(n);
      for (std::size_t t = 0; t < n; ++t) mask[t] = detail::lag_depth(w.run, t) >= p;
      return mask;
    };

    ar_failed_ = false;
    std::size_t p = 0;
    if (cfg_.order) {
      p = *cfg_.order;
    } else if (cfg_.p_max > 0) {
      try {
        p = select_order_masked(u, cfg_.p_max, usable_mask(cfg_.p_max), cfg_.criterion, cfg_.ar_intercept);
      } catch (const Error&) {
        p = 0;
        ar_failed_ = true;
      }
    }
    std::vector<bool> mask = usable_mask(p);

    ArFit ar;
    std::vector<double> ycal = w.y;
    std::vector<double> z = init.variance.fit.responses();
    std::vector<double> r(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> prev;
    converged_ = false;
    iterations_ = 0;
    lb_p_.clear();
    for (std::size_t it = 1; it <= cfg_.max_iterations; ++it) {
      iterations_ = it;
      try {
        ar = fit_ar_masked(u, p, mask, cfg_.ar_intercept);
      } catch (const Error&) {
        ar_failed_ = true;
        p = 0;
        mask = usable_mask(0);
        ar = fit_ar_masked(u, 0, mask, false);
      }
      std::vector<double> term(n);
      for (std::size_t t = 0; t < n; ++t) {
        term[t] = detail::ar_term(ar, u, t, detail::lag_depth(w.run, t));
        ycal[t] = w.y[t] - sd[t] * term[t];
      }
      m = mean_op.apply(ycal);
      for (std::size_t t = 0; t < n; ++t) z[t] = (ycal[t] - m[t]) * (ycal[t] - m[t]);
      const auto s2 = var_op.apply(z);
      for (std::size_t t = 0; t < n; ++t) {
        sd[t] = detail::clamp_sd(s2[t], floor);
        u[t] = (w.y[t] - m[t]) / sd[t];
      }
      for (std::size_t t = 0; t < n; ++t) {
        r[t] = mask[t] ? u[t] - detail::ar_term(ar, u, t, detail::lag_depth(w.run, t))
                       : std::numeric_limits<double>::quiet_NaN();
      }
      double change = std::numeric_limits<double>::infinity();
      if (p == 0) {
        change = 0.0;
      } else if (prev.size() == p) {
        change = 0.0;
        for (std::size_t k = 0; k < p; ++k) change = std::max(change, std::abs(ar.coefficients[k] - prev[k]));
      }
      bool white = true;
      try {
        white = ljung_box_all_lags(finite_only(r), p, cfg_.alpha, &lb_p_);
      } catch (const Error&) {
        lb_p_.assign(p, 1.0);  // constant residual pool: nothing left to correlate
      }
      if (change < cfg_.coef_tol && white) {
        converged_ = true;
        break;
      }
      prev = ar.coefficients;
    }

    ar_ = ar;
    x_ = w.x;
    y_ = std::move(w.y);
    run_ = std::move(w.run);
    ycal_ = std::move(ycal);
    z_ = std::move(z);
    u_ = std::move(u);
    r_ = std::move(r);
    mean_ = mean_op.fit().with_responses(ycal_);
    var_.fit = var_op.fit().with_responses(z_);
    var_.floor = floor;
    fallback_rows_ = init.fallback_rows;
    bw_ = init.bandwidths;

    pool_ = finite_only(r_);
    if (pool_.size() < 2) throw Error(ErrorCode::InsufficientData, "residual pool too small for a density");
    if (fixed_h) {
      bw_.density_global = *fixed_h;
    } else {
      try {
        const auto c = dpi_density_bandwidth(pool_);
        bw_.density_global = c.value;
        if (c.selector == Selector::RuleOfThumb) bw_.selector_used = Selector::RuleOfThumb;
      } catch (const Error&) {
        bw_.density_global = 1.0;  // zero-spread pool
        bw_.selector_used = Selector::RuleOfThumb;
      }
    }
    const auto ad = adaptive_bandwidths_with_scale(pool_, bw_.density_global);
    log_s_ = ad.log_geometric_mean;
    bw_.density_adaptive = ad.values;
    h_.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0, i = 0; t < n; ++t) {
      if (std::isfinite(r_[t])) h_[t] = ad.values[i++];
    }
    mixture_.reset();
    rebuild_mixture();
    steps_since_refit_ = 0;
  }

  DearConfig cfg_;
  std::vector<VariableKind> kinds_;
  CovariatesPtr x_;
  std::vector<double> y_, ycal_, z_, u_, r_, h_;
  std::vector<std::size_t> run_;
  SmootherFit mean_;
  VarianceFit var_;
  ArFit ar_;
  BandwidthReport bw_;
  double log_s_ = 0.0;
  std::vector<double> pool_;
  KernelMixturePtr mixture_;
  std::size_t iterations_ = 0;
  bool converged_ = false;
  bool ar_failed_ = false;
  std::vector<double> lb_p_;
  std::size_t fallback_rows_ = 0;
  std::size_t capacity_ = 0;
  std::size_t refit_every_ = 1;
  std::size_t refits_ = 0;
  std::size_t steps_since_refit_ = 0;
};

/// Fits the model; same as DearModel::fit.
inline DearModel iterate(Window w, const DearConfig& cfg) { return DearModel::fit(std::move(w), cfg); }

inline double conditional_mean(const DearModel& model, std::span<const double> x, std::span<const double> u_lags) {
  return model.conditional_mean(x, u_lags);
}

inline Forecast forecast(const DearModel& model, std::span<const double> x_next, bool contiguous = true) {
  return model.forecast(x_next, contiguous);
}

inline DearModel update(DearModel model, std::span<const double> x_new, double y_new, bool contiguous = true) {
  model.update(x_new, y_new, contiguous);
  return model;
}

// ---------------------------------------------------------------------------
// Text serialisation. Doubles are written with 17 significant digits, so a
// model read back forecasts bit-identically.

namespace detail {

template <class T>
std::string join(const std::vector<T>& v, const char* sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    if constexpr (std::is_floating_point_v<T>) {
      s += g17(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw Error(ErrorCode::Io, "bad number in model file: " + s);
  return v;
}

inline std::vector<double> parse_doubles(std::istringstream& is) {
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(parse_double(tok));
  return out;
}

inline std::string encode_groups(const std::vector<std::vector<std::size_t>>& groups) {
  std::string s;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) s += ";";
    s += join(groups[g], ",");
  }
  return s.empty() ? "-" : s;
}

inline std::vector<std::vector<std::size_t>> decode_groups(const std::string& s) {
  std::vector<std::vector<std::size_t>> out;
  if (s == "-") return out;
  std::istringstream gs(s);
  std::string group;
  while (std::getline(gs, group, ';')) {
    std::vector<std::size_t> g;
    std::istringstream ms(group);
    std::string idx;
    while (std::getline(ms, idx, ',')) g.push_back(static_cast<std::size_t>(std::stoul(idx)));
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace detail

inline void DearModel::write(std::ostream& os) const {
  using detail::g17;
  using detail::join;
  const KernelConfig& mc = mean_.kernel_config();
  const KernelConfig& vc = var_.fit.kernel_config();
  std::vector<double> hm, hv;
  for (const auto& v : mc.variables) hm.push_back(v.bandwidth);
  for (const auto& v : vc.variables) hv.push_back(v.bandwidth);
  std::vector<int> kinds;
  for (auto k : kinds_) kinds.push_back(k == VariableKind::Circular ? 1 : 0);
  os << "dear-model 1\n";
  os << "p_max " << cfg_.p_max << "\n";
  os << "order " << (cfg_.order ? std::to_string(*cfg_.order) : std::string("-")) << "\n";
  os << "criterion " << (cfg_.criterion == OrderCriterion::AIC ? "aic" : "bic") << "\n";
  os << "ar_intercept " << (cfg_.ar_intercept ? 1 : 0) << "\n";
  os << "alpha " << g17(cfg_.alpha) << "\n";
  os << "coef_tol " << g17(cfg_.coef_tol) << "\n";
  os << "max_iterations " << cfg_.max_iterations << "\n";
  os << "min_window " << cfg_.min_window << "\n";
  os << "lower " << g17(cfg_.lower) << "\n";
  os << "upper " << g17(cfg_.upper) << "\n";
  os << "mean_method " << (cfg_.mean_method == Method::LocalLinear ? "ll" : "nw") << "\n";
  os << "variance_method " << (cfg_.variance_method == Method::LocalLinear ? "ll" : "nw") << "\n";
  os << "refit_density_bandwidth " << (cfg_.refit_density_bandwidth ? 1 : 0) << "\n";
  os << "kinds " << join(kinds) << "\n";
  os << "groups " << detail::encode_groups(mc.groups) << "\n";
  os << "anchors " << (mc.anchors.empty() ? std::string("-") : join(mc.anchors, ",")) << "\n";
  os << "bw_mean " << join(hm) << "\n";
  os << "bw_variance " << join(hv) << "\n";
  os << "tau_mean " << g17(mean_.tau()) << "\n";
  os << "tau_variance " << g17(var_.fit.tau()) << "\n";
  os << "variance_floor " << g17(var_.floor) << "\n";
  os << "ar_order " << ar_.order << "\n";
  os << "ar_coefficients " << join(ar_.coefficients) << "\n";
  os << "ar_intercept_value " << g17(ar_.intercept) << "\n";
  os << "ar_residual_variance " << g17(ar_.residual_variance) << "\n";
  os << "density_bandwidth " << g17(bw_.density_global) << "\n";
  os << "density_selector " << (bw_.selector_used == Selector::DPI ? "dpi" : "rot") << "\n";
  os << "log_geometric_mean " << g17(log_s_) << "\n";
  os << "iterations " << iterations_ << "\n";
  os << "converged " << (converged_ ? 1 : 0) << "\n";
  os << "ar_failed " << (ar_failed_ ? 1 : 0) << "\n";
  os << "ljung_box " << join(lb_p_) << "\n";
  os << "fallback_rows " << fallback_rows_ << "\n";
  os << "capacity " << capacity_ << "\n";
  os << "refit_every " << refit_every_ << "\n";
  os << "refits " << refits_ << "\n";
  os << "steps_since_refit " << steps_since_refit_ << "\n";
  os << "rows " << y_.size() << "\n";
  const std::size_t d = kinds_.size();
  for (std::size_t t = 0; t < y_.size(); ++t) {
    for (std::size_t j = 0; j < d; ++j) os << g17(x_->values[t * d + j]) << ' ';
    os << g17(y_[t]) << ' ' << g17(ycal_[t]) << ' ' << g17(z_[t]) << ' ' << g17(u_[t]) << ' ' << g17(r_[t]) << ' '
       << g17(h_[t]) << ' ' << run_[t] << "\n";
  }
}

inline DearModel DearModel::read(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "dear-model 1") throw Error(ErrorCode::Io, "not a model file (bad header)");
  DearModel m;
  std::vector<double> hm, hv;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> anchors;
  double tau_m = 0.0, tau_v = 0.0;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "rows") {
      ls >> rows;
      break;
    }
    std::string rest;
    std::getline(ls >> std::ws, rest);
    std::istringstream vs(rest);
    auto num = [&]() { return detail::parse_double(rest); };
    auto count = [&]() { return static_cast<std::size_t>(std::stoull(rest)); };
    if (key == "p_max") m.cfg_.p_max = count();
    else if (key == "order") m.cfg_.order = rest == "-" ? std::nullopt : std::optional<std::size_t>(count());
    else if (key == "criterion") m.cfg_.criterion = rest == "aic" ? OrderCriterion::AIC : OrderCriterion::BIC;
    else if (key == "ar_intercept") m.cfg_.ar_intercept = rest == "1";
    else if (key == "alpha") m.cfg_.alpha = num();
    else if (key == "coef_tol") m.cfg_.coef_tol = num();
    else if (key == "max_iterations") m.cfg_.max_iterations = count();
    else if (key == "min_window") m.cfg_.min_window = count();
    else if (key == "lower") m.cfg_.lower = num();
    else if (key == "upper") m.cfg_.upper = num();
    else if (key == "mean_method") m.cfg_.mean_method = rest == "nw" ? Method::NadarayaWatson : Method::LocalLinear;
    else if (key == "variance_method") m.cfg_.variance_method = rest == "nw" ? Method::NadarayaWatson : Method::LocalLinear;
    else if (key == "refit_density_bandwidth") m.cfg_.refit_density_bandwidth = rest == "1";
    else if (key == "kinds") {
      for (double k : detail::parse_doubles(vs)) m.kinds_.push_back(k != 0.0 ? VariableKind::Circular : VariableKind::Linear);
    } else if (key == "groups") groups = detail::decode_groups(rest);
    else if (key == "anchors") {
      if (rest != "-") {
        for (const auto& g : detail::decode_groups(rest)) anchors = g;
      }
    } else if (key == "bw_mean") hm = detail::parse_doubles(vs);
    else if (key == "bw_variance") hv = detail::parse_doubles(vs);
    else if (key == "tau_mean") tau_m = num();
    else if (key == "tau_variance") tau_v = num();
    else if (key == "variance_floor") m.var_.floor = num();
    else if (key == "ar_order") m.ar_.order = count();
    else if (key == "ar_coefficients") m.ar_.coefficients = detail::parse_doubles(vs);
    else if (key == "ar_intercept_value") m.ar_.intercept = num();
    else if (key == "ar_residual_variance") m.ar_.residual_variance = num();
    else if (key == "density_bandwidth") m.bw_.density_global = num();
    else if (key == "density_selector") m.bw_.selector_used = rest == "dpi" ? Selector::DPI : Selector::RuleOfThumb;
    else if (key == "log_geometric_mean") m.log_s_ = num();
    else if (key == "iterations") m.iterations_ = count();
    else if (key == "converged") m.converged_ = rest == "1";
    else if (key == "ar_failed") m.ar_failed_ = rest == "1";
    else if (key == "ljung_box") m.lb_p_ = detail::parse_doubles(vs);
    else if (key == "fallback_rows") m.fallback_rows_ = count();
    else if (key == "capacity") m.capacity_ = count();
    else if (key == "refit_every") m.refit_every_ = count();
    else if (key == "refits") m.refits_ = count();
    else if (key == "steps_since_refit") m.steps_since_refit_ = count();
    else throw Error(ErrorCode::Io, "unknown model field: " + key);
  }
  const std::size_t d = m.kinds_.size();
  if (d == 0 || rows == 0) throw Error(ErrorCode::Io, "model file has no covariates or rows");
  if (m.ar_.coefficients.size() != m.ar_.order) throw Error(ErrorCode::Io, "AR coefficient count differs from order");
  m.cfg_.groups = groups;
  m.cfg_.anchors = anchors;
  std::vector<double> xv;
  xv.reserve(rows * d);
  for (std::size_t t = 0; t < rows; ++t) {
    if (!std::getline(is, line)) throw Error(ErrorCode::Io, "model file truncated");
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string s;
    while (ls >> s) tok.push_back(s);
    if (tok.size() != d + 7) throw Error(ErrorCode::Io, "bad model row");
    for (std::size_t j = 0; j < d; ++j) xv.push_back(detail::parse_double(tok[j]));
    m.y_.push_back(detail::parse_double(tok[d]));
    m.ycal_.push_back(detail::parse_double(tok[d + 1]));
    m.z_.push_back(detail::parse_double(tok[d + 2]));
    m.u_.push_back(detail::parse_double(tok[d + 3]));
    m.r_.push_back(detail::parse_double(tok[d + 4]));
    m.h_.push_back(detail::parse_double(tok[d + 5]));
    m.run_.push_back(static_cast<std::size_t>(std::stoull(tok[d + 6])));
  }
  m.x_ = std::make_shared<const Covariates>(d, std::move(xv));
  m.mean_ = SmootherFit(m.x_, m.ycal_, make_kernel_config(m.kinds_, hm, groups, anchors), m.cfg_.mean_method, tau_m);
  m.var_.fit = SmootherFit(m.x_, m.z_, make_kernel_config(m.kinds_, hv, groups, anchors), m.cfg_.variance_method, tau_v);
  m.bw_.per_variable_regression = hm;
  m.bw_.per_variable_variance = hv;
  m.rebuild_mixture();
  m.bw_.density_adaptive = finite_only(m.h_);
  return m;
}

}  // namespace dear
