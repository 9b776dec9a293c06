#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dear/error.hpp"

namespace dear {

/// AR(p) fit u_t = sum_k a_k u_{t-k} (+ c) + e_t.
struct ArFit {
  std::size_t order = 0;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double residual_variance = 0.0;
  double rss = 0.0;
  std::size_t n_used = 0;
  bool stationary = true;
};

struct LjungBoxResult {
  double statistic = 0.0;
  std::size_t lags = 0;
  double p_value = 1.0;
  bool rejected = false;
};

enum class OrderCriterion { BIC, AIC };

namespace detail {

// Regularised lower incomplete gamma P(a, x) by its power series (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularised upper incomplete gamma Q(a, x) by Lentz's continued fraction (x >= a + 1).
inline double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double spectral_radius(const std::vector<double>& a) {
  const auto p = static_cast<Eigen::Index>(a.size());
  if (p == 0) return 0.0;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) C(0, j) = a[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) C(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Regularised lower incomplete gamma function P(a, x).
inline double regularized_gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_continued_fraction(a, x);
}

/// Regularised upper incomplete gamma function Q(a, x) = 1 - P(a, x), computed
/// directly in the tail to avoid cancellation.
inline double regularized_gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_continued_fraction(a, x);
}

inline double chisq_cdf(double x, std::size_t df) {
  if (df == 0) throw Error(ErrorCode::InvalidConfig, "chi-square needs df >= 1");
  return regularized_gamma_p(0.5 * static_cast<double>(df), 0.5 * x);
}

inline double chisq_survival(double x, std::size_t df) {
  if (df == 0) throw Error(ErrorCode::InvalidConfig, "chi-square needs df >= 1");
  return regularized_gamma_q(0.5 * static_cast<double>(df), 0.5 * x);
}

/// Sample ACF at lags 0..max_lag (denominator n, overall mean).
inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n <= max_lag) throw Error(ErrorCode::InsufficientData, "series shorter than max_lag + 1");
  const double m = detail::mean_of(series);
  double c0 = 0.0;
  for (double v : series) c0 += (v - m) * (v - m);
  if (!(c0 > 0.0)) throw Error(ErrorCode::InvalidSample, "zero-variance series");
  std::vector<double> out(max_lag + 1);
  out[0] = 1.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = k; t < n; ++t) ck += (series[t] - m) * (series[t - k] - m);
    out[k] = ck / c0;
  }
  return out;
}

/// Q = n (n + 2) sum_k rho_k^2 / (n - k) for rho = acf values at lags 1..p.
inline double ljung_box_statistic(std::span<const double> rho, std::size_t n) {
  double q = 0.0;
  for (std::size_t k = 1; k <= rho.size(); ++k) {
    q += rho[k - 1] * rho[k - 1] / static_cast<double>(n - k);
  }
  const double nd = static_cast<double>(n);
  return nd * (nd + 2.0) * q;
}

inline LjungBoxResult ljung_box(std::span<const double> series, std::size_t lags, double alpha = 0.05) {
  if (lags == 0) return {0.0, 0, 1.0, false};
  if (series.size() <= lags) throw Error(ErrorCode::InsufficientData, "series too short for Ljung-Box lags");
  const auto rho = acf(series, lags);
  LjungBoxResult out;
  out.lags = lags;
  out.statistic = ljung_box_statistic(std::span<const double>(rho).subspan(1), series.size());
  out.p_value = chisq_survival(out.statistic, lags);
  out.rejected = out.p_value < alpha;
  return out;
}

/// Ljung-Box at every lag 1..p; true when none rejects.
inline bool ljung_box_all_lags(std::span<const double> series, std::size_t p, double alpha,
                               std::vector<double>* p_values = nullptr) {
  if (p_values) p_values->clear();
  if (p == 0) return true;
  const auto rho = acf(series, p);
  bool ok = true;
  for (std::size_t k = 1; k <= p; ++k) {
    const double q = ljung_box_statistic(std::span<const double>(rho).subspan(1, k), series.size());
    const double pv = chisq_survival(q, k);
    if (p_values) p_values->push_back(pv);
    if (pv < alpha) ok = false;
  }
  return ok;
}

/// Least-squares AR fit using only rows t where `usable[t]` holds (all p lags
/// present). An empty mask means every t >= p is usable.
inline ArFit fit_ar_masked(std::span<const double> u, std::size_t p, const std::vector<bool>& usable,
                           bool intercept = false) {
  const std::size_t n = u.size();
  std::vector<std::size_t> rows;
  for (std::size_t t = p; t < n; ++t) {
    if (usable.empty() || usable[t]) rows.push_back(t);
  }
  ArFit fit;
  fit.order = p;
  fit.n_used = rows.size();
  const std::size_t k = p + (intercept ? 1 : 0);
  if (rows.size() < k + 2 || rows.empty()) {
    throw Error(ErrorCode::InsufficientData, "AR fit needs at least p + 2 usable rows");
  }
  if (k == 0) {
    double rss = 0.0;
    for (std::size_t t : rows) rss += u[t] * u[t];
    fit.rss = rss;
    fit.residual_variance = rss / static_cast<double>(rows.size());
    return fit;
  }
  const auto kk = static_cast<Eigen::Index>(k);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(kk, kk);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(kk);
  Eigen::VectorXd z(kk);
  for (std::size_t t : rows) {
    for (std::size_t j = 0; j < p; ++j) z(static_cast<Eigen::Index>(j)) = u[t - j - 1];
    if (intercept) z(kk - 1) = 1.0;
    A.selfadjointView<Eigen::Lower>().rankUpdate(z);
    b += z * u[t];
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  Eigen::VectorXd beta;
  bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
  if (ok) {
    const auto d = ldlt.vectorD();
    ok = d.minCoeff() > 1e-12 * d.maxCoeff();
  }
  if (ok) {
    beta = ldlt.solve(b);
  } else {
    Eigen::MatrixXd R = A;
    R.diagonal().array() += 1e-8 * A.trace() / static_cast<double>(k);
    Eigen::LDLT<Eigen::MatrixXd> ridge(R);
    if (ridge.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "AR normal equations singular");
    beta = ridge.solve(b);
  }
  if (!beta.allFinite()) throw Error(ErrorCode::Numerical, "AR coefficients not finite");
  fit.coefficients.assign(beta.data(), beta.data() + p);
  if (intercept) fit.intercept = beta(kk - 1);
  double rss = 0.0;
  for (std::size_t t : rows) {
    double e = u[t] - fit.intercept;
    for (std::size_t j = 0; j < p; ++j) e -= fit.coefficients[j] * u[t - j - 1];
    rss += e * e;
  }
  fit.rss = rss;
  fit.residual_variance = rss / static_cast<double>(rows.size());
  fit.stationary = detail::spectral_radius(fit.coefficients) < 1.0;
  return fit;
}

/// Ordinary least squares of u_t on (u_{t-1}, ..., u_{t-p}), no intercept by default.
inline ArFit fit_ar_ls(std::span<const double> u, std::size_t p, bool intercept = false) {
  if (u.size() < 2 * p + 2) throw Error(ErrorCode::InsufficientData, "series too short for AR order");
  return fit_ar_masked(u, p, {}, intercept);
}

/// Smallest order in 0..p_max minimising the information criterion
/// n log(RSS/n) + penalty * p, every order fitted on the same rows t >= p_max.
inline std::size_t select_order_masked(std::span<const double> u, std::size_t p_max, const std::vector<bool>& usable,
                                       OrderCriterion criterion = OrderCriterion::BIC, bool intercept = false) {
  std::vector<bool> common(u.size(), false);
  for (std::size_t t = p_max; t < u.size(); ++t) common[t] = usable.empty() || usable[t];
  std::size_t best = 0;
  double best_ic = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p <= p_max; ++p) {
    const ArFit fit = fit_ar_masked(u, p, common, intercept);
    const double n = static_cast<double>(fit.n_used);
    const double penalty = criterion == OrderCriterion::AIC ? 2.0 : std::log(n);
    const double ic = n * std::log(std::max(fit.rss, std::numeric_limits<double>::min()) / n) +
                      penalty * static_cast<double>(p);
    if (p == 0 || ic < best_ic - 1e-12 * std::abs(best_ic)) {
      best_ic = ic;
      best = p;
    }
  }
  return best;
}

inline std::size_t select_order(std::span<const double> u, std::size_t p_max,
                                OrderCriterion criterion = OrderCriterion::BIC) {
  if (u.size() < 10 * p_max) throw Error(ErrorCode::InsufficientData, "series shorter than 10 * p_max");
  return select_order_masked(u, p_max, {}, criterion);
}

}  // namespace dear
