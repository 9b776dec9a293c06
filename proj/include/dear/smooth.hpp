#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dear/bandwidth.hpp"
#include "dear/error.hpp"
#include "dear/kernels.hpp"

namespace dear {

enum class Method { NadarayaWatson, LocalLinear };

/// Row-major T x d covariate matrix shared between smoothers.
struct Covariates {
  std::size_t dim = 0;
  std::vector<double> values;

  Covariates() = default;
  Covariates(std::size_t d, std::vector<double> v) : dim(d), values(std::move(v)) {
    if (dim == 0 || values.size() % dim != 0) {
      throw Error(ErrorCode::LengthMismatch, "covariate storage is not a multiple of the dimension");
    }
  }

  [[nodiscard]] std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  [[nodiscard]] std::span<const double> row(std::size_t t) const { return {values.data() + t * dim, dim}; }
};

using CovariatesPtr = std::shared_ptr<const Covariates>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// How a smoother row was actually formed after sparsity checks.
enum class RowKind { LocalLinear, NadarayaWatson, Uniform };

/// Linear-smoother weights at one query: prediction = weights . responses.
struct SmootherRow {
  std::vector<double> weights;
  RowKind kind = RowKind::LocalLinear;
  double input_density = 0.0;
};

inline constexpr double kDefaultTauFactor = 1e-4;
inline constexpr double kEffectiveWeight = 1e-12;
inline constexpr double kRidgeFactor = 1e-8;

namespace detail {

// Fills k with raw kernel weights of query x against every training row;
// returns their sum.
inline double kernel_weights(const AmkKernel& kernel, const Covariates& X, const double* x, std::vector<double>& k) {
  const std::size_t n = X.size();
  k.resize(n);
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    k[t] = kernel(x, X.values.data() + t * X.dim);
    sum += k[t];
  }
  return sum;
}

inline double signed_difference(VariableKind kind, double a, double b) {
  return kind == VariableKind::Circular ? wrap_angle(a - b) : a - b;
}

// Converts raw kernel weights into local-linear equivalent-kernel weights in
// place. Returns false when the weighted design is too thin or singular.
inline bool local_linear_in_place(const AmkKernel& kernel, const Covariates& X, const double* x, std::vector<double>& k,
                                  double sum) {
  const std::size_t n = X.size();
  const std::size_t d = X.dim;
  const auto p = static_cast<Eigen::Index>(d + 1);
  if (!(sum > 0.0)) return false;
  std::size_t effective = 0;
  const double thresh = kEffectiveWeight * sum;
  for (double v : k) effective += v > thresh ? 1 : 0;
  if (effective < d + 2) return false;

  const auto& vars = kernel.config().variables;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  std::array<double, kMaxDim + 1> z{};
  z[0] = 1.0;
  const double inv_sum = 1.0 / sum;
  for (std::size_t t = 0; t < n; ++t) {
    const double w = k[t] * inv_sum;
    if (w == 0.0) continue;
    const double* xt = X.values.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) z[j + 1] = signed_difference(vars[j].kind, xt[j], x[j]);
    for (Eigen::Index a = 0; a < p; ++a) {
      const double wa = w * z[static_cast<std::size_t>(a)];
      for (Eigen::Index b = a; b < p; ++b) A(a, b) += wa * z[static_cast<std::size_t>(b)];
    }
  }
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < a; ++b) A(a, b) = A(b, a);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || !std::isfinite(lmax)) return false;
  if (lmin < 1e-12 * lmax) {
    A.diagonal().array() += kRidgeFactor * A.trace() / static_cast<double>(p);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(p);
  e1(0) = 1.0;
  const Eigen::VectorXd c = ldlt.solve(e1);
  if (!c.allFinite()) return false;

  for (std::size_t t = 0; t < n; ++t) {
    if (k[t] == 0.0) continue;
    const double* xt = X.values.data() + t * d;
    double dot = c(0);
    for (std::size_t j = 0; j < d; ++j) dot += c(static_cast<Eigen::Index>(j + 1)) * signed_difference(vars[j].kind, xt[j], x[j]);
    k[t] = k[t] * inv_sum * dot;
  }
  return true;
}

inline void normalize_in_place(std::vector<double>& k, double sum) {
  const double inv = 1.0 / sum;
  for (double& v : k) v *= inv;
  // renormalise after the division so the weights sum to one to rounding
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
}

}  // namespace detail

/// A kernel smoother over fixed training covariates: responses, kernel
/// configuration, estimator type and sparsity threshold tau. Immutable.
class SmootherFit {
 public:
  SmootherFit() = default;

  /// When `tau` is empty it defaults to 1e-4 times the largest input density
  /// over the training points (an O(T^2) pass).
  SmootherFit(CovariatesPtr x, std::vector<double> y, KernelConfig cfg, Method method,
              std::optional<double> tau = std::nullopt)
      : x_(std::move(x)), y_(std::move(y)), kernel_(std::move(cfg)), method_(method) {
    if (!x_ || x_->size() == 0) throw Error(ErrorCode::InsufficientData, "smoother needs at least one training point");
    if (x_->size() != y_.size()) throw Error(ErrorCode::LengthMismatch, "covariates and responses differ in length");
    if (x_->dim != kernel_.dim()) throw Error(ErrorCode::LengthMismatch, "kernel config does not match covariates");
    if (tau) {
      if (!(*tau >= 0.0)) throw Error(ErrorCode::InvalidConfig, "sparsity threshold must be >= 0");
      tau_ = *tau;
    } else {
      tau_ = kDefaultTauFactor * max_training_density();
    }
  }

  [[nodiscard]] const Covariates& covariates() const { return *x_; }
  [[nodiscard]] const CovariatesPtr& covariates_ptr() const { return x_; }
  [[nodiscard]] const std::vector<double>& responses() const { return y_; }
  [[nodiscard]] const KernelConfig& kernel_config() const { return kernel_.config(); }
  [[nodiscard]] const AmkKernel& kernel() const { return kernel_; }
  [[nodiscard]] Method method() const { return method_; }
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] std::size_t size() const { return y_.size(); }

  /// Same covariates, kernel and threshold; new responses.
  [[nodiscard]] SmootherFit with_responses(std::vector<double> y) const {
    return with_training(x_, std::move(y));
  }

  /// New training set with the kernel and threshold kept (rolling updates).
  [[nodiscard]] SmootherFit with_training(CovariatesPtr x, std::vector<double> y) const {
    SmootherFit out = *this;
    out.x_ = std::move(x);
    out.y_ = std::move(y);
    if (out.x_->size() != out.y_.size()) throw Error(ErrorCode::LengthMismatch, "covariates and responses differ");
    return out;
  }

  [[nodiscard]] double input_density(std::span<const double> x) const {
    std::vector<double> k;
    return detail::kernel_weights(kernel_, *x_, x.data(), k) / static_cast<double>(x_->size());
  }

  /// Smoother weights at x with the fallback chain: local linear, then
  /// Nadaraya-Watson when the input density is below tau or the local design
  /// is singular, then uniform weights when every kernel weight underflows.
  [[nodiscard]] SmootherRow row(std::span<const double> x) const {
    SmootherRow out;
    const double sum = detail::kernel_weights(kernel_, *x_, x.data(), out.weights);
    out.input_density = sum / static_cast<double>(x_->size());
    finish_row(x.data(), sum, out);
    return out;
  }

  [[nodiscard]] double predict(std::span<const double> x) const { return dot(row(x).weights); }

  [[nodiscard]] double dot(const std::vector<double>& w) const {
    double s = 0.0;
    for (std::size_t t = 0; t < w.size(); ++t) s += w[t] * y_[t];
    return s;
  }

  /// In-sample smoother matrix: row t holds the weights at X_t. Kernel values
  /// are computed once using symmetry. Optionally reports how many rows fell
  /// back from local linear.
  [[nodiscard]] RowMatrix hat_matrix(std::size_t* fallback_rows = nullptr) const {
    RowMatrix H;
    fill_kernel_matrix(H);
    kernel_to_hat(H, fallback_rows);
    return H;
  }

  /// Turns the raw kernel matrix of the training points into the in-sample
  /// smoother matrix, row by row and in place.
  void kernel_to_hat(RowMatrix& H, std::size_t* fallback_rows = nullptr) const {
    const Covariates& X = *x_;
    const std::size_t n = X.size();
    if (static_cast<std::size_t>(H.rows()) != n || static_cast<std::size_t>(H.cols()) != n) {
      throw Error(ErrorCode::LengthMismatch, "kernel matrix does not match the training set");
    }
    SmootherRow r;
    r.weights.resize(n);
    std::size_t fallbacks = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto rowi = H.row(static_cast<Eigen::Index>(i));
      double sum = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        r.weights[t] = rowi(static_cast<Eigen::Index>(t));
        sum += r.weights[t];
      }
      r.input_density = sum / static_cast<double>(n);
      finish_row(X.values.data() + i * X.dim, sum, r);
      if (method_ == Method::LocalLinear && r.kind != RowKind::LocalLinear) ++fallbacks;
      for (std::size_t t = 0; t < n; ++t) rowi(static_cast<Eigen::Index>(t)) = r.weights[t];
    }
    if (fallback_rows) *fallback_rows = fallbacks;
  }

  /// Raw symmetric kernel matrix K(X_i, X_j).
  void fill_kernel_matrix(RowMatrix& K) const {
    const Covariates& X = *x_;
    const std::size_t n = X.size();
    K.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = X.values.data() + i * X.dim;
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = kernel_(xi, xi);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = kernel_(xi, X.values.data() + j * X.dim);
        K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
    }
  }

  [[nodiscard]] double max_training_density() const {
    const Covariates& X = *x_;
    const std::size_t n = X.size();
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = X.values.data() + i * X.dim;
      sums[i] += kernel_(xi, xi);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = kernel_(xi, X.values.data() + j * X.dim);
        sums[i] += v;
        sums[j] += v;
      }
    }
    return *std::max_element(sums.begin(), sums.end()) / static_cast<double>(n);
  }

 private:
  void finish_row(const double* x, double sum, SmootherRow& r) const {
    if (!(sum > 0.0)) {
      std::fill(r.weights.begin(), r.weights.end(), 1.0 / static_cast<double>(r.weights.size()));
      r.kind = RowKind::Uniform;
      return;
    }
    if (method_ == Method::LocalLinear && r.input_density >= tau_) {
      // local_linear_in_place leaves the weights untouched when it fails
      if (detail::local_linear_in_place(kernel_, *x_, x, r.weights, sum)) {
        r.kind = RowKind::LocalLinear;
        return;
      }
    }
    detail::normalize_in_place(r.weights, sum);
    r.kind = RowKind::NadarayaWatson;
  }

  CovariatesPtr x_;
  std::vector<double> y_;
  AmkKernel kernel_;
  Method method_ = Method::LocalLinear;
  double tau_ = 0.0;
};

/// Normalised Nadaraya-Watson weights K(x, X_i) / sum_j K(x, X_j).
inline std::vector<double> nw_weights(std::span<const double> x, const SmootherFit& fit) {
  std::vector<double> k;
  const double sum = detail::kernel_weights(fit.kernel(), fit.covariates(), x.data(), k);
  if (!(sum > 0.0)) throw Error(ErrorCode::Sparsity, "all kernel weights underflow at the query point");
  detail::normalize_in_place(k, sum);
  return k;
}

inline double nw_mean(std::span<const double> x, const SmootherFit& fit) { return fit.dot(nw_weights(x, fit)); }

/// e1' (X'WX)^-1 X'W Y with rows (1, X_t - x). Throws a sparsity error when
/// fewer than d+2 weights are effective or the ridge-regularised normal
/// matrix is still singular; callers fall back to nw_mean.
inline double local_linear_mean(std::span<const double> x, const SmootherFit& fit) {
  std::vector<double> k;
  const double sum = detail::kernel_weights(fit.kernel(), fit.covariates(), x.data(), k);
  if (!detail::local_linear_in_place(fit.kernel(), fit.covariates(), x.data(), k, sum)) {
    throw Error(ErrorCode::Sparsity, "local linear design is degenerate at the query point");
  }
  return fit.dot(k);
}

/// (1/T) sum_t amk_weight(x, X_t); compared against tau only.
inline double input_density(std::span<const double> x, const SmootherFit& fit) { return fit.input_density(x); }

/// Conditional variance smoother: a smoother over (X_t, Z_t) whose
/// predictions are floored at sigma^2_min.
struct VarianceFit {
  SmootherFit fit;
  double floor = 0.0;

  [[nodiscard]] double variance(std::span<const double> x) const { return std::max(fit.predict(x), floor); }
  [[nodiscard]] double sd(std::span<const double> x) const { return std::sqrt(variance(x)); }
};

inline constexpr double kVarianceFloorFactor = 1e-8;

inline double variance_floor(std::span<const double> y) {
  if (y.size() < 2) return kVarianceFloorFactor;
  const double sd = detail::sample_sd(y);
  const double v = kVarianceFloorFactor * sd * sd;
  return v > 0.0 ? v : 1e-24;  // constant response
}

/// Builds the variance smoother from in-sample squared residuals
/// Z_t = (Y_t - m(X_t))^2. Bandwidths default to the plug-in selector on Z.
inline VarianceFit variance_smoother(const SmootherFit& fit_mean, std::span<const double> fitted,
                                     std::optional<std::vector<double>> bandwidths = std::nullopt,
                                     std::optional<double> tau = std::nullopt) {
  const auto& y = fit_mean.responses();
  if (fitted.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "fitted values do not match responses");
  std::vector<double> z(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) z[t] = (y[t] - fitted[t]) * (y[t] - fitted[t]);
  KernelConfig cfg = fit_mean.kernel_config();
  if (bandwidths) {
    if (bandwidths->size() != cfg.dim()) throw Error(ErrorCode::LengthMismatch, "bandwidth count mismatch");
    for (std::size_t j = 0; j < cfg.dim(); ++j) cfg.variables[j].bandwidth = (*bandwidths)[j];
  } else {
    std::vector<VariableKind> kinds;
    for (const auto& v : cfg.variables) kinds.push_back(v.kind);
    const auto sel = select_regression_bandwidths(fit_mean.covariates().values, cfg.dim(), z, kinds);
    for (std::size_t j = 0; j < cfg.dim(); ++j) cfg.variables[j].bandwidth = sel[j].value;
  }
  VarianceFit out;
  out.floor = variance_floor(y);
  out.fit = SmootherFit(fit_mean.covariates_ptr(), std::move(z), std::move(cfg), fit_mean.method(), tau);
  return out;
}

/// Convenience overload computing the in-sample fitted values itself.
inline VarianceFit variance_smoother(const SmootherFit& fit_mean,
                                     std::optional<std::vector<double>> bandwidths = std::nullopt) {
  const Covariates& X = fit_mean.covariates();
  std::vector<double> fitted(X.size());
  for (std::size_t t = 0; t < X.size(); ++t) fitted[t] = fit_mean.predict(X.row(t));
  return variance_smoother(fit_mean, fitted, std::move(bandwidths));
}

}  // namespace dear
