#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "dear/bandwidth.hpp"
#include "dear/smooth.hpp"
#include "oracles.hpp"

using namespace dear;

namespace {

SmootherFit make_fit(std::vector<double> x, std::size_t d, std::vector<double> y, std::vector<double> h,
                     Method method = Method::LocalLinear, std::optional<double> tau = 0.0,
                     std::vector<VariableKind> kinds = {}) {
  if (kinds.empty()) kinds.assign(d, VariableKind::Linear);
  auto X = std::make_shared<const Covariates>(d, std::move(x));
  return SmootherFit(X, std::move(y), make_kernel_config(kinds, h), method, tau);
}

std::vector<double> grid(double a, double b, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

}  // namespace

TEST(NwWeights, Examples) {
  const auto one = make_fit({0.3}, 1, {5.0}, {1.0});
  EXPECT_EQ(nw_weights(std::vector<double>{2.0}, one), std::vector<double>{1.0});
  EXPECT_EQ(nw_mean(std::vector<double>{2.0}, one), 5.0);

  const auto two = make_fit({-1.0, 1.0}, 1, {0.0, 10.0}, {0.7});
  const auto w = nw_weights(std::vector<double>{0.0}, two);
  EXPECT_NEAR(w[0], 0.5, 1e-15);
  EXPECT_NEAR(w[1], 0.5, 1e-15);
  EXPECT_NEAR(nw_mean(std::vector<double>{0.0}, two), 5.0, 1e-13);

  std::vector<double> k{0.4, 0.4, 0.2};
  detail::normalize_in_place(k, 1.0);
  EXPECT_NEAR(k[0], 0.4, 1e-16);
  EXPECT_NEAR(k[2], 0.2, 1e-16);
}

TEST(NwWeights, ConstantResponses) {
  const auto fit = make_fit(grid(0.0, 1.0, 30), 1, std::vector<double>(30, 3.25), {0.1}, Method::NadarayaWatson);
  for (double q : {-0.5, 0.1, 0.77, 1.4}) EXPECT_NEAR(nw_mean(std::vector<double>{q}, fit), 3.25, 1e-13);
}

TEST(NwWeights, UnderflowIsSparsity) {
  const auto fit = make_fit({0.0, 1.0}, 1, {1.0, 2.0}, {0.01});
  try {
    (void)nw_weights(std::vector<double>{50.0}, fit);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Sparsity);
  }
}

TEST(LocalLinear, ReproducesLines) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(60), y(60);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = 2.0 * x[i] + 1.0;
  }
  const auto fit = make_fit(x, 1, y, {0.15});
  for (double q : {0.0, 0.25, 0.5, 0.93, 1.2}) {
    EXPECT_NEAR(local_linear_mean(std::vector<double>{q}, fit), 2.0 * q + 1.0, 1e-10);
  }
  const auto flat = make_fit(x, 1, std::vector<double>(60, -4.0), {0.15});
  EXPECT_NEAR(local_linear_mean(std::vector<double>{0.4}, flat), -4.0, 1e-12);
}

TEST(LocalLinear, MatchesWeightedLeastSquaresOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t n = 80, d = 2;
  std::vector<double> x(n * d), y(n);
  for (auto& v : x) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(3.0 * x[2 * i]) + x[2 * i + 1] * x[2 * i + 1];
  const auto fit = make_fit(x, d, y, {0.3, 0.5});
  const auto cfg = fit.kernel_config();
  for (int q = 0; q < 20; ++q) {
    const std::vector<double> x0{u(rng), u(rng)};
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = amk_weight(x0, std::span<const double>(x).subspan(i * d, d), cfg);
    EXPECT_NEAR(local_linear_mean(x0, fit), oracle::local_linear(x, d, y, w, x0), 1e-10);
  }
}

TEST(LocalLinear, LessBoundaryBiasThanNw) {
  const auto x = grid(0.0, std::numbers::pi, 200);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::sin(x[i]);
  const auto fit = make_fit(x, 1, y, {0.3});
  // At the symmetric centre of an even grid the slope term vanishes and both
  // estimators agree; near the edge local linear removes the design bias.
  const std::vector<double> mid{std::numbers::pi / 2.0};
  EXPECT_NEAR(local_linear_mean(mid, fit), nw_mean(mid, fit), 1e-12);
  for (double q : {0.1, 0.2, 3.0}) {
    const std::vector<double> at{q};
    EXPECT_LT(std::abs(local_linear_mean(at, fit) - std::sin(q)), std::abs(nw_mean(at, fit) - std::sin(q))) << q;
  }
}

TEST(LocalLinear, CircularCovariateUsesWrappedDifferences) {
  // y linear in the wrapped angle, sampled on both sides of 0 = 2 pi.
  std::vector<double> x, y;
  for (double a = -0.6; a <= 0.6001; a += 0.05) {
    x.push_back(reduce_angle(a));
    y.push_back(3.0 * a);
  }
  const auto fit = make_fit(x, 1, y, {0.2}, Method::LocalLinear, 0.0, {VariableKind::Circular});
  EXPECT_NEAR(local_linear_mean(std::vector<double>{0.0}, fit), 0.0, 1e-9);
  EXPECT_NEAR(local_linear_mean(std::vector<double>{0.1}, fit), 0.3, 1e-9);
}

TEST(Smoothers, NarrowBandwidthPicksNearestNeighbour) {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y{4.0, -1.0, 7.5, 2.0};
  const auto ll = make_fit(x, 1, y, {1e-3});
  const auto nw = make_fit(x, 1, y, {1e-3}, Method::NadarayaWatson);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::vector<double> q{x[i] + 1e-4};
    EXPECT_NEAR(ll.predict(q), y[i], 1e-6);
    EXPECT_NEAR(nw.predict(q), y[i], 1e-6);
  }
}

TEST(SmootherRow, FallbackChain) {
  const auto x = grid(0.0, 1.0, 50);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
  const auto fit = make_fit(x, 1, y, {0.05}, Method::LocalLinear, std::nullopt);
  EXPECT_EQ(fit.row(std::vector<double>{0.5}).kind, RowKind::LocalLinear);
  EXPECT_EQ(fit.row(std::vector<double>{1.4}).kind, RowKind::NadarayaWatson);
  const auto far = fit.row(std::vector<double>{500.0});
  EXPECT_EQ(far.kind, RowKind::Uniform);
  EXPECT_NEAR(fit.dot(far.weights), std::accumulate(y.begin(), y.end(), 0.0) / y.size(), 1e-12);
}

TEST(SmootherRow, HatMatrixRowsMatchPredictions) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(40), y(40);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = std::exp(x[i]);
  }
  const auto fit = make_fit(x, 1, y, {0.1});
  const auto H = fit.hat_matrix();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * y[j];
    EXPECT_NEAR(s, fit.predict(std::vector<double>{x[i]}), 1e-12);
  }
}

TEST(InputDensity, Limits) {
  const auto one = make_fit({0.5}, 1, {1.0}, {0.2});
  EXPECT_NEAR(input_density(std::vector<double>{0.5}, one), gaussian_kernel(0.0, 0.2), 1e-15);
  const auto far = make_fit({0.0, 0.1}, 1, {1.0, 2.0}, {0.01});
  EXPECT_EQ(input_density(std::vector<double>{1000.0}, far), 0.0);
}

TEST(VarianceSmoother, Homoscedastic) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 0.5);
  const std::size_t n = 2000;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(rng);
    y[i] = std::sin(2.0 * std::numbers::pi * x[i]) + nd(rng);
  }
  const auto h = select_regression_bandwidths(x, 1, y, {VariableKind::Linear});
  const auto fit = make_fit(x, 1, y, {h[0].value}, Method::LocalLinear, std::nullopt);
  const auto var = variance_smoother(fit);
  for (double q : {0.2, 0.35, 0.5, 0.65, 0.8}) {
    const double s = var.sd(std::vector<double>{q});
    EXPECT_GE(s, 0.4) << q;
    EXPECT_LE(s, 0.6) << q;
  }
}

TEST(VarianceSmoother, ExactFitHitsFloor) {
  const auto x = grid(0.0, 1.0, 100);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * x[i] + 1.0;
  const auto fit = make_fit(x, 1, y, {0.1});
  const auto var = variance_smoother(fit, std::optional<std::vector<double>>{{0.1}});
  double v = 0.0, m = 0.0;
  for (double a : y) m += a;
  m /= y.size();
  for (double a : y) v += (a - m) * (a - m);
  const double floor = 1e-8 * v / (y.size() - 1);
  EXPECT_NEAR(var.floor, floor, 1e-20);
  for (double q : {0.0, 0.3, 0.9}) EXPECT_EQ(var.variance(std::vector<double>{q}), var.floor);
}

TEST(VarianceSmoother, TwoRegimes) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t n = 1500;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(rng);
    y[i] = x[i] + (x[i] < 0.5 ? 0.2 : 1.0) * nd(rng);
  }
  const auto fit = make_fit(x, 1, y, {0.1}, Method::LocalLinear, std::nullopt);
  const auto var = variance_smoother(fit);
  EXPECT_LT(var.sd(std::vector<double>{0.25}), var.sd(std::vector<double>{0.75}));
}
