#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dear/tseries.hpp"
#include "oracles.hpp"

using namespace dear;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

}  // namespace

TEST(ChiSquare, Values) {
  EXPECT_EQ(chisq_cdf(0.0, 3), 0.0);
  EXPECT_NEAR(chisq_cdf(2.0, 2), 1.0 - std::exp(-1.0), 1e-14);
  EXPECT_NEAR(chisq_cdf(3.84, 1), 0.9500, 5e-5);
  EXPECT_NEAR(chisq_cdf(3.84, 1), oracle::chisq_cdf(3.84, 1), 1e-12);
  EXPECT_THROW((void)chisq_cdf(1.0, 0), Error);
}

TEST(ChiSquare, MatchesClosedFormsAcrossDegrees) {
  for (std::size_t df = 1; df <= 30; ++df) {
    for (double x : {0.01, 0.5, 1.0, 3.0, 7.5, 15.0, 30.0, 60.0}) {
      EXPECT_NEAR(chisq_cdf(x, df), oracle::chisq_cdf(x, df), 1e-12) << df << " " << x;
      EXPECT_NEAR(chisq_survival(x, df), 1.0 - oracle::chisq_cdf(x, df), 1e-12) << df << " " << x;
    }
  }
}

TEST(Acf, Basics) {
  const auto x = white_noise(10000, 1);
  const auto r = acf(x, 5);
  EXPECT_EQ(r[0], 1.0);
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_LT(std::abs(r[k]), 0.03);
  EXPECT_THROW((void)acf(std::vector<double>(10, 1.0), 2), Error);
}

TEST(Acf, Ar1Decay) {
  std::mt19937_64 rng(4);
  const auto u = oracle::simulate_ar({0.6}, 10000, 1.0, rng);
  const auto r = acf(u, 3);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_NEAR(r[k], std::pow(0.6, k), 0.05);
}

TEST(LjungBox, WorkedExample) {
  const std::vector<double> rho{0.3};
  const double q = ljung_box_statistic(rho, 100);
  EXPECT_NEAR(q, 100.0 * 102.0 * 0.09 / 99.0, 1e-12);
  EXPECT_NEAR(q, 9.2727, 1e-4);
  EXPECT_NEAR(chisq_survival(q, 1), 0.00232, 1e-5);
  EXPECT_NEAR(chisq_survival(q, 1), 1.0 - oracle::chisq_cdf(q, 1), 1e-12);
}

TEST(LjungBox, MatchesDirectFormula) {
  const auto x = white_noise(300, 8);
  for (std::size_t lags : {1u, 2u, 5u}) {
    const auto lb = ljung_box(x, lags);
    EXPECT_NEAR(lb.statistic, oracle::ljung_box_q(x, lags), 1e-10);
    EXPECT_NEAR(lb.p_value, 1.0 - oracle::chisq_cdf(lb.statistic, lags), 1e-12);
  }
}

TEST(LjungBox, ZeroAutocorrelation) {
  const std::vector<double> rho{0.0, 0.0};
  EXPECT_EQ(ljung_box_statistic(rho, 50), 0.0);
  EXPECT_EQ(chisq_survival(0.0, 2), 1.0);
}

TEST(LjungBox, CalibratedOnWhiteNoise) {
  int rejected = 0;
  for (std::uint64_t s = 1; s <= 1000; ++s) rejected += ljung_box(white_noise(500, s), 1, 0.05).rejected ? 1 : 0;
  EXPECT_GE(rejected, 30);
  EXPECT_LE(rejected, 70);
}

TEST(LjungBox, AllLagsReportsEachPValue) {
  std::mt19937_64 rng(5);
  const auto u = oracle::simulate_ar({0.6}, 1000, 1.0, rng);
  std::vector<double> p;
  EXPECT_FALSE(ljung_box_all_lags(u, 3, 0.05, &p));
  ASSERT_EQ(p.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], ljung_box(u, k + 1).p_value, 1e-15);
}

TEST(ArFit, NoiselessRecursion) {
  std::vector<double> u(50);
  u[0] = 1.0;
  for (std::size_t t = 1; t < u.size(); ++t) u[t] = 0.5 * u[t - 1];
  const auto fit = fit_ar_ls(u, 1);
  ASSERT_EQ(fit.coefficients.size(), 1u);
  EXPECT_NEAR(fit.coefficients[0], 0.5, 1e-12);
  EXPECT_TRUE(fit.stationary);
}

TEST(ArFit, OrderZeroIsIdentity) {
  const auto fit = fit_ar_ls(white_noise(100, 2), 0);
  EXPECT_EQ(fit.order, 0u);
  EXPECT_TRUE(fit.coefficients.empty());
}

TEST(ArFit, RecoversAr1) {
  int ok = 0;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    std::mt19937_64 rng(s);
    const auto u = oracle::simulate_ar({0.6}, 5000, 0.1, rng);
    const double a = fit_ar_ls(u, 1).coefficients[0];
    ok += (a >= 0.55 && a <= 0.65) ? 1 : 0;
  }
  EXPECT_GE(ok, 99);
}

TEST(ArFit, RecoversAr2) {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    std::mt19937_64 rng(s);
    const auto u = oracle::simulate_ar({0.5, -0.3}, 5000, 1.0, rng);
    const auto fit = fit_ar_ls(u, 2);
    EXPECT_NEAR(fit.coefficients[0], 0.5, 0.05);
    EXPECT_NEAR(fit.coefficients[1], -0.3, 0.05);
  }
}

TEST(ArFit, MatchesNormalEquations) {
  std::mt19937_64 rng(12);
  const auto u = oracle::simulate_ar({0.4, 0.2}, 400, 1.0, rng);
  const auto fit = fit_ar_ls(u, 2);
  Eigen::MatrixXd A(u.size() - 2, 2);
  Eigen::VectorXd b(u.size() - 2);
  for (std::size_t t = 2; t < u.size(); ++t) {
    A(static_cast<Eigen::Index>(t - 2), 0) = u[t - 1];
    A(static_cast<Eigen::Index>(t - 2), 1) = u[t - 2];
    b(static_cast<Eigen::Index>(t - 2)) = u[t];
  }
  const Eigen::VectorXd a = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  EXPECT_NEAR(fit.coefficients[0], a(0), 1e-12);
  EXPECT_NEAR(fit.coefficients[1], a(1), 1e-12);
}

TEST(OrderSelection, MonteCarlo) {
  int white = 0, ar1 = 0, ar2 = 0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    std::mt19937_64 rng(s);
    white += select_order(oracle::simulate_ar({}, 2000, 1.0, rng), 5) == 0 ? 1 : 0;
    ar1 += select_order(oracle::simulate_ar({0.6}, 2000, 1.0, rng), 5) == 1 ? 1 : 0;
    ar2 += select_order(oracle::simulate_ar({0.5, -0.3}, 2000, 1.0, rng), 5) == 2 ? 1 : 0;
  }
  EXPECT_GE(white, 45);
  EXPECT_GE(ar1, 40);
  EXPECT_GE(ar2, 40);
}
