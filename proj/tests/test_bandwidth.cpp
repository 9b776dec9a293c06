#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "dear/bandwidth.hpp"
#include "oracles.hpp"

using namespace dear;

namespace {

// Probabilists' Hermite polynomial He_r by recurrence; phi^(r)(x) = (-1)^r He_r(x) phi(x).
long double hermite(int r, long double x) {
  long double a = 1.0L, b = x;
  if (r == 0) return a;
  for (int k = 1; k < r; ++k) {
    const long double c = x * b - k * a;
    a = b;
    b = c;
  }
  return b;
}

long double psi(const std::vector<double>& x, long double g, int r) {
  long double s = 0.0L;
  for (double a : x) {
    for (double b : x) {
      const long double z = (a - b) / g;
      s += hermite(r, z) * std::exp(-0.5L * z * z);
    }
  }
  const long double n = static_cast<long double>(x.size());
  return s / std::sqrt(2.0L * oracle::kPi) / (n * n * std::pow(g, r + 1));
}

// Two-stage plug-in written out from its definition.
double dpi_oracle(const std::vector<double>& x) {
  std::vector<double> s = x;
  std::sort(s.begin(), s.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    return s[lo] + (pos - lo) * (s[std::min(lo + 1, s.size() - 1)] - s[lo]);
  };
  long double m = 0.0L, v = 0.0L;
  for (double a : x) m += a;
  m /= x.size();
  for (double a : x) v += (a - m) * (a - m);
  const long double sd = std::sqrt(v / (x.size() - 1));
  const long double scale = std::min<long double>(sd, (q(0.75) - q(0.25)) / 1.34L);
  const long double n = static_cast<long double>(x.size());
  const long double rt = std::sqrt(oracle::kPi), r2 = std::sqrt(2.0L * oracle::kPi);
  const long double psi8 = 105.0L / (32.0L * rt * std::pow(scale, 9));
  const long double g1 = std::pow(2.0L * 15.0L / r2 / (psi8 * n), 1.0L / 9.0L);
  const long double psi6 = psi(x, g1, 6);
  const long double g2 = std::pow(-2.0L * 3.0L / r2 / (psi6 * n), 1.0L / 7.0L);
  const long double psi4 = psi(x, g2, 4);
  return static_cast<double>(std::pow(1.0L / (2.0L * rt * psi4 * n), 0.2L));
}

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

}  // namespace

TEST(RuleOfThumb, NormalReferenceValue) {
  // Evenly spaced sample standardised to sd 1: IQR/1.34 is about 1.29 > sd.
  const std::size_t n = 1000;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  double m = 0.0, v = 0.0;
  for (double a : x) m += a;
  m /= n;
  for (double a : x) v += (a - m) * (a - m);
  const double sd = std::sqrt(v / (n - 1));
  for (auto& a : x) a = (a - m) / sd;
  const double expect = 1.06 * std::pow(1000.0, -0.2);
  EXPECT_NEAR(rule_of_thumb_bandwidth(x), expect, 1e-12);
  EXPECT_NEAR(rule_of_thumb_bandwidth(x), 0.2661, 2e-4);
}

TEST(RuleOfThumb, EdgeCases) {
  const std::vector<double> two{0.0, 1.0};
  const double h = rule_of_thumb_bandwidth(two);
  EXPECT_TRUE(std::isfinite(h));
  EXPECT_GT(h, 0.0);
  EXPECT_THROW((void)rule_of_thumb_bandwidth(std::vector<double>(10, 3.0)), Error);
}

TEST(DpiDensity, MatchesDirectOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = normal_sample(400, seed, 2.0);
    const auto c = dpi_density_bandwidth(x);
    EXPECT_EQ(c.selector, Selector::DPI);
    EXPECT_NEAR(c.value, dpi_oracle(x), 1e-10 * c.value);
  }
}

TEST(DpiDensity, NormalSampleNearReference) {
  const double ref = 1.06 * std::pow(1000.0, -0.2);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const double h = dpi_density_bandwidth(normal_sample(1000, seed)).value;
    inside += (h >= 0.7 * ref && h <= 1.3 * ref) ? 1 : 0;
  }
  EXPECT_GE(inside, 95);
}

TEST(DpiDensity, ScaleEquivariant) {
  const auto x = normal_sample(500, 11);
  std::vector<double> y = x;
  for (auto& v : y) v *= 7.5;
  const double a = dpi_density_bandwidth(x).value;
  EXPECT_NEAR(dpi_density_bandwidth(y).value, 7.5 * a, 1e-8 * 7.5 * a);
}

TEST(DpiDensity, BimodalSmallerThanReference) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> x(1000);
  for (auto& v : x) v = nd(rng) + (coin(rng) ? 3.0 : -3.0);
  const double ref = 1.06 * std::sqrt(10.0) * std::pow(1000.0, -0.2);
  EXPECT_LT(dpi_density_bandwidth(x).value, ref);
}

TEST(DpiRegression, LinearTrendGivesWideBandwidth) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 0.01);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = 2.0 * x[i] + 1.0 + nd(rng);
  }
  EXPECT_GE(dpi_regression_bandwidth(x, y).value, 0.5);
}

TEST(DpiRegression, CurvatureShrinksBandwidth) {
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 0.1);
    std::vector<double> x(500), slow(500), fast(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u(rng);
      const double e = nd(rng);
      slow[i] = std::sin(2.0 * x[i]) + e;
      fast[i] = std::sin(8.0 * x[i]) + e;
    }
    ok += dpi_regression_bandwidth(x, fast).value < dpi_regression_bandwidth(x, slow).value ? 1 : 0;
  }
  EXPECT_EQ(ok, 20);
}

TEST(DpiRegression, ConstantCovariateFallsBack) {
  std::vector<double> x(100, 2.0), y(100);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 7);
  const auto c = dpi_regression_bandwidth(x, y);
  EXPECT_EQ(c.selector, Selector::RuleOfThumb);
  EXPECT_GT(c.value, 0.0);
}

TEST(Adaptive, SymmetricPairKeepsGlobalBandwidth) {
  const std::vector<double> r{-1.0, 1.0};
  for (double h : adaptive_bandwidths(r, 0.4)) EXPECT_NEAR(h, 0.4, 1e-15);
}

TEST(Adaptive, MatchesDefinitionAndWidensTails) {
  std::mt19937_64 rng(9);
  std::lognormal_distribution<double> ln(0.0, 0.8);
  std::vector<double> r(300);
  for (auto& v : r) v = ln(rng);
  const double h = 0.2;
  const auto hs = adaptive_bandwidths(r, h);
  std::vector<long double> g(r.size());
  long double mean_log = 0.0L;
  for (std::size_t i = 0; i < r.size(); ++i) {
    long double s = 0.0L;
    for (double b : r) s += oracle::normal_pdf((r[i] - b) / h) / h;
    g[i] = s / r.size();
    mean_log += std::log(g[i]);
  }
  mean_log /= r.size();
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(hs[i], h * std::exp(-0.5L * (std::log(g[i]) - mean_log)), 1e-12);
  }
  const auto mx = std::max_element(r.begin(), r.end()) - r.begin();
  const auto mode = std::max_element(g.begin(), g.end()) - g.begin();
  EXPECT_GT(hs[mx], hs[mode]);
}

TEST(RegressionSelection, CircularBandwidthRespectsGuard) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> nd(0.0, 0.05);
  const std::size_t n = 400;
  std::vector<double> x(2 * n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = u(rng);
    x[2 * i + 1] = u(rng);
    y[i] = std::sin(6.0 * x[2 * i + 1]) + nd(rng);
  }
  const auto c = select_regression_bandwidths(x, 2, y, {VariableKind::Linear, VariableKind::Circular});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_LE(1.0 / (c[1].value * c[1].value), kMaxConcentration);
}
