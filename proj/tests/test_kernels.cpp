#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "dear/kernels.hpp"
#include "oracles.hpp"

using namespace dear;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(GaussianKernel, Values) {
  EXPECT_NEAR(gaussian_kernel(0.0, 1.0), 0.3989423, 5e-8);
  EXPECT_NEAR(gaussian_kernel(1.0, 1.0), oracle::normal_pdf(1.0), 1e-15);
  EXPECT_NEAR(gaussian_kernel(1.0, 1.0), 0.2419707, 5e-8);
  EXPECT_NEAR(gaussian_kernel(2.0, 0.5), oracle::normal_pdf(4.0) / 0.5, 1e-15);
}

TEST(GaussianKernel, RejectsNonPositiveBandwidth) {
  expect_code(ErrorCode::InvalidBandwidth, [] { (void)gaussian_kernel(0.0, 0.0); });
  expect_code(ErrorCode::InvalidBandwidth, [] { (void)gaussian_kernel(0.0, -1.0); });
}

TEST(VonMisesKernel, ValuesAgainstSeriesOracle) {
  const double norm = 2.0 * std::numbers::pi * oracle::bessel_i0(1.0);
  EXPECT_NEAR(von_mises_kernel(0.0, 1.0), std::exp(1.0) / norm, 1e-13);
  EXPECT_NEAR(von_mises_kernel(std::numbers::pi, 1.0), std::exp(-1.0) / norm, 1e-13);
  EXPECT_NEAR(von_mises_kernel(0.0, 1.0), 0.341711, 1e-6);
  EXPECT_NEAR(von_mises_kernel(std::numbers::pi, 1.0), 0.046246, 1e-6);
}

TEST(VonMisesKernel, OverflowGuard) {
  // h^-2 = 10000 > 700
  expect_code(ErrorCode::OverflowGuard, [] { (void)von_mises_kernel(0.0, 0.01); });
  EXPECT_TRUE(std::isfinite(von_mises_kernel(0.0, 1.0 / std::sqrt(699.0))));
}

TEST(VonMisesKernel, WideBandwidthIsUniform) {
  for (double u : {0.0, 1.0, 2.5, std::numbers::pi}) {
    EXPECT_NEAR(von_mises_kernel(u, 100.0), 1.0 / (2.0 * std::numbers::pi), 1e-4);
  }
}

TEST(VonMisesKernel, IntegratesToOne) {
  const int n = 20000;
  for (double h : {0.05, 0.3, 1.0, 3.0}) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += von_mises_kernel(-std::numbers::pi + (i + 0.5) * 2.0 * std::numbers::pi / n, h);
    EXPECT_NEAR(s * 2.0 * std::numbers::pi / n, 1.0, 1e-9) << h;
  }
}

TEST(BesselI0, Values) {
  EXPECT_EQ(bessel_i0(0.0), 1.0);
  EXPECT_NEAR(bessel_i0(1.0), 1.2660658778, 1e-10);
  EXPECT_NEAR(bessel_i0(2.0), 2.2795853023, 1e-10);
}

TEST(BesselI0, LogDomainMatchesOracle) {
  for (double x : {0.5, 10.0, 14.9, 15.1, 40.0, 300.0, 699.0}) {
    EXPECT_NEAR(log_bessel_i0(x), std::log(oracle::bessel_i0(x)), 1e-11 * std::max(1.0, x)) << x;
  }
}

TEST(MultiplicativeKernel, Examples) {
  const auto cfg = make_kernel_config({VariableKind::Linear, VariableKind::Linear}, {1.0, 1.0});
  const std::vector<double> x{1.0, 0.0}, xi{0.0, 0.0};
  const std::vector<std::size_t> both{0, 1}, first{0};
  EXPECT_NEAR(multiplicative_kernel(x, xi, cfg, both), 0.0965324, 5e-8);
  EXPECT_NEAR(multiplicative_kernel(x, xi, cfg, first), gaussian_kernel(1.0, 1.0), 1e-16);
  EXPECT_NEAR(multiplicative_kernel(xi, xi, cfg, both), oracle::normal_pdf(0.0) * oracle::normal_pdf(0.0), 1e-15);
  expect_code(ErrorCode::InvalidConfig, [&] { (void)multiplicative_kernel(x, xi, cfg, std::vector<std::size_t>{}); });
}

TEST(MultiplicativeKernel, CircularDistanceWraps) {
  const auto cfg = make_kernel_config({VariableKind::Circular}, {0.5});
  const std::vector<std::size_t> g{0};
  const std::vector<double> a{0.05}, b{2.0 * std::numbers::pi - 0.05};
  EXPECT_NEAR(multiplicative_kernel(a, b, cfg, g), von_mises_kernel(0.1, 0.5), 1e-14);
}

TEST(AmkWeight, MeanOfGroups) {
  const std::vector<VariableKind> kinds{VariableKind::Linear, VariableKind::Linear};
  const auto one = make_kernel_config(kinds, {1.0, 2.0}, {{0, 1}});
  const std::vector<double> x{0.3, -0.7}, xi{1.1, 0.4};
  EXPECT_DOUBLE_EQ(amk_weight(x, xi, one), multiplicative_kernel(x, xi, one, std::vector<std::size_t>{0, 1}));

  const auto two = make_kernel_config(kinds, {1.0, 2.0}, {{0}, {1}});
  const double k0 = gaussian_kernel(-0.8, 1.0), k1 = gaussian_kernel(-1.1, 2.0);
  EXPECT_NEAR(amk_weight(x, xi, two), 0.5 * (k0 + k1), 1e-16);
  EXPECT_NEAR(amk_weight(x, x, two), 0.5 * (gaussian_kernel(0.0, 1.0) + gaussian_kernel(0.0, 2.0)), 1e-16);

  const AmkKernel fast(two);
  EXPECT_NEAR(fast(x, xi), amk_weight(x, xi, two), 1e-16);
}

TEST(AmkWeight, FarQueryFlushesToZero) {
  const auto cfg = make_kernel_config({VariableKind::Linear}, {0.1});
  const std::vector<double> x{0.0}, xi{100.0};
  EXPECT_EQ(amk_weight(x, xi, cfg), 0.0);
  EXPECT_EQ(AmkKernel(cfg)(x, xi), 0.0);
}

TEST(AmkKernel, MatchesReferenceOnRandomInputs) {
  const std::vector<VariableKind> kinds{VariableKind::Linear, VariableKind::Circular, VariableKind::Linear,
                                        VariableKind::Circular};
  const auto cfg = make_kernel_config(kinds, {0.4, 0.7, 1.3, 0.2}, {}, {0});
  const AmkKernel fast(cfg);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(4), xi(4);
    for (auto& v : x) v = u(rng);
    for (auto& v : xi) v = u(rng);
    const double ref = amk_weight(x, xi, cfg);
    EXPECT_NEAR(fast(x, xi), ref, 1e-14 * std::max(1.0, ref));
  }
}

TEST(KernelConfig, DefaultGroups) {
  EXPECT_EQ(default_groups(2), (std::vector<std::vector<std::size_t>>{{0, 1}}));
  const auto g = default_groups(5, {0});
  EXPECT_EQ(g.size(), 6u);  // C(4, 2)
  for (const auto& grp : g) {
    EXPECT_EQ(grp.size(), 3u);
    EXPECT_EQ(grp.front(), 0u);
  }
  EXPECT_EQ(default_groups(4).size(), 4u);
}

TEST(KernelConfig, Validation) {
  expect_code(ErrorCode::InvalidConfig, [] { (void)make_kernel_config({VariableKind::Linear}, {1.0}, {{}}); });
  expect_code(ErrorCode::InvalidConfig,
              [] { (void)make_kernel_config({VariableKind::Linear, VariableKind::Linear}, {1.0, 1.0}, {{0}}); });
  expect_code(ErrorCode::InvalidBandwidth, [] { (void)make_kernel_config({VariableKind::Linear}, {0.0}); });
  expect_code(ErrorCode::OverflowGuard, [] { (void)make_kernel_config({VariableKind::Circular}, {0.001}); });
}
