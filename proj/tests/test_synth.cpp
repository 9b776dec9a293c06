#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "dear/synth.hpp"
#include "dear/tseries.hpp"

using namespace dear;

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST(Synth, WhiteNoiseAcf) {
  SynthSpec s;
  s.length = 5000;
  const auto r = generate(s);
  EXPECT_LE(std::abs(acf(r.truth.u, 1)[1]), 3.0 / std::sqrt(5000.0));
}

TEST(Synth, Ar1Acf) {
  SynthSpec s;
  s.ar = {0.6};
  s.length = 10000;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    s.seed = seed;
    const double r1 = acf(generate(s).truth.u, 1)[1];
    EXPECT_GE(r1, 0.55);
    EXPECT_LE(r1, 0.65);
  }
}

TEST(Synth, Deterministic) {
  SynthSpec s;
  s.ar = {0.5, -0.2};
  s.kinds = {VariableKind::Linear, VariableKind::Circular};
  s.covariates = CovariateProcess::Ar;
  const auto a = generate(s);
  const auto b = generate(s);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(ground_truth_csv(a), ground_truth_csv(b));
  s.seed = 2;
  EXPECT_NE(generate(s).data.y, a.data.y);
}

TEST(Synth, InternalConsistency) {
  SynthSpec s;
  s.ar = {0.6};
  s.sd = SdShape::Step;
  s.mean = MeanShape::Logistic;
  s.kinds = {VariableKind::Linear, VariableKind::Linear, VariableKind::Circular};
  const auto r = generate(s);
  for (std::size_t t = 0; t < r.data.size(); ++t) {
    EXPECT_NEAR((r.data.y[t] - r.truth.m[t]) / r.truth.sigma[t], r.truth.u[t], 1e-12);
    if (t > 0) {
      EXPECT_NEAR(r.truth.u[t], 0.6 * r.truth.u[t - 1] + r.truth.eps[t], 1e-14);
    }
    const auto x = r.data.row(t);
    EXPECT_GE(x[0], 0.0);
    EXPECT_LT(x[0], 1.0);
    EXPECT_GE(x[2], 0.0);
    EXPECT_LT(x[2], 2.0 * std::numbers::pi);
    EXPECT_GT(r.truth.sigma[t], 0.0);
  }
}

TEST(Synth, InnovationMoments) {
  for (auto kind : {Innovation::Normal, Innovation::SkewNormal, Innovation::Uniform}) {
    SynthSpec s;
    s.innovation = kind;
    s.length = 20000;
    const auto e = generate(s).truth.eps;
    EXPECT_LE(std::abs(mean_of(e)), 3.0 / std::sqrt(20000.0));
    EXPECT_NEAR(var_of(e), 1.0, 0.1);
  }
}

TEST(Synth, SkewNormalIsSkewed) {
  SynthSpec s;
  s.innovation = Innovation::SkewNormal;
  s.length = 20000;
  const auto e = generate(s).truth.eps;
  double m3 = 0.0;
  for (double v : e) m3 += v * v * v;
  EXPECT_GT(m3 / e.size(), 0.3);
}

TEST(Synth, RejectsUnstableAr) {
  SynthSpec s;
  s.ar = {1.2};
  try {
    (void)generate(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnstableModel);
    EXPECT_NE(std::string(e.what()).find("spectral radius"), std::string::npos);
  }
  s.ar = {0.5, 0.6};
  EXPECT_THROW((void)generate(s), Error);
  s.ar = {};
  s.length = 0;
  EXPECT_THROW((void)generate(s), Error);
}

TEST(Synth, GroundTruthCsvShape) {
  SynthSpec s;
  s.length = 4;
  s.kinds = {VariableKind::Linear, VariableKind::Circular};
  const auto csv = ground_truth_csv(generate(s));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x1,x2,m,sigma,u,eps,Y");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
