#include <gtest/gtest.h>

#include <string>

#include "dear/backtest.hpp"
#include "dear/config.hpp"
#include "dear/synth.hpp"

using namespace dear;

TEST(Config, ParsesKeys) {
  const auto c = parse_config(
      "# wind farm\n"
      "target = power\n"
      "covariates = speed, dir\n"
      "circular = dir\n"
      "window = 500   # rows\n"
      "refit_every = 25\n"
      "lower = 0\n"
      "upper = 2.05\n"
      "p_max = 3\n"
      "alpha = 0.01\n"
      "lambda = 0.99\n"
      "method = kdes\n"
      "groups = speed+dir;speed\n"
      "filter.min.power = 0\n"
      "filter.zero_run = 6\n"
      "synth.ar = 0.6, -0.1\n"
      "synth.kinds = linear,circular\n"
      "seed = 17\n");
  EXPECT_EQ(c.schema.target, "power");
  EXPECT_EQ(c.schema.covariates, (std::vector<std::string>{"speed", "dir"}));
  EXPECT_EQ(c.schema.circular, (std::vector<std::string>{"dir"}));
  EXPECT_EQ(c.window, 500u);
  EXPECT_EQ(c.dear.refit_every, 25u);
  EXPECT_EQ(c.baseline.refit_every, 25u);
  EXPECT_EQ(c.dear.lower, 0.0);
  EXPECT_EQ(c.baseline.upper, 2.05);
  EXPECT_EQ(c.dear.p_max, 3u);
  EXPECT_EQ(c.dear.alpha, 0.01);
  EXPECT_EQ(c.baseline.lambda, 0.99);
  EXPECT_EQ(c.method, MethodKind::Kdes);
  EXPECT_EQ(c.groups, (std::vector<std::string>{"speed+dir", "speed"}));
  EXPECT_EQ(*c.filter.bounds.at("power").min, 0.0);
  EXPECT_EQ(c.filter.zero_run, 6u);
  EXPECT_EQ(c.synth.ar, (std::vector<double>{0.6, -0.1}));
  EXPECT_EQ(c.synth.seed, 17u);
}

TEST(Config, Defaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.window, 2000u);
  EXPECT_EQ(c.dear.max_iterations, 10u);
  EXPECT_EQ(c.dear.coef_tol, 1e-4);
  EXPECT_EQ(c.dear.alpha, 0.05);
  EXPECT_EQ(c.baseline.lambda, 1.0);
}

TEST(Config, Errors) {
  for (const char* bad : {"nonsense", "unknown_key=1", "window=abc", "window=-3", "lower=5\nupper=1", "lambda=0",
                          "method=svr", "degrees=maybe", "alpha=2", "synth.mean=cubic", "min_window=300\nwindow=200"}) {
    try {
      (void)parse_config(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig) << bad;
    }
  }
}

TEST(Config, ResolvesKernelGroups) {
  auto c = parse_config("groups=speed+dir;hour\nanchors=speed\n");
  Dataset ds;
  ds.covariate_names = {"speed", "dir", "hour"};
  ds.kinds.assign(3, VariableKind::Linear);
  resolve_kernel_groups(c, ds);
  EXPECT_EQ(c.dear.groups, (std::vector<std::vector<std::size_t>>{{0, 1}, {2}}));
  EXPECT_EQ(c.baseline.anchors, (std::vector<std::size_t>{0}));
  auto bad = parse_config("groups=speed+gust\n");
  EXPECT_THROW(resolve_kernel_groups(bad, ds), Error);
}

TEST(Backtest, StreamingRowsAndParallelAgreeOnFirstInstant) {
  SynthSpec s;
  s.ar = {0.6};
  s.length = 330;
  const auto ds = generate(s).data;
  BacktestConfig b;
  b.window = 300;
  b.start = 300;
  b.end = 329;
  b.dear.refit_every = 10;
  const auto stream = run_backtest(ds, b);
  ASSERT_EQ(stream.forecasts.size(), 30u);
  EXPECT_EQ(stream.rows.front(), 300u);
  EXPECT_EQ(stream.rows.back(), 329u);
  EXPECT_EQ(stream.actuals.back(), ds.y[329]);
  EXPECT_EQ(stream.metrics.n_test, 30u);

  b.parallel = true;
  b.threads = 2;
  b.end = 302;
  const auto par = run_backtest(ds, b);
  // The first instant is fitted on the same window in both modes.
  EXPECT_EQ(par.forecasts[0].mean, stream.forecasts[0].mean);
  for (std::size_t k = 0; k < kNumLevels; ++k) {
    EXPECT_EQ(par.forecasts[0].level_quantile(k), stream.forecasts[0].level_quantile(k));
  }
}

TEST(Backtest, AllMethodsRun) {
  SynthSpec s;
  s.ar = {0.6};
  s.length = 260;
  const auto ds = generate(s).data;
  for (auto m : {MethodKind::Dear, MethodKind::Amk, MethodKind::Aml, MethodKind::Persistence, MethodKind::Kdes}) {
    BacktestConfig b;
    b.method = m;
    b.window = 240;
    b.start = 240;
    b.end = 259;
    b.baseline.lambda = 0.99;
    const auto r = run_backtest(ds, b);
    EXPECT_TRUE(std::isfinite(r.metrics.rmse)) << method_name(m);
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_THROW((void)parse_method("svr"), Error);
}
