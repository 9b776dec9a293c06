#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dear/backtest.hpp"
#include "dear/config.hpp"
#include "dear/data.hpp"
#include "dear/detail/format.hpp"
#include "dear/error.hpp"
#include "dear/estimator.hpp"
#include "dear/metrics.hpp"
#include "dear/synth.hpp"

namespace fs = std::filesystem;
using dear::detail::g17;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(dear::ErrorCode c) {
  switch (c) {
    case dear::ErrorCode::InvalidConfig:
    case dear::ErrorCode::UnstableModel:
    case dear::ErrorCode::InvalidBandwidth: return kExitConfig;
    case dear::ErrorCode::InsufficientData:
    case dear::ErrorCode::InsufficientHistory:
    case dear::ErrorCode::LengthMismatch:
    case dear::ErrorCode::Schema:
    case dear::ErrorCode::EmptyDataset:
    case dear::ErrorCode::InvalidSample:
    case dear::ErrorCode::Io: return kExitData;
    case dear::ErrorCode::Sparsity:
    case dear::ErrorCode::OverflowGuard:
    case dear::ErrorCode::Numerical: return kExitNumerical;
  }
  return kExitNumerical;
}

struct Options {
  std::string config;
  std::string data;
  std::string method;
  std::string out = ".";
  std::string model;
  std::optional<std::size_t> start;
  std::optional<std::size_t> end;
  std::optional<std::uint64_t> seed;
  std::optional<bool> parallel;
  std::size_t bench_forecasts = 500;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw dear::Error(dear::ErrorCode::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw dear::Error(dear::ErrorCode::Io, "write failed for " + path.string());
}

fs::path output_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw dear::Error(dear::ErrorCode::Io, "cannot create " + dir + ": " + ec.message());
  return p;
}

dear::RunConfig load_run_config(const Options& o) {
  dear::RunConfig c = o.config.empty() ? dear::parse_config("") : dear::load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.synth.seed = *o.seed;
  }
  if (o.parallel) c.parallel = *o.parallel;
  if (o.start) c.start = *o.start;
  if (o.end) c.end = *o.end;
  return c;
}

// The dataset named by --data, filtered; without --data, the configured
// synthetic series.
dear::Dataset load_dataset(const Options& o, dear::RunConfig& c) {
  dear::Dataset ds;
  if (o.data.empty()) {
    ds = dear::generate(c.synth).data;
  } else {
    dear::IngestReport rep;
    ds = dear::ingest_csv(o.data, c.schema, &rep);
    if (rep.dropped() > 0) std::cerr << "ingest: dropped " << rep.dropped() << " of " << rep.rows_read << " rows\n";
    dear::FilterReport frep;
    ds = dear::filter_idle(ds, c.filter, &frep);
    if (frep.removed_bounds + frep.removed_zero_run > 0) {
      std::cerr << "filter: removed " << frep.removed_bounds << " rows by bounds, " << frep.removed_zero_run
                << " by zero runs\n";
    }
  }
  if (ds.size() == 0) throw dear::Error(dear::ErrorCode::EmptyDataset, "no rows after ingestion and filtering");
  dear::resolve_kernel_groups(c, ds);
  return ds;
}

std::string forecasts_csv(const std::vector<std::size_t>& rows, const std::vector<dear::Forecast>& f) {
  std::string out = "t,mean";
  for (double q : dear::kQuantileLevels) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",q%g", q);
    out += buf;
  }
  out += ",clamped\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    out += std::to_string(rows[i]) + "," + g17(f[i].mean);
    for (std::size_t k = 0; k < dear::kNumLevels; ++k) out += "," + g17(f[i].level_quantile(k));
    out += f[i].clamped ? ",1\n" : ",0\n";
  }
  return out;
}

std::string density_grid_csv(const dear::RunConfig& c, const std::vector<std::size_t>& rows,
                             const std::vector<dear::Forecast>& f) {
  std::string out = "t,y,pdf\n";
  for (std::size_t want : c.density_instants) {
    std::size_t i = 0;
    while (i < rows.size() && rows[i] != want) ++i;
    if (i == rows.size()) {
      throw dear::Error(dear::ErrorCode::InvalidConfig,
                        "density instant " + std::to_string(want) + " is outside the evaluated rows");
    }
    if (!f[i].density) continue;  // point forecast, no density to plot
    const auto& d = *f[i].density;
    const auto [lo, hi] = d.support();
    const std::size_t m = c.density_grid_points;
    for (std::size_t k = 0; k < m; ++k) {
      const double y = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m - 1);
      out += std::to_string(want) + "," + g17(y) + "," + g17(d.pdf(y)) + "\n";
    }
  }
  return out;
}

std::string summary_line(const std::string& method, const dear::MetricsReport& m) {
  return "method=" + method + " n=" + std::to_string(m.n_test) + " rmse=" + g17(m.rmse) + " crps=" + g17(m.crps_mean) +
         " adev=" + g17(m.adev) + " apinaw=" + g17(m.apinaw);
}

std::pair<std::size_t, std::size_t> test_range(const dear::RunConfig& c, const dear::Dataset& ds) {
  const std::size_t start = c.start ? *c.start : c.window;
  const std::size_t end = c.end ? *c.end : ds.size() - 1;
  return {start, end};
}

int cmd_simulate(const Options& o) {
  dear::RunConfig c = load_run_config(o);
  const auto r = dear::generate(c.synth);
  const fs::path dir = output_dir(o.out);
  write_text(dir / "data.csv", dear::to_csv(r.data));
  write_text(dir / "truth.csv", dear::ground_truth_csv(r));
  std::string meta = "rng=" + std::string(dear::kRngIdentity) + "\nseed=" + std::to_string(c.synth.seed) +
                     "\nlength=" + std::to_string(c.synth.length) + "\n";
  write_text(dir / "metadata.txt", meta);
  std::cout << "wrote " << r.data.size() << " rows to " << (dir / "data.csv").string() << "\n";
  return kExitOk;
}

int cmd_fit(const Options& o) {
  dear::RunConfig c = load_run_config(o);
  const dear::Dataset ds = load_dataset(o, c);
  const std::size_t stop = c.start ? *c.start : ds.size();
  if (stop > ds.size() || stop < c.window) {
    throw dear::Error(dear::ErrorCode::InsufficientHistory, "not enough rows before the fit end for the window");
  }
  const auto gaps = dear::gap_flags(ds.timestamps);
  const auto model = dear::DearModel::fit(dear::window_of(ds, gaps, stop - c.window, stop), c.dear);
  std::ostringstream os;
  model.write(os);
  write_text(o.model.empty() ? fs::path(o.out) / "model.txt" : fs::path(o.model), os.str());

  std::cout << "rows=" << stop - c.window << ".." << stop - 1 << " order=" << model.order()
            << " iterations_run=" << model.iterations_run() << " converged=" << (model.converged() ? 1 : 0);
  std::cout << " a=";
  for (std::size_t k = 0; k < model.order(); ++k) std::cout << (k ? "," : "") << g17(model.ar().coefficients[k]);
  std::cout << " ljung_box_p=";
  const auto& p = model.ljung_box_p_values();
  for (std::size_t k = 0; k < p.size(); ++k) std::cout << (k ? "," : "") << g17(p[k]);
  std::cout << "\n";
  return kExitOk;
}

// Streams a saved model over [start, end]: forecast each row, then absorb it.
int cmd_forecast(const Options& o) {
  if (o.model.empty()) throw dear::Error(dear::ErrorCode::InvalidConfig, "--model is required");
  dear::RunConfig c = load_run_config(o);
  const dear::Dataset ds = load_dataset(o, c);
  std::ifstream is(o.model, std::ios::binary);
  if (!is) throw dear::Error(dear::ErrorCode::Io, "cannot read " + o.model);
  dear::DearModel model = dear::DearModel::read(is);
  const auto [start, end] = test_range(c, ds);
  if (start == 0 || end >= ds.size() || end < start) {
    throw dear::Error(dear::ErrorCode::InsufficientData, "forecast rows are outside the dataset");
  }
  const auto gaps = dear::gap_flags(ds.timestamps);
  std::vector<std::size_t> rows;
  std::vector<dear::Forecast> f;
  for (std::size_t t = start; t <= end; ++t) {
    rows.push_back(t);
    f.push_back(model.forecast(ds.row(t), !gaps[t]));
    if (t < end) model.update(ds.row(t), ds.y[t], !gaps[t]);
  }
  const fs::path dir = output_dir(o.out);
  write_text(dir / "forecasts.csv", forecasts_csv(rows, f));
  std::cout << "wrote " << f.size() << " forecasts to " << (dir / "forecasts.csv").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  dear::RunConfig c = load_run_config(o);
  const dear::Dataset ds = load_dataset(o, c);
  dear::BacktestConfig b;
  if (!o.method.empty()) {
    b.method = dear::parse_method(o.method);
  } else if (c.method) {
    b.method = *c.method;
  }
  b.window = c.window;
  std::tie(b.start, b.end) = test_range(c, ds);
  b.dear = c.dear;
  b.baseline = c.baseline;
  b.parallel = c.parallel;
  b.threads = c.threads;
  b.target_range = c.range;
  const auto r = dear::run_backtest(ds, b);

  const fs::path dir = output_dir(o.out);
  write_text(dir / "forecasts.csv", forecasts_csv(r.rows, r.forecasts));
  write_text(dir / "metrics.csv", dear::to_csv(r.metrics));
  write_text(dir / "metrics.txt", dear::to_key_value(r.metrics));
  write_text(dir / "density-grid.csv", density_grid_csv(c, r.rows, r.forecasts));
  std::cout << summary_line(dear::method_name(b.method), r.metrics) << "\n";
  return kExitOk;
}

// Fit plus streaming forecasts on a synthetic series with one linear and one
// circular covariate; reports wall-clock times.
int cmd_bench(const Options& o) {
  dear::RunConfig c = load_run_config(o);
  dear::SynthSpec spec = c.synth;
  if (o.config.empty()) {
    spec.kinds = {dear::VariableKind::Linear, dear::VariableKind::Circular};
    spec.ar = {0.6};
  }
  spec.length = c.window + o.bench_forecasts;
  const auto data = dear::generate(spec).data;
  const auto gaps = dear::gap_flags(data.timestamps);
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto model = dear::DearModel::fit(dear::window_of(data, gaps, 0, c.window), c.dear);
  const auto t1 = clock::now();
  std::vector<dear::Forecast> f;
  std::vector<double> actual;
  for (std::size_t t = c.window; t < data.size(); ++t) {
    f.push_back(model.forecast(data.row(t)));
    actual.push_back(data.y[t]);
    model.update(data.row(t), data.y[t]);
  }
  const auto t2 = clock::now();
  const auto m = dear::evaluate(f, actual);
  const auto t3 = clock::now();
  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  std::cout << "window=" << c.window << " d=" << spec.kinds.size() << " forecasts=" << f.size()
            << " fit_s=" << secs(t0, t1) << " forecast_update_s=" << secs(t1, t2) << " evaluate_s=" << secs(t2, t3)
            << " total_s=" << secs(t0, t3) << "\n";
  std::cout << summary_line("dear", m) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional density forecasting with autocorrelated residuals"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool data) {
    sub->add_option("--config", o.config, "key=value config file");
    if (data) sub->add_option("--data", o.data, "input CSV (default: the configured synthetic series)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "overrides seed and synth.seed");
  };
  auto* simulate = app.add_subcommand("simulate", "write a synthetic dataset and its ground truth");
  common(simulate, false);
  auto* fit = app.add_subcommand("fit", "fit a model on the window ending before --start and save it");
  common(fit, true);
  fit->add_option("--start", o.start, "first row after the training window (default: end of data)");
  fit->add_option("--model", o.model, "model output path (default: OUT/model.txt)");
  auto* forecast = app.add_subcommand("forecast", "stream one-step forecasts from a saved model");
  common(forecast, true);
  forecast->add_option("--model", o.model, "saved model")->required();
  forecast->add_option("--start", o.start, "first forecast row");
  forecast->add_option("--end", o.end, "last forecast row");
  auto* evaluate = app.add_subcommand("evaluate", "rolling one-step-ahead evaluation");
  common(evaluate, true);
  evaluate->add_option("--method", o.method, "dear, amk, aml, persistence or kdes");
  evaluate->add_option("--start", o.start, "first test row (default: window)");
  evaluate->add_option("--end", o.end, "last test row (default: last row)");
  evaluate->add_option("--parallel", o.parallel, "refit per test instant on worker threads");
  auto* bench = app.add_subcommand("bench", "time a fit plus streaming forecasts");
  common(bench, false);
  bench->add_option("--forecasts", o.bench_forecasts, "number of one-step forecasts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*fit) return cmd_fit(o);
    if (*forecast) return cmd_forecast(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*bench) return cmd_bench(o);
  } catch (const dear::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
