#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "dear/baselines.hpp"
#include "dear/data.hpp"
#include "dear/error.hpp"
#include "dear/estimator.hpp"
#include "dear/forecast.hpp"
#include "dear/metrics.hpp"

namespace dear {

enum class MethodKind { Dear, Amk, Aml, Persistence, Kdes };

inline MethodKind parse_method(std::string_view s) {
  if (s == "dear") return MethodKind::Dear;
  if (s == "amk") return MethodKind::Amk;
  if (s == "aml") return MethodKind::Aml;
  if (s == "persistence") return MethodKind::Persistence;
  if (s == "kdes") return MethodKind::Kdes;
  throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(s) + "'");
}

inline std::string method_name(MethodKind m) {
  switch (m) {
    case MethodKind::Dear: return "dear";
    case MethodKind::Amk: return "amk";
    case MethodKind::Aml: return "aml";
    case MethodKind::Persistence: return "persistence";
    case MethodKind::Kdes: return "kdes";
  }
  return "?";
}

/// Streaming one-step-ahead forecaster.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  [[nodiscard]] virtual Forecast forecast(std::span<const double> x, bool contiguous) const = 0;
  virtual void update(std::span<const double> x, double y, bool contiguous) = 0;
};

template <class Model>
class ModelForecaster final : public Forecaster {
 public:
  explicit ModelForecaster(Model m) : model_(std::move(m)) {}
  [[nodiscard]] Forecast forecast(std::span<const double> x, bool contiguous) const override {
    return model_.forecast(x, contiguous);
  }
  void update(std::span<const double> x, double y, bool contiguous) override { model_.update(x, y, contiguous); }
  [[nodiscard]] const Model& model() const { return model_; }

 private:
  Model model_;
};

struct BacktestConfig {
  MethodKind method = MethodKind::Dear;
  std::size_t window = 2000;
  std::size_t start = 0;  // first test row
  std::size_t end = 0;    // last test row, inclusive
  DearConfig dear;
  BaselineConfig baseline;
  // Refit every test instant on its own window, spread over worker threads.
  // Much slower than streaming; kept for cross-checking.
  bool parallel = false;
  unsigned threads = 0;  // 0: hardware concurrency
  std::optional<double> target_range;
};

inline std::unique_ptr<Forecaster> make_forecaster(MethodKind method, const Window& w, const DearConfig& dear,
                                                   BaselineConfig baseline) {
  switch (method) {
    case MethodKind::Dear: return std::make_unique<ModelForecaster<DearModel>>(DearModel::fit(w, dear));
    case MethodKind::Aml: return std::make_unique<ModelForecaster<AmlModel>>(AmlModel::fit(w, baseline));
    case MethodKind::Amk:
      baseline.lambda = 1.0;
      return std::make_unique<ModelForecaster<KernelDensityModel>>(KernelDensityModel::fit(w, baseline));
    case MethodKind::Kdes:
      return std::make_unique<ModelForecaster<KernelDensityModel>>(KernelDensityModel::fit(w, baseline));
    case MethodKind::Persistence:
      return std::make_unique<ModelForecaster<PersistenceModel>>(PersistenceModel::fit(w, baseline));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown method");
}

/// Training window over rows [begin, end) with contiguity restarted at begin.
inline Window window_of(const Dataset& ds, const std::vector<bool>& gaps, std::size_t begin, std::size_t end) {
  Window w;
  w.x = ds.covariates(begin, end);
  w.y.assign(ds.y.begin() + static_cast<std::ptrdiff_t>(begin), ds.y.begin() + static_cast<std::ptrdiff_t>(end));
  w.kinds = ds.kinds;
  std::vector<bool> brk(end - begin);
  for (std::size_t t = begin; t < end; ++t) brk[t - begin] = t == begin || gaps[t];
  w.run = contiguity_runs(brk);
  return w;
}

struct BacktestResult {
  std::vector<std::size_t> rows;
  std::vector<std::int64_t> timestamps;
  std::vector<Forecast> forecasts;
  std::vector<double> actuals;
  MetricsReport metrics;
};

/// One-step-ahead evaluation over test rows [start, end]. Streaming mode
/// fits once on the W rows before start and then alternates forecast and
/// update, so the model state carries across instants.
inline BacktestResult run_backtest(const Dataset& ds, const BacktestConfig& cfg, bool with_metrics = true) {
  const auto spans = rolling_windows(ds, cfg.window, cfg.start, cfg.end);
  const auto gaps = gap_flags(ds.timestamps);
  const std::size_t n = spans.size();
  BacktestResult out;
  out.rows.resize(n);
  out.timestamps.resize(n);
  out.actuals.resize(n);
  out.forecasts.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.rows[i] = spans[i].test;
    out.timestamps[i] = ds.timestamps[spans[i].test];
    out.actuals[i] = ds.y[spans[i].test];
  }

  if (!cfg.parallel) {
    auto model = make_forecaster(cfg.method, window_of(ds, gaps, spans.front().train_begin, spans.front().train_end),
                                 cfg.dear, cfg.baseline);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = spans[i].test;
      const bool contiguous = !gaps[t];
      out.forecasts[i] = model->forecast(ds.row(t), contiguous);
      if (i + 1 < n) model->update(ds.row(t), ds.y[t], contiguous);
    }
  } else {
    unsigned workers = cfg.threads > 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&]() {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          const auto& s = spans[i];
          const auto model = make_forecaster(cfg.method, window_of(ds, gaps, s.train_begin, s.train_end), cfg.dear,
                                             cfg.baseline);
          out.forecasts[i] = model->forecast(ds.row(s.test), !gaps[s.test]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < workers; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  if (with_metrics) out.metrics = evaluate(out.forecasts, out.actuals, cfg.target_range);
  return out;
}

}  // namespace dear
