#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dear/data.hpp"
#include "dear/error.hpp"
#include "dear/tseries.hpp"

namespace dear {

enum class MeanShape { Linear, Sine, Logistic };
enum class SdShape { Constant, Step, Smooth };
enum class Innovation { Normal, SkewNormal, Uniform };
enum class CovariateProcess { Iid, Ar };

/// Generator for Y_t = m(X_t) + sigma(X_t) u_t with AR(p) noise
/// u_t = sum_k a_k u_{t-k} + eps_t. The first covariate x1 drives m and
/// sigma; extra covariates enter additively.
struct SynthSpec {
  MeanShape mean = MeanShape::Sine;
  SdShape sd = SdShape::Smooth;
  std::vector<double> ar;
  Innovation innovation = Innovation::Normal;
  CovariateProcess covariates = CovariateProcess::Iid;
  std::vector<VariableKind> kinds{VariableKind::Linear};
  std::size_t length = 2000;
  std::uint64_t seed = 1;
  double covariate_ar = 0.9;  // latent AR(1) coefficient for CovariateProcess::Ar
  std::int64_t start_time = 0;
  std::int64_t interval = 3600;
};

struct GroundTruth {
  std::vector<double> m;
  std::vector<double> sigma;
  std::vector<double> u;
  std::vector<double> eps;
};

struct SynthResult {
  Dataset data;
  GroundTruth truth;
};

/// Identifies the pseudorandom stream in output metadata.
inline constexpr const char* kRngIdentity = "mt19937_64; uniform=(x>>11)*2^-53; normal=Box-Muller";

namespace detail {

// Explicit conversions so streams are reproducible across standard libraries.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return rad * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double mean_shape(MeanShape s, double x) {
  switch (s) {
    case MeanShape::Linear: return 2.0 * x + 1.0;
    case MeanShape::Sine: return std::sin(2.0 * std::numbers::pi * x);
    case MeanShape::Logistic: return 1.0 / (1.0 + std::exp(-10.0 * (x - 0.5)));
  }
  return 0.0;
}

inline double sd_shape(SdShape s, double x) {
  switch (s) {
    case SdShape::Constant: return 0.5;
    case SdShape::Step: return x < 0.5 ? 0.3 : 0.6;
    case SdShape::Smooth: return 0.2 + 0.3 * x;
  }
  return 1.0;
}

// Two-piece normal with scales 0.5 (left) and 1.5 (right), standardised.
inline double skew_normal(SynthRng& rng) {
  constexpr double s1 = 0.5, s2 = 1.5;
  const double z = std::abs(rng.normal());
  const double v = rng.uniform() < s1 / (s1 + s2) ? -s1 * z : s2 * z;
  const double mean = std::sqrt(2.0 / std::numbers::pi) * (s2 - s1);
  const double var = (s1 * s1 * s1 + s2 * s2 * s2) / (s1 + s2) - mean * mean;
  return (v - mean) / std::sqrt(var);
}

inline double innovation(Innovation kind, SynthRng& rng) {
  switch (kind) {
    case Innovation::Normal: return rng.normal();
    case Innovation::SkewNormal: return skew_normal(rng);
    case Innovation::Uniform: return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
  }
  return 0.0;
}

}  // namespace detail

inline void validate(const SynthSpec& spec) {
  if (spec.length == 0) throw Error(ErrorCode::InvalidConfig, "synthetic length must be >= 1");
  if (spec.kinds.empty()) throw Error(ErrorCode::InvalidConfig, "need at least one covariate");
  if (spec.kinds.front() != VariableKind::Linear) throw Error(ErrorCode::InvalidConfig, "first covariate must be linear");
  if (!(std::abs(spec.covariate_ar) < 1.0)) throw Error(ErrorCode::InvalidConfig, "covariate AR must be in (-1, 1)");
  if (!spec.ar.empty() && !(detail::spectral_radius(spec.ar) < 1.0)) {
    throw Error(ErrorCode::UnstableModel, "AR coefficients are not stationary (spectral radius >= 1)");
  }
}

/// Deterministic given the seed. Linear covariates lie in [0, 1], circular
/// ones in [0, 2 pi).
inline SynthResult generate(const SynthSpec& spec) {
  validate(spec);
  detail::SynthRng rng(spec.seed);
  const std::size_t T = spec.length;
  const std::size_t d = spec.kinds.size();
  const std::size_t p = spec.ar.size();

  SynthResult out;
  Dataset& ds = out.data;
  ds.name = "synthetic";
  ds.target_name = "y";
  ds.kinds = spec.kinds;
  for (std::size_t j = 0; j < d; ++j) ds.covariate_names.push_back("x" + std::to_string(j + 1));
  ds.x.resize(T * d);
  ds.y.resize(T);
  ds.timestamps.resize(T);

  std::vector<double> latent(d, 0.0);
  const double ca = spec.covariate_ar;
  for (std::size_t j = 0; j < d; ++j) latent[j] = rng.normal();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      double unit;
      if (spec.covariates == CovariateProcess::Iid) {
        unit = rng.uniform();
      } else {
        latent[j] = ca * latent[j] + std::sqrt(1.0 - ca * ca) * rng.normal();
        unit = 0.5 * std::erfc(-latent[j] / std::numbers::sqrt2);
      }
      ds.x[t * d + j] = spec.kinds[j] == VariableKind::Circular ? reduce_angle(2.0 * std::numbers::pi * unit) : unit;
    }
    ds.timestamps[t] = spec.start_time + static_cast<std::int64_t>(t) * spec.interval;
  }

  // AR noise with a burn-in of 10 p steps.
  std::vector<double> hist(p, 0.0);
  auto step = [&]() {
    const double e = detail::innovation(spec.innovation, rng);
    double u = e;
    for (std::size_t k = 0; k < p; ++k) u += spec.ar[k] * hist[k];
    for (std::size_t k = p; k-- > 1;) hist[k] = hist[k - 1];
    if (p > 0) hist[0] = u;
    return std::pair{u, e};
  };
  for (std::size_t b = 0; b < 10 * p; ++b) step();

  GroundTruth& g = out.truth;
  g.m.resize(T);
  g.sigma.resize(T);
  g.u.resize(T);
  g.eps.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xt = ds.x.data() + t * d;
    double m = detail::mean_shape(spec.mean, xt[0]);
    for (std::size_t j = 1; j < d; ++j) m += spec.kinds[j] == VariableKind::Circular ? 0.5 * std::cos(xt[j]) : 0.5 * xt[j];
    const double s = detail::sd_shape(spec.sd, xt[0]);
    const auto [u, e] = step();
    g.m[t] = m;
    g.sigma[t] = s;
    g.u[t] = u;
    g.eps[t] = e;
    ds.y[t] = m + s * u;
  }
  return out;
}

/// Ground-truth dump: t, covariates, m, sigma, u, eps, Y.
inline std::string ground_truth_csv(const SynthResult& r) {
  const Dataset& ds = r.data;
  const std::size_t d = ds.kinds.size();
  std::string out = "t";
  for (const auto& n : ds.covariate_names) out += "," + n;
  out += ",m,sigma,u,eps,Y\n";
  for (std::size_t t = 0; t < ds.size(); ++t) {
    out += std::to_string(t);
    for (std::size_t j = 0; j < d; ++j) out += "," + detail::g17(ds.x[t * d + j]);
    out += "," + detail::g17(r.truth.m[t]) + "," + detail::g17(r.truth.sigma[t]) + "," + detail::g17(r.truth.u[t]) +
           "," + detail::g17(r.truth.eps[t]) + "," + detail::g17(ds.y[t]) + "\n";
  }
  return out;
}

}  // namespace dear
