#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dbn/error.hpp"
#include "dbn/logits.hpp"
#include "dbn/random.hpp"
#include "json.hpp"

namespace dbn {

enum class ScheduleShape { linear_beta, symmetric_triangular };

inline const char* to_string(ScheduleShape s) {
  return s == ScheduleShape::linear_beta ? "linear-beta" : "symmetric-triangular";
}

inline ScheduleShape schedule_shape_from_string(const std::string& s) {
  if (s == "linear-beta") return ScheduleShape::linear_beta;
  if (s == "symmetric-triangular") return ScheduleShape::symmetric_triangular;
  throw ConfigError("unknown schedule shape '" + s + "'");
}

/// Uniform time grid t_i = i/N with per-interval beta and the cumulative
/// forward (sigma2) and backward (sigma2_bar) variances at every grid point.
struct DiffusionSchedule {
  ScheduleShape shape = ScheduleShape::symmetric_triangular;
  double beta_max = 0.3;
  std::vector<double> grid;        // N+1 points
  std::vector<double> beta;        // N intervals
  std::vector<double> sigma2;      // int_0^t beta
  std::vector<double> sigma2_bar;  // int_t^1 beta

  std::size_t steps() const { return beta.size(); }
  double total_variance() const { return sigma2.back(); }
  double sigma(std::size_t i) const { return std::sqrt(sigma2.at(i)); }

  /// Grid index of `t`. Off-grid times are rejected, naming the nearest point.
  std::size_t index_of(double t) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (std::abs(grid[i] - t) < std::abs(grid[best] - t)) best = i;
    if (std::abs(grid[best] - t) > 1e-9)
      throw ConfigError("t = " + std::to_string(t) + " is not on the schedule grid; nearest grid point is t = " +
                        std::to_string(grid[best]));
    return best;
  }

  /// Mixing weights (Z0, Z1) and posterior variance at grid index i.
  struct Posterior {
    double w0, w1, var;
  };
  Posterior posterior(std::size_t i) const {
    const double a = sigma2_bar.at(i), b = sigma2.at(i), s = a + b;
    return {a / s, b / s, a * b / s};
  }

  nlohmann::json to_json() const {
    return {{"shape", to_string(shape)}, {"beta_max", beta_max}, {"grid", grid}, {"beta", beta},
            {"sigma2", sigma2}, {"sigma2_bar", sigma2_bar}};
  }
  static DiffusionSchedule from_json(const nlohmann::json& j) {
    DiffusionSchedule s;
    s.shape = schedule_shape_from_string(j.at("shape"));
    s.beta_max = j.at("beta_max");
    s.grid = j.at("grid").get<std::vector<double>>();
    s.beta = j.at("beta").get<std::vector<double>>();
    s.sigma2 = j.at("sigma2").get<std::vector<double>>();
    s.sigma2_bar = j.at("sigma2_bar").get<std::vector<double>>();
    if (s.grid.size() != s.beta.size() + 1 || s.sigma2.size() != s.grid.size() || s.sigma2_bar.size() != s.grid.size())
      throw DataError("inconsistent schedule table sizes");
    return s;
  }
  bool operator==(const DiffusionSchedule&) const = default;
};

/// Beta per interval is the shape evaluated at the interval midpoint;
/// triangular peaks at t = 0.5, linear rises from 0 at t = 0 to beta_max at t = 1.
inline DiffusionSchedule build_schedule(std::size_t n, ScheduleShape shape = ScheduleShape::symmetric_triangular,
                                        double beta_max = 0.3) {
  if (n == 0) throw ConfigError("schedule needs at least one step");
  if (!(beta_max > 0.0)) throw ConfigError("beta_max must be positive");
  DiffusionSchedule s;
  s.shape = shape;
  s.beta_max = beta_max;
  const double dt = 1.0 / static_cast<double>(n);
  s.grid.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) s.grid[i] = static_cast<double>(i) / static_cast<double>(n);
  s.beta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mid = (static_cast<double>(i) + 0.5) * dt;
    s.beta[i] = shape == ScheduleShape::linear_beta ? beta_max * mid : beta_max * (1.0 - std::abs(2.0 * mid - 1.0));
  }
  s.sigma2.assign(n + 1, 0.0);
  s.sigma2_bar.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) s.sigma2[i + 1] = s.sigma2[i] + s.beta[i] * dt;
  for (std::size_t i = n; i-- > 0;) s.sigma2_bar[i] = s.sigma2_bar[i + 1] + s.beta[i] * dt;
  return s;
}

/// T = scale * (1 + slope * u), u ~ Beta(alpha, beta).
struct TemperatureLaw {
  double scale = 2.0;
  double slope = 0.2;
  double alpha = 1.0;
  double beta = 5.0;

  double sample(Rng& rng) const { return scale * (1.0 + slope * sample_beta(rng, alpha, beta)); }
  double mean() const { return scale * (1.0 + slope * alpha / (alpha + beta)); }
  double min() const { return scale; }
  double max() const { return scale * (1.0 + slope); }

  nlohmann::json to_json() const { return {{"scale", scale}, {"slope", slope}, {"alpha", alpha}, {"beta", beta}}; }
  static TemperatureLaw from_json(const nlohmann::json& j) {
    return {j.at("scale"), j.at("slope"), j.at("alpha"), j.at("beta")};
  }
  bool operator==(const TemperatureLaw&) const = default;
};

struct AnnealedSource {
  LogitVector z;
  double temperature;
};

inline LogitVector anneal_with(std::span<const float> z1, double temperature) {
  LogitVector out(z1.size());
  const float t = static_cast<float>(temperature);
  for (std::size_t i = 0; i < z1.size(); ++i) out[i] = z1[i] / t;
  return out;
}

inline AnnealedSource anneal_source(std::span<const float> z1, const TemperatureLaw& law, Rng& rng) {
  const double t = law.sample(rng);
  return {anneal_with(z1, t), t};
}

namespace detail {
inline LogitVector mix(std::span<const float> a, std::span<const float> b, double wa, double wb, double var,
                       Rng* rng) {
  if (a.size() != b.size()) throw ConfigError("posterior: endpoint dimensions differ");
  LogitVector out(a.size());
  const float fa = static_cast<float>(wa), fb = static_cast<float>(wb);
  const float sd = static_cast<float>(std::sqrt(var));
  for (std::size_t k = 0; k < a.size(); ++k) {
    out[k] = fa * a[k] + fb * b[k];
    if (rng && var > 0.0) out[k] += sd * sample_normal(*rng);
  }
  return out;
}
}  // namespace detail

/// Draw Z_t ~ N(mu_t, Sigma_t) from the Gaussian bridge between Z0 and Z1.
/// The endpoints are returned bit-exactly with no noise draw. A null rng
/// returns the mean.
inline LogitVector posterior_sample_at(std::span<const float> z0, std::span<const float> z1, std::size_t index,
                                       const DiffusionSchedule& schedule, Rng* rng) {
  if (z0.size() != z1.size()) throw ConfigError("posterior_sample: endpoint dimensions differ");
  if (schedule.sigma2.at(index) == 0.0) return LogitVector(z0.begin(), z0.end());
  if (schedule.sigma2_bar.at(index) == 0.0) return LogitVector(z1.begin(), z1.end());
  const auto p = schedule.posterior(index);
  return detail::mix(z0, z1, p.w0, p.w1, p.var, rng);
}

inline LogitVector posterior_sample(std::span<const float> z0, std::span<const float> z1, double t,
                                    const DiffusionSchedule& schedule, Rng& rng) {
  return posterior_sample_at(z0, z1, schedule.index_of(t), schedule, &rng);
}

/// Ancestral transition Z_t -> Z_s (s < t) given the current estimate of Z0:
/// the same Gaussian bridge restricted to [0, t], i.e. weights
/// int_s^t beta / int_0^t beta on Zhat0 and int_0^s beta / int_0^t beta on Z_t.
inline LogitVector posterior_between_at(std::span<const float> zhat0, std::span<const float> zt, std::size_t s,
                                        std::size_t t, const DiffusionSchedule& schedule, Rng* rng) {
  if (s >= t)
    throw ContractViolation("posterior_between: need s < t (got grid indices " + std::to_string(s) + ", " +
                            std::to_string(t) + ")");
  if (zhat0.size() != zt.size()) throw ConfigError("posterior_between: dimensions differ");
  const double v0s = schedule.sigma2.at(s);
  if (v0s == 0.0) return LogitVector(zhat0.begin(), zhat0.end());
  const double v0t = schedule.sigma2.at(t);
  const double vst = v0t - v0s;
  return detail::mix(zhat0, zt, vst / v0t, v0s / v0t, vst * v0s / v0t, rng);
}

inline LogitVector posterior_between(std::span<const float> zhat0, std::span<const float> zt, double s, double t,
                                     const DiffusionSchedule& schedule, Rng& rng) {
  return posterior_between_at(zhat0, zt, schedule.index_of(s), schedule.index_of(t), schedule, &rng);
}

}  // namespace dbn
