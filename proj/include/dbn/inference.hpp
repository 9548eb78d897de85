#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbn/bridge.hpp"
#include "dbn/cost.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/error.hpp"
#include "dbn/logits.hpp"

namespace dbn {

enum class InferenceMode { one_step, ancestral };

/// Counts source-model forward passes; copies carry the current count.
struct PassCounter {
  std::atomic<std::size_t> value{0};
  PassCounter() = default;
  PassCounter(const PassCounter& o) : value(o.value.load()) {}
  PassCounter& operator=(const PassCounter& o) {
    value = o.value.load();
    return *this;
  }
};

/// One source model shared by L bridges.
struct DbnPredictor {
  ClassifierModel source;
  std::vector<BridgeModel> bridges;
  InferenceMode mode = InferenceMode::one_step;
  bool stochastic = false;
  std::optional<double> fixed_temperature;  // pins T instead of sampling the law
  mutable PassCounter source_passes;

  void validate() const {
    if (bridges.empty()) throw ConfigError("predictor needs at least one bridge");
    for (const auto& b : bridges) {
      if (b.source_index != bridges.front().source_index || b.feature_tap != bridges.front().feature_tap)
        throw ConfigError("all bridges must share the same source model and feature tap");
      if (b.net.config().class_count != source.class_count())
        throw ConfigError("bridge class count does not match the source model");
      source.check_tap(b.feature_tap);
      if (b.net.config().feature_dim != source.tap_width(b.feature_tap))
        throw ConfigError("bridge feature width does not match the source tap");
      if (mode == InferenceMode::one_step && b.n_steps() != 1)
        throw ConfigError("one-step mode requires every bridge to have n_steps = 1 (found " +
                          std::to_string(b.n_steps()) + ")");
    }
  }

  /// Pin T to the temperature law's mean (reproducible benchmarking).
  void fix_temperature_to_mean() { fixed_temperature = bridges.at(0).law.mean(); }
};

namespace detail {

inline SourceFeature source_pass(const DbnPredictor& p, std::span<const float> x) {
  ++p.source_passes.value;
  auto [h, z] = p.source.tap_and_logits(x, p.bridges.front().feature_tap);
  return {std::move(h), std::move(z)};
}

inline double bridge_temperature(const DbnPredictor& p, const BridgeModel& b, Rng& rng) {
  return p.fixed_temperature ? *p.fixed_temperature : b.law.sample(rng);
}

inline std::vector<double> average_softmax(const std::vector<LogitVector>& zs) {
  std::vector<double> mean(zs.front().size(), 0.0);
  for (const auto& z : zs) {
    const auto p = softmax(std::span<const float>(z));
    for (std::size_t k = 0; k < p.size(); ++k) mean[k] += static_cast<double>(p[k]);
  }
  for (auto& v : mean) v /= static_cast<double>(zs.size());
  return mean;
}

/// `steps` points picked evenly from the active grid (all of it when equal).
inline std::vector<std::size_t> pick_grid(const BridgeModel& b, std::size_t steps) {
  const std::size_t n = b.n_steps();
  if (steps == 0 || steps > n)
    throw ConfigError("ancestral inference: requested " + std::to_string(steps) + " steps but bridge has " +
                      std::to_string(n));
  std::vector<std::size_t> g;
  for (std::size_t i = 0; i <= steps; ++i) {
    const std::size_t pos = (i * n + steps / 2) / steps;
    g.push_back(b.active[std::min(pos, n)]);
  }
  g.front() = b.active.front();
  g.back() = b.active.back();
  return g;
}

}  // namespace detail

/// Final logits of one bridge from a single reverse step at t = 1.
inline LogitVector bridge_one_step(const BridgeModel& b, std::span<const float> h1, std::span<const float> z1,
                                   double temperature, bool stochastic, Rng& rng) {
  const auto zs = anneal_with(z1, temperature);
  const std::size_t top = b.active.back();
  const auto eps = b.net.epsilon(h1, zs, b.schedule.grid[top]);
  const float sig = static_cast<float>(b.schedule.sigma(top));
  LogitVector z0(zs.size());
  for (std::size_t k = 0; k < zs.size(); ++k) z0[k] = zs[k] - sig * eps[k];
  if (stochastic) {
    const float sd = static_cast<float>(std::sqrt(b.schedule.sigma2[top] - b.schedule.sigma2[b.active.front()]));
    for (auto& v : z0) v += sd * sample_normal(rng);
  }
  return z0;
}

/// Final logits of one bridge by ancestral sampling over `steps` grid steps.
inline LogitVector bridge_ancestral(const BridgeModel& b, std::span<const float> h1, std::span<const float> z1,
                                    double temperature, std::size_t steps, bool stochastic, Rng& rng) {
  const auto grid = detail::pick_grid(b, steps);
  auto z = anneal_with(z1, temperature);
  for (std::size_t i = grid.size() - 1; i > 0; --i)
    z = ancestral_step(b.net, b.schedule, h1, z, grid[i - 1], grid[i], stochastic ? &rng : nullptr);
  return z;
}

/// Ensemble prediction from one source pass and one step per bridge,
/// averaged over bridges.
inline std::vector<double> infer_one(const DbnPredictor& p, std::span<const float> x, Rng& rng) {
  if (p.mode != InferenceMode::one_step) throw ContractViolation("infer_one: predictor is not in one-step mode");
  for (const auto& b : p.bridges)
    if (b.n_steps() != 1) throw ContractViolation("infer_one: every bridge must be distilled to one step");
  const auto src = detail::source_pass(p, x);
  std::vector<LogitVector> outs;
  for (const auto& b : p.bridges)
    outs.push_back(bridge_one_step(b, src.h1, src.z1, detail::bridge_temperature(p, b, rng), p.stochastic, rng));
  return detail::average_softmax(outs);
}

inline std::vector<double> infer_ancestral(const DbnPredictor& p, std::span<const float> x, std::size_t steps,
                                           Rng& rng) {
  const auto src = detail::source_pass(p, x);
  std::vector<LogitVector> outs;
  for (const auto& b : p.bridges)
    outs.push_back(
        bridge_ancestral(b, src.h1, src.z1, detail::bridge_temperature(p, b, rng), steps, p.stochastic, rng));
  return detail::average_softmax(outs);
}

/// Dispatches on the predictor mode; ancestral mode uses each bridge's full grid.
inline std::vector<double> predict(const DbnPredictor& p, std::span<const float> x, Rng& rng) {
  if (p.mode == InferenceMode::one_step) return infer_one(p, x, rng);
  const auto src = detail::source_pass(p, x);
  std::vector<LogitVector> outs;
  for (const auto& b : p.bridges)
    outs.push_back(bridge_ancestral(b, src.h1, src.z1, detail::bridge_temperature(p, b, rng), b.n_steps(),
                                    p.stochastic, rng));
  return detail::average_softmax(outs);
}

/// Member index assignment for L bridges sharing source member 0.
struct BridgePlan {
  std::size_t members = 0;
  std::size_t per_bridge = 0;
  std::vector<std::vector<std::size_t>> bridges;  // zero-based member indices, source first
};

/// M = L*N + 1: bridge l (1-based) covers the source plus members
/// (l-1)*N+2 .. l*N+1 (1-based), so every non-source member is used once.
inline BridgePlan plan_bridges(std::size_t members, std::size_t per_bridge) {
  if (per_bridge == 0) throw ConfigError("plan_bridges: need at least one non-source member per bridge");
  if (members < per_bridge + 1 || (members - 1) % per_bridge != 0) {
    const std::size_t lo = members > 1 ? ((members - 1) / per_bridge) * per_bridge + 1 : 1;
    const std::size_t hi = lo + per_bridge;
    std::string hint = lo > 1 ? std::to_string(lo) + " or " + std::to_string(hi) : std::to_string(hi);
    throw ConfigError("plan_bridges: M = " + std::to_string(members) + " is not L*" + std::to_string(per_bridge) +
                      "+1; nearest valid M: " + hint);
  }
  BridgePlan plan{members, per_bridge, {}};
  const std::size_t L = (members - 1) / per_bridge;
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<std::size_t> idx{0};
    for (std::size_t j = 0; j < per_bridge; ++j) idx.push_back(l * per_bridge + 1 + j);
    plan.bridges.push_back(std::move(idx));
  }
  return plan;
}

// --- compute cost ------------------------------------------------------------

inline cost::LayerCost model_cost(const ClassifierModel& m, std::uint64_t flops_per_mac = cost::kFlopsPerMac) {
  auto c = cost::stack_cost(m.feature_net().to_json(), flops_per_mac) + cost::stack_cost(m.head().to_json(), flops_per_mac);
  c.layer = "classifier";
  return c;
}

inline cost::LayerCost model_cost(const ScoreNetwork& n, std::uint64_t flops_per_mac = cost::kFlopsPerMac) {
  cost::LayerCost c{0, 0, "score"};
  for (const auto* s : n.arch().stacks()) c += cost::stack_cost(s->to_json(), flops_per_mac);
  return c;
}

/// One source pass plus, per bridge, one score evaluation per sampling step.
inline cost::LayerCost model_cost(const DbnPredictor& p, std::uint64_t flops_per_mac = cost::kFlopsPerMac) {
  auto c = model_cost(p.source, flops_per_mac);
  for (const auto& b : p.bridges) {
    const std::uint64_t evals = p.mode == InferenceMode::one_step ? 1 : b.n_steps();
    auto s = model_cost(b.net, flops_per_mac);
    c.flops += s.flops * evals;
    c.params += s.params;
  }
  c.layer = "predictor";
  return c;
}

/// DE-k: k full member passes.
inline cost::LayerCost ensemble_cost(const EnsembleBundle& bundle, std::size_t k,
                                     std::uint64_t flops_per_mac = cost::kFlopsPerMac) {
  cost::LayerCost c{0, 0, "DE-" + std::to_string(k)};
  for (std::size_t i = 0; i < k; ++i) c += model_cost(bundle.members.at(i), flops_per_mac);
  return c;
}

}  // namespace dbn
