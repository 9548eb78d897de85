#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dbn/error.hpp"
#include "dbn/nn/param_store.hpp"

namespace dbn::nn {

/// Cosine-decayed learning rate. Steps past the end clamp to 0.
inline double lr_cosine(long step, long total_steps, double base_lr) {
  if (total_steps <= 0) throw ConfigError("lr_cosine: total_steps must be positive");
  if (step <= 0) return base_lr;
  if (step >= total_steps) return 0.0;
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

enum class OptimizerKind { adam, sgd_momentum };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double base_lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  long total_steps = 0;  // 0 disables the cosine schedule
};

/// Moment (Adam) or velocity (SGD) buffers aligned with a ParamStore.
class OptimizerState {
 public:
  OptimizerState(OptimizerConfig cfg, const ParamStore& params) : cfg_(cfg) {
    for (const auto& t : params.tensors()) {
      first_.emplace_back(t.numel(), 0.0f);
      if (cfg_.kind == OptimizerKind::adam) second_.emplace_back(t.numel(), 0.0f);
    }
  }

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return step_; }
  const std::vector<std::vector<float>>& first_moments() const { return first_; }
  const std::vector<std::vector<float>>& second_moments() const { return second_; }

  double current_lr() const {
    return cfg_.total_steps > 0 ? lr_cosine(step_, cfg_.total_steps, cfg_.base_lr) : cfg_.base_lr;
  }

  /// Applies one update in place. Aborts before touching anything if a
  /// gradient element is non-finite.
  void step(ParamStore& params, const ParamStore& grads) {
    params.require_same_layout(grads, "optimizer_step");
    if (first_.size() != params.size()) throw ConfigError("optimizer_step: state built for a different ParamStore");
    for (std::size_t i = 0; i < grads.size(); ++i)
      for (float g : grads.values(i))
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient in tensor '" + grads[i].name + "' at step " + std::to_string(step_));

    const double lr = current_lr();
    const float wd = static_cast<float>(cfg_.weight_decay);
    if (cfg_.kind == OptimizerKind::adam) {
      const double t = static_cast<double>(step_ + 1);
      const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
      const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
      const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params.mutable_values(i);
        const auto g = grads.values(i);
        auto& m = first_[i];
        auto& v = second_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
          const float gj = g[j] + wd * p[j];
          m[j] = b1 * m[j] + (1.0f - b1) * gj;
          v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
          const double mhat = m[j] / bc1;
          const double vhat = v[j] / bc2;
          p[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
      }
    } else {
      const float mu = static_cast<float>(cfg_.momentum);
      const float lrf = static_cast<float>(lr);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params.mutable_values(i);
        const auto g = grads.values(i);
        auto& vel = first_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
          vel[j] = mu * vel[j] + g[j] + wd * p[j];
          p[j] -= lrf * vel[j];
        }
      }
    }
    ++step_;
  }

 private:
  OptimizerConfig cfg_;
  long step_ = 0;
  std::vector<std::vector<float>> first_, second_;
};

inline void optimizer_step(OptimizerState& state, ParamStore& params, const ParamStore& grads) {
  state.step(params, grads);
}

/// Exponential moving average of a ParamStore.
struct EmaShadow {
  double decay = 0.99995;
  ParamStore shadow;
  long updates = 0;

  EmaShadow() = default;
  EmaShadow(double d, const ParamStore& params) : decay(d), shadow(params) {
    if (!(d >= 0.0 && d < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  }
};

/// shadow <- decay * shadow + (1 - decay) * params
inline void ema_update(EmaShadow& ema, const ParamStore& params, double decay) {
  ema.shadow.require_same_layout(params, "ema_update");
  const float d = static_cast<float>(decay);
  const float c = static_cast<float>(1.0 - decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto s = ema.shadow.mutable_values(i);
    const auto p = params.values(i);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = d * s[j] + c * p[j];
  }
  ++ema.updates;
}

inline void ema_update(EmaShadow& ema, const ParamStore& params) { ema_update(ema, params, ema.decay); }

/// EMA with the usual warm-up: the effective decay is min(decay, (1+n)/(10+n))
/// so that short runs are not dominated by the initial weights.
inline void ema_update_warm(EmaShadow& ema, const ParamStore& params) {
  const double n = static_cast<double>(ema.updates);
  ema_update(ema, params, std::min(ema.decay, (1.0 + n) / (10.0 + n)));
}

}  // namespace dbn::nn
