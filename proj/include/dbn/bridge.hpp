#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbn/data.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/error.hpp"
#include "dbn/logits.hpp"
#include "dbn/nn/optim.hpp"
#include "dbn/random.hpp"
#include "dbn/schedule.hpp"
#include "dbn/score_net.hpp"
#include "json.hpp"

namespace dbn {

/// A trained score network together with everything needed to sample from it.
struct BridgeModel {
  ScoreNetwork net;
  DiffusionSchedule schedule;
  std::vector<std::size_t> active;  // grid indices this net steps over, ascending, 0 .. N
  std::vector<std::size_t> teacher_indices;
  std::size_t source_index = 0;
  std::size_t feature_tap = 0;
  TemperatureLaw law;
  std::string weights = "ema";
  std::vector<std::vector<double>> lineage;  // time grid of every distillation round

  std::size_t n_steps() const { return active.size() - 1; }

  std::vector<double> active_times() const {
    std::vector<double> t;
    for (auto i : active) t.push_back(schedule.grid.at(i));
    return t;
  }

  bool operator==(const BridgeModel& o) const {
    return net == o.net && schedule == o.schedule && active == o.active && teacher_indices == o.teacher_indices &&
           source_index == o.source_index && feature_tap == o.feature_tap && law == o.law && weights == o.weights &&
           lineage == o.lineage;
  }
};

inline std::vector<std::size_t> full_grid(const DiffusionSchedule& s) {
  std::vector<std::size_t> v(s.grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

/// One reverse step Z_t -> Z_s on `net`: Zhat0 = Z_t - sigma_t * eps, then the
/// bridge posterior between Zhat0 and Z_t. A null rng takes the posterior mean.
inline LogitVector ancestral_step(const ScoreNetwork& net, const DiffusionSchedule& schedule,
                                  std::span<const float> h1, std::span<const float> zt, std::size_t s, std::size_t t,
                                  Rng* rng) {
  const auto eps = net.epsilon(h1, zt, schedule.grid.at(t));
  const float sig = static_cast<float>(schedule.sigma(t));
  LogitVector zhat0(zt.size());
  for (std::size_t k = 0; k < zt.size(); ++k) zhat0[k] = zt[k] - sig * eps[k];
  return posterior_between_at(zhat0, zt, s, t, schedule, rng);
}

/// Inputs, teacher target and source features for one training example.
struct BridgeExample {
  std::vector<float> h1;
  LogitVector z1;
  LogitVector z0;
};

inline BridgeExample make_bridge_example(const EnsembleBundle& bundle, std::span<const std::size_t> teachers,
                                         std::size_t tap, std::span<const float> x) {
  BridgeExample ex;
  auto [h, z] = bundle.source().tap_and_logits(x, tap);
  ex.h1 = std::move(h);
  ex.z1 = std::move(z);
  std::vector<std::vector<float>> probs;
  probs.reserve(teachers.size());
  for (auto i : teachers)
    probs.push_back(i == bundle.source_index ? softmax(ex.z1) : softmax(bundle.members.at(i).logits(x)));
  ex.z0 = ens_logit(probs);
  return ex;
}

/// Draws a training input; with mixup_alpha > 0 it is a Beta(alpha, alpha)
/// convex combination of two random rows.
inline std::vector<float> draw_input(const Dataset& data, double mixup_alpha, Rng& rng) {
  const auto i = sample_index(rng, data.size());
  const auto xi = data.row(i);
  std::vector<float> x(xi.begin(), xi.end());
  if (mixup_alpha > 0.0) {
    const auto xj = data.row(sample_index(rng, data.size()));
    const float lam = static_cast<float>(sample_beta(rng, mixup_alpha, mixup_alpha));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = lam * x[k] + (1.0f - lam) * xj[k];
  }
  return x;
}

struct LossTerm {
  double loss = 0.0;
  nn::ParamStore grads;
};

/// || eps(h1, Z_t, t) - (Z_t - Z0) / sigma_t ||^2 for one draw of Z_t.
inline LossTerm loss_term(const ScoreNetwork& net, std::span<const float> h1, std::span<const float> z0,
                          std::span<const float> z1, double t, const DiffusionSchedule& schedule, Rng& rng) {
  const auto idx = schedule.index_of(t);
  if (idx == 0 || schedule.sigma2[idx] <= 0.0)
    throw ContractViolation("loss_term: t must be strictly positive (sigma_t = 0 at t = 0)");
  const auto zt = posterior_sample_at(z0, z1, idx, schedule, &rng);
  const float sig = static_cast<float>(schedule.sigma(idx));
  ScoreTape<float> tape;
  const auto eps = net.forward(h1, zt, t, tape);
  LossTerm out;
  out.grads = net.params().zeros_like();
  std::vector<float> d(eps.size());
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const float r = eps[k] - (zt[k] - z0[k]) / sig;
    out.loss += static_cast<double>(r) * r;
    d[k] = 2.0f * r;
  }
  net.backward(tape, d, out.grads);
  return out;
}

struct BridgeTrainConfig {
  std::size_t steps = 20000;
  std::size_t batch = 128;
  double lr = 1e-3;
  double ema_decay = 0.99995;
  double mixup_alpha = 0.4;
  std::vector<std::size_t> teacher_indices{0, 1, 2};
  DiffusionSchedule schedule = build_schedule(5);
  TemperatureLaw law;
  std::uint64_t seed = 0;
  std::size_t feature_tap = 0;
  std::size_t embed_width = 8;
  std::size_t blocks = 2;
  double max_relative_params = 0.15;

  void validate(const EnsembleBundle& bundle) const {
    if (steps == 0 || batch == 0) throw ConfigError("bridge training: steps and batch must be positive");
    if (teacher_indices.size() < 2) throw ConfigError("bridge training: need at least two teacher indices");
    bool has_source = false;
    for (auto i : teacher_indices) {
      if (i >= bundle.size())
        throw ConfigError("bridge training: teacher index " + std::to_string(i) + " out of range");
      has_source |= i == bundle.source_index;
    }
    if (!has_source) throw ConfigError("bridge training: teacher indices must include the source member");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("bridge training: ema_decay must lie in [0, 1)");
    if (mixup_alpha < 0.0) throw ConfigError("bridge training: mixup_alpha must be >= 0");
  }
};

struct LogRow {
  std::size_t step;
  double loss;
  double lr;
};

inline std::string log_to_csv(const std::vector<LogRow>& rows) {
  std::string out = "step,loss,lr\n";
  for (const auto& r : rows) out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.lr) + "\n";
  return out;
}

namespace detail {

/// Adam + cosine + warm EMA over a per-example regression callback that
/// returns (loss, d_eps) after a taped forward.
template <class ExampleFn>
ScoreNetwork fit_score_net(ScoreNetwork net, std::size_t steps, std::size_t batch, double lr, double ema_decay,
                           std::vector<LogRow>* log, const char* what, ExampleFn&& example) {
  nn::OptimizerConfig oc;
  oc.kind = nn::OptimizerKind::adam;
  oc.base_lr = lr;
  oc.total_steps = static_cast<long>(steps);
  nn::OptimizerState opt(oc, net.params());
  nn::EmaShadow ema(ema_decay, net.params());
  nn::ParamStore grads = net.params().zeros_like();
  ScoreTape<float> tape;
  const float inv_b = 1.0f / static_cast<float>(batch);
  std::vector<float> d;
  for (std::size_t step = 0; step < steps; ++step) {
    const double cur_lr = opt.current_lr();
    grads.set_zero();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      loss += example(net, tape, d);
      for (auto& v : d) v *= inv_b;
      net.backward(tape, d, grads);
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss))
      throw NumericError(std::string(what) + ": non-finite loss at step " + std::to_string(step));
    opt.step(net.mutable_params(), grads);
    nn::ema_update_warm(ema, net.params());
    if (log) log->push_back({step, loss, cur_lr});
  }
  return ScoreNetwork::assemble(net.config(), net.arch(), ema.shadow);
}

}  // namespace detail

/// Parameter-budget guard: the bridge must stay small next to one teacher.
inline void require_lightweight(const ScoreNetwork& net, const ClassifierModel& teacher, double max_ratio) {
  const double ratio =
      static_cast<double>(net.parameter_count()) / static_cast<double>(teacher.params().parameter_count());
  if (ratio >= max_ratio)
    throw ConfigError("score network has " + std::to_string(net.parameter_count()) + " parameters, " +
                      std::to_string(ratio * 100.0) + "% of one teacher (limit " + std::to_string(max_ratio * 100.0) +
                      "%)");
}

/// Trains eps_phi by the score-matching regression over random data, random
/// annealing temperature and random positive grid time; returns EMA weights.
inline BridgeModel train_bridge(const EnsembleBundle& bundle, const Dataset& data, const BridgeTrainConfig& cfg,
                                std::vector<LogRow>* log = nullptr) {
  if (data.empty()) throw ConfigError("bridge training: empty dataset");
  bundle.validate();
  cfg.validate(bundle);
  const auto& src = bundle.source();
  src.check_tap(cfg.feature_tap);

  ScoreNetConfig sc;
  sc.feature_dim = src.tap_width(cfg.feature_tap);
  sc.class_count = src.class_count();
  sc.embed_width = cfg.embed_width;
  sc.blocks = cfg.blocks;
  auto net = ScoreNetwork::create(sc, splitmix64(cfg.seed ^ 0xb1d9e));
  require_lightweight(net, src, cfg.max_relative_params);

  Rng rng = make_rng(cfg.seed, 7);
  const auto& sched = cfg.schedule;
  const std::size_t n = sched.steps();
  auto example = [&](const ScoreNetwork& cur, ScoreTape<float>& tape, std::vector<float>& d) {
    const auto x = draw_input(data, cfg.mixup_alpha, rng);
    const auto ex = make_bridge_example(bundle, cfg.teacher_indices, cfg.feature_tap, x);
    const auto z1 = anneal_source(ex.z1, cfg.law, rng).z;
    const std::size_t ti = 1 + sample_index(rng, n);
    const auto zt = posterior_sample_at(ex.z0, z1, ti, sched, &rng);
    const float sig = static_cast<float>(sched.sigma(ti));
    const auto eps = cur.forward(ex.h1, zt, sched.grid[ti], tape);
    d.resize(eps.size());
    double loss = 0.0;
    for (std::size_t k = 0; k < eps.size(); ++k) {
      const float r = eps[k] - (zt[k] - ex.z0[k]) / sig;
      loss += static_cast<double>(r) * r;
      d[k] = 2.0f * r;
    }
    return loss;
  };
  BridgeModel out;
  out.net = detail::fit_score_net(std::move(net), cfg.steps, cfg.batch, cfg.lr, cfg.ema_decay, log,
                                  "bridge training", example);
  out.schedule = sched;
  out.active = full_grid(sched);
  out.teacher_indices = cfg.teacher_indices;
  out.source_index = bundle.source_index;
  out.feature_tap = cfg.feature_tap;
  out.law = cfg.law;
  out.weights = "ema";
  out.lineage = {out.active_times()};
  return out;
}

}  // namespace dbn
