#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "dbn/bridge.hpp"

namespace dbn {

struct DistillConfig {
  std::size_t steps = 20000;  // per round
  std::size_t batch = 128;
  double lr = 1e-3;
  double ema_decay = 0.99995;
  double mixup_alpha = 0.4;
  std::uint64_t seed = 0;
  bool rollout_noise = false;
};

/// Coarsens an active grid: keeps every second point counting up from t = 0
/// plus t = 1, so an odd leftover interval sits next to t = 1.
/// {0,1,2,3,4,5} -> {0,2,4,5} -> {0,4,5} -> {0,5}.
inline std::vector<std::size_t> halve_grid(const std::vector<std::size_t>& active) {
  if (active.size() < 3) return active;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < active.size(); i += 2) out.push_back(active[i]);
  if (out.back() != active.back()) out.push_back(active.back());
  return out;
}

/// Grids visited by repeated halving down to a single step.
inline std::vector<std::vector<std::size_t>> halving_sequence(const std::vector<std::size_t>& active) {
  std::vector<std::vector<std::size_t>> seq;
  auto cur = active;
  while (cur.size() > 2) {
    cur = halve_grid(cur);
    seq.push_back(cur);
  }
  return seq;
}

namespace detail {
inline void require_nested(const std::vector<std::size_t>& grid, const std::vector<std::size_t>& sub) {
  if (sub.size() < 2 || grid.size() < 2) throw ConfigError("distillation grids need at least two points");
  if (sub.front() != grid.front() || sub.back() != grid.back())
    throw ConfigError("distillation sub-grid must contain both endpoints of the parent grid");
  if (!std::is_sorted(sub.begin(), sub.end()) || std::adjacent_find(sub.begin(), sub.end()) != sub.end())
    throw ConfigError("distillation sub-grid must be strictly increasing");
  for (auto i : sub)
    if (!std::binary_search(grid.begin(), grid.end(), i))
      throw ConfigError("distillation sub-grid point " + std::to_string(i) + " is not on the parent grid");
}
}  // namespace detail

/// Runs the teacher's own reverse steps from grid index `from` down to `to`,
/// visiting every point of `teacher.active` in between.
inline LogitVector teacher_rollout(const BridgeModel& teacher, std::span<const float> h1, std::span<const float> z,
                                   std::size_t from, std::size_t to, Rng* rng) {
  LogitVector cur(z.begin(), z.end());
  auto hi = std::find(teacher.active.begin(), teacher.active.end(), from);
  auto lo = std::find(teacher.active.begin(), teacher.active.end(), to);
  if (hi == teacher.active.end() || lo == teacher.active.end() || lo >= hi)
    throw ConfigError("teacher rollout endpoints are not on the teacher grid");
  for (auto it = hi; it != lo; --it) cur = ancestral_step(teacher.net, teacher.schedule, h1, cur, *(it - 1), *it, rng);
  return cur;
}

/// Regression target for a student step (s, t) that must land on `z_target`.
/// The student's own ancestral step computes Zhat0 = Z_t - sigma_t eps and then
/// the bridge mean a*Zhat0 + b*Z_t; this solves that for eps. For s = 0 it is
/// (Z_t - z_target) / sigma_t.
inline LogitVector student_target(const DiffusionSchedule& schedule, std::span<const float> zt,
                                  std::span<const float> z_target, std::size_t s, std::size_t t) {
  const double v0s = schedule.sigma2.at(s), v0t = schedule.sigma2.at(t);
  const double a = (v0t - v0s) / v0t, b = v0s / v0t;
  const double sig = schedule.sigma(t);
  LogitVector eps(zt.size());
  for (std::size_t k = 0; k < zt.size(); ++k) {
    const double zhat0 = (static_cast<double>(z_target[k]) - b * zt[k]) / a;
    eps[k] = static_cast<float>((static_cast<double>(zt[k]) - zhat0) / sig);
  }
  return eps;
}

/// One progressive-distillation round: the student (initialized from the
/// teacher's weights) learns to cover each `sub_grid` interval in one step.
inline BridgeModel distill_round(const BridgeModel& teacher, const std::vector<std::size_t>& sub_grid,
                                 const EnsembleBundle& bundle, const Dataset& data, const DistillConfig& cfg,
                                 std::vector<LogRow>* log = nullptr) {
  if (data.empty()) throw ConfigError("distillation: empty dataset");
  if (cfg.steps == 0 || cfg.batch == 0) throw ConfigError("distillation: steps and batch must be positive");
  detail::require_nested(teacher.active, sub_grid);
  const auto& sched = teacher.schedule;
  Rng rng = make_rng(cfg.seed, 11 + sub_grid.size());

  auto example = [&](const ScoreNetwork& cur, ScoreTape<float>& tape, std::vector<float>& d) {
    const auto x = draw_input(data, cfg.mixup_alpha, rng);
    const auto ex = make_bridge_example(bundle, teacher.teacher_indices, teacher.feature_tap, x);
    const auto z1 = anneal_source(ex.z1, teacher.law, rng).z;
    const std::size_t j = 1 + sample_index(rng, sub_grid.size() - 1);
    const std::size_t t = sub_grid[j], s = sub_grid[j - 1];
    const auto zt = posterior_sample_at(ex.z0, z1, t, sched, &rng);
    const auto zs = teacher_rollout(teacher, ex.h1, zt, t, s, cfg.rollout_noise ? &rng : nullptr);
    const auto target = student_target(sched, zt, zs, s, t);
    const auto eps = cur.forward(ex.h1, zt, sched.grid[t], tape);
    d.resize(eps.size());
    double loss = 0.0;
    for (std::size_t k = 0; k < eps.size(); ++k) {
      const float r = eps[k] - target[k];
      loss += static_cast<double>(r) * r;
      d[k] = 2.0f * r;
    }
    return loss;
  };

  BridgeModel student = teacher;
  student.net = detail::fit_score_net(teacher.net, cfg.steps, cfg.batch, cfg.lr, cfg.ema_decay, log, "distillation",
                                      example);
  student.active = sub_grid;
  student.weights = "ema";
  student.lineage.push_back(student.active_times());
  return student;
}

struct DistillResult {
  std::vector<BridgeModel> rounds;  // one per round, last is the one-step net
  const BridgeModel& final_model() const { return rounds.back(); }
};

/// Halves the step count round by round until one step remains.
/// `on_round` (optional) sees each finished student.
inline DistillResult distill_to_one(const BridgeModel& teacher, const EnsembleBundle& bundle, const Dataset& data,
                                    const DistillConfig& cfg,
                                    const std::function<void(std::size_t, const BridgeModel&)>& on_round = {}) {
  DistillResult out;
  if (teacher.n_steps() == 1) {
    out.rounds.push_back(teacher);
    return out;
  }
  std::size_t round = 0;
  for (const auto& sub : halving_sequence(teacher.active)) {
    DistillConfig rc = cfg;
    rc.seed = splitmix64(cfg.seed + round);
    const BridgeModel& parent = round == 0 ? teacher : out.rounds.back();
    auto student = distill_round(parent, sub, bundle, data, rc);
    out.rounds.push_back(std::move(student));
    if (on_round) on_round(round, out.rounds.back());
    ++round;
  }
  return out;
}

}  // namespace dbn
