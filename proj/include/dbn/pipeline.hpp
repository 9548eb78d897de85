#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dbn/bridge.hpp"
#include "dbn/data.hpp"
#include "dbn/distill.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/inference.hpp"
#include "dbn/io.hpp"
#include "dbn/metrics.hpp"
#include "json.hpp"

namespace dbn {

/// End-to-end desk benchmark: dataset -> DE-M -> L bridges -> distill -> eval.
struct BenchmarkConfig {
  std::uint64_t seed = 0;
  std::size_t n_train = 2000;
  std::size_t n_test = 2000;
  double noise = 0.2;
  std::size_t members = 5;
  std::size_t per_bridge = 2;
  ClassifierArch arch;
  TeacherTrainConfig teacher;
  std::size_t bridge_steps = 20000;
  std::size_t bridge_batch = 64;
  std::size_t distill_steps = 6000;
  std::size_t distill_batch = 64;
  std::size_t sde_steps = 5;

  std::vector<std::uint64_t> member_seeds() const {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < members; ++i) s.push_back(seed * 1000 + 11 + i);
    return s;
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"n_train", n_train},
            {"n_test", n_test},
            {"noise", noise},
            {"members", members},
            {"per_bridge", per_bridge},
            {"arch", arch.to_json()},
            {"teacher_epochs", teacher.epochs},
            {"teacher_batch", teacher.batch},
            {"teacher_lr", teacher.lr},
            {"teacher_weight_decay", teacher.weight_decay},
            {"bridge_steps", bridge_steps},
            {"bridge_batch", bridge_batch},
            {"distill_steps", distill_steps},
            {"distill_batch", distill_batch},
            {"sde_steps", sde_steps}};
  }
};

struct RoundRecord {
  std::size_t bridge = 0;
  std::size_t n_steps = 0;
  double nll = 0.0;
};

struct BenchmarkResult {
  std::vector<std::pair<std::size_t, double>> de_curve;  // (k, NLL of DE-k)
  bool de_monotone = false;
  metrics::MetricsReport source;
  metrics::MetricsReport de_target;  // DE-(N+1), the one-bridge target
  metrics::MetricsReport one_bridge;
  metrics::MetricsReport two_bridge;
  metrics::MetricsReport multi_step;  // first bridge before distillation
  std::vector<RoundRecord> rounds;
  double kl_multi_vs_one = 0.0;  // mean KL(multi-step || one-step), first bridge
  double flops_one_bridge = 0.0;  // relative to one source pass
  double flops_de_target = 0.0;
  double seconds = 0.0;
  nlohmann::json report;
};

namespace detail {

inline metrics::Predictions predict_all(const DbnPredictor& p, const Dataset& data) {
  Rng rng = make_rng(0, 0);  // unused with a fixed temperature and deterministic steps
  metrics::Predictions out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(predict(p, data.row(i), rng));
  return out;
}

inline metrics::Predictions ensemble_all(const EnsembleBundle& b, std::size_t k, const Dataset& data) {
  const auto idx = first_k(k);
  metrics::Predictions out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(ensemble_probs(b, idx, data.row(i)));
  return out;
}

inline double mean_kl(const metrics::Predictions& p, const metrics::Predictions& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      const double a = std::max(p[i][k], kProbFloor), b = std::max(q[i][k], kProbFloor);
      s += a * std::log(a / b);
    }
  return s / static_cast<double>(p.size());
}

inline bool strictly_decreasing(const std::vector<std::pair<std::size_t, double>>& c) {
  for (std::size_t i = 1; i < c.size(); ++i)
    if (!(c[i].second < c[i - 1].second)) return false;
  return true;
}

inline metrics::MetricsReport score(const metrics::Predictions& p, const Dataset& d,
                                    const std::vector<std::pair<std::size_t, double>>& curve, bool with_dee) {
  return metrics::evaluate(p, d.labels, with_dee ? &curve : nullptr);
}

}  // namespace detail

/// Runs the whole benchmark, writing every checkpoint and the report under
/// `out_dir`. `progress` (optional) receives one line per stage.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const std::filesystem::path& out_dir,
                                     const std::function<void(const std::string&)>& progress = {}) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  fs::create_directories(out_dir);
  const auto plan = plan_bridges(cfg.members, cfg.per_bridge);

  const auto train = make_two_moons(cfg.n_train, cfg.noise, cfg.seed * 2 + 1);
  const auto test = make_two_moons(cfg.n_test, cfg.noise, cfg.seed * 2 + 2);
  write_csv(out_dir / "train.csv", train);
  write_csv(out_dir / "test.csv", test);

  const auto bundle = train_teachers(train, cfg.arch, cfg.members, cfg.member_seeds(), cfg.teacher);
  io::save_bundle(out_dir / "ensemble", bundle);
  say("teachers trained");

  BenchmarkResult r;
  std::vector<metrics::Predictions> de_preds;
  for (std::size_t k = 1; k <= cfg.members; ++k) {
    de_preds.push_back(detail::ensemble_all(bundle, k, test));
    r.de_curve.emplace_back(k, metrics::nll(de_preds.back(), test.labels));
  }
  r.de_monotone = detail::strictly_decreasing(r.de_curve);
  const bool dee_ok = r.de_monotone;
  r.source = detail::score(de_preds[0], test, r.de_curve, dee_ok);
  r.de_target = detail::score(de_preds[cfg.per_bridge], test, r.de_curve, dee_ok);

  std::vector<BridgeModel> distilled;
  for (std::size_t l = 0; l < plan.bridges.size(); ++l) {
    BridgeTrainConfig bc;
    bc.steps = cfg.bridge_steps;
    bc.batch = cfg.bridge_batch;
    bc.teacher_indices = plan.bridges[l];
    bc.schedule = build_schedule(cfg.sde_steps);
    bc.seed = splitmix64(cfg.seed + 100 + l);
    std::vector<LogRow> log;
    const auto bridge = train_bridge(bundle, train, bc, &log);
    const auto bdir = out_dir / ("bridge_" + std::to_string(l));
    io::save_bridge(bdir / "multi", bridge);
    nn::write_text_file(bdir / "train_log.csv", log_to_csv(log));
    say("bridge " + std::to_string(l) + " trained");

    DbnPredictor multi;
    multi.source = bundle.source();
    multi.bridges = {bridge};
    multi.mode = InferenceMode::ancestral;
    multi.fix_temperature_to_mean();
    const auto multi_preds = detail::predict_all(multi, test);
    if (l == 0) r.multi_step = detail::score(multi_preds, test, r.de_curve, dee_ok);
    r.rounds.push_back({l, bridge.n_steps(), metrics::nll(multi_preds, test.labels)});

    DistillConfig dc;
    dc.steps = cfg.distill_steps;
    dc.batch = cfg.distill_batch;
    dc.seed = splitmix64(cfg.seed + 200 + l);
    metrics::Predictions last;
    auto res = distill_to_one(bridge, bundle, train, dc, [&](std::size_t round, const BridgeModel& m) {
      DbnPredictor q = multi;
      q.bridges = {m};
      last = detail::predict_all(q, test);
      r.rounds.push_back({l, m.n_steps(), metrics::nll(last, test.labels)});
      io::save_bridge(bdir / ("round_" + std::to_string(round)), m);
    });
    if (l == 0) r.kl_multi_vs_one = detail::mean_kl(multi_preds, last);
    distilled.push_back(res.final_model());
    say("bridge " + std::to_string(l) + " distilled");
  }

  DbnPredictor one;
  one.source = bundle.source();
  one.bridges = {distilled.front()};
  one.mode = InferenceMode::one_step;
  one.fix_temperature_to_mean();
  DbnPredictor two = one;
  two.bridges = distilled;
  io::save_predictor(out_dir / "predictor_1", one);
  io::save_predictor(out_dir / "predictor_2", two);

  r.one_bridge = detail::score(detail::predict_all(one, test), test, r.de_curve, dee_ok);
  r.two_bridge = detail::score(detail::predict_all(two, test), test, r.de_curve, dee_ok);

  const double src_flops = static_cast<double>(model_cost(one.source).flops);
  r.flops_one_bridge = static_cast<double>(model_cost(one).flops) / src_flops;
  r.flops_de_target = static_cast<double>(ensemble_cost(bundle, cfg.per_bridge + 1).flops) / src_flops;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [k, v] : r.de_curve) curve.push_back({{"k", k}, {"nll", v}});
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& rr : r.rounds) rounds.push_back({{"bridge", rr.bridge}, {"n_steps", rr.n_steps}, {"nll", rr.nll}});
  r.report = {{"config", cfg.to_json()},
              {"de_curve", curve},
              {"de_curve_strictly_decreasing", r.de_monotone},
              {"source", r.source.to_json()},
              {"de_target", r.de_target.to_json()},
              {"multi_step", r.multi_step.to_json()},
              {"one_bridge", r.one_bridge.to_json()},
              {"two_bridge", r.two_bridge.to_json()},
              {"distill_rounds", rounds},
              {"kl_multi_vs_one", r.kl_multi_vs_one},
              {"relative_flops", {{"one_bridge", r.flops_one_bridge}, {"de_target", r.flops_de_target}}}};
  nn::write_text_file(out_dir / "report.json", r.report.dump(2) + "\n");
  return r;
}

}  // namespace dbn
