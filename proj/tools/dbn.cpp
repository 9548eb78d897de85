// dbn: command-line front end for ensembles, bridges, distillation and evaluation.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dbn/dbn.hpp"

using namespace dbn;
namespace fs = std::filesystem;

namespace {

// Effective option values of a subcommand, for the run manifest.
std::map<std::string, std::string> effective_config(const CLI::App& app) {
  std::map<std::string, std::string> out;
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "out") continue;  // destination is not config
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    out[name] = v;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

// Splices `--config FILE` entries into the argument list as ordinary flags,
// skipping any key also given on the command line.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands({}))
    if (s->get_name() == args[1]) sub = s;
  if (sub == nullptr) return args;
  std::optional<std::string> file;
  std::vector<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const auto key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    if (key == "config") {
      if (eq != std::string::npos) file = a.substr(eq + 1);
      else if (i + 1 < args.size()) file = args[i + 1];
    }
    given.push_back(key);
  }
  if (!file) return args;
  std::ifstream in(*file);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + *file);
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--config", *file + ":" + std::to_string(no) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw CLI::ValidationError("--config", *file + ":" + std::to_string(no) + ": unknown key '" + key + "'");
    }
    if (key == "config" || std::find(given.begin(), given.end(), key) != given.end()) continue;
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1") out.push_back("--" + key);
      else if (value != "false" && value != "0")
        throw CLI::ValidationError("--config", key + " is a flag; use true or false");
    } else {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

// Manifest sits next to a file output or inside a directory output.
fs::path manifest_path(const fs::path& out, bool is_dir) {
  return is_dir ? out / "manifest.json" : fs::path(out.string() + ".manifest.json");
}

nlohmann::json write_manifest(const CLI::App& app, std::uint64_t seed, const fs::path& out, bool is_dir) {
  const auto m = io::run_manifest(app.get_name(), effective_config(app), seed);
  if (is_dir) fs::create_directories(out);
  else if (out.has_parent_path()) fs::create_directories(out.parent_path());
  nn::write_text_file(manifest_path(out, is_dir), m.dump(2) + "\n");
  return m;
}

std::vector<std::pair<std::size_t, double>> de_curve(const EnsembleBundle& b, const Dataset& data) {
  std::vector<std::pair<std::size_t, double>> curve;
  for (std::size_t k = 1; k <= b.size(); ++k) {
    const auto idx = first_k(k);
    metrics::Predictions p;
    for (std::size_t i = 0; i < data.size(); ++i) p.push_back(ensemble_probs(b, idx, data.row(i)));
    curve.emplace_back(k, metrics::nll(p, data.labels));
  }
  return curve;
}

bool strictly_decreasing(const std::vector<std::pair<std::size_t, double>>& c) {
  for (std::size_t i = 1; i < c.size(); ++i)
    if (!(c[i].second < c[i - 1].second)) return false;
  return true;
}

// --- dataset -----------------------------------------------------------------

struct DatasetOpts {
  std::string gen = "two-moons";
  std::size_t n = 2000, classes = 3, dim = 2;
  double noise = 0.2, stddev = 0.5, spread = 4.0;
  std::uint64_t seed = 0;
  std::string out;
};

void add_dataset(CLI::App& root, DatasetOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("dataset", "Generate a synthetic dataset as CSV");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--gen", o.gen, "Generator")->check(CLI::IsMember({"two-moons", "blobs", "rings"}))->capture_default_str();
  c->add_option("--n", o.n, "Rows")->capture_default_str()->check(CLI::PositiveNumber);
  c->add_option("--noise", o.noise, "Noise (two-moons, rings)")->capture_default_str();
  c->add_option("--classes", o.classes, "Classes (blobs, rings)")->capture_default_str();
  c->add_option("--dim", o.dim, "Feature dimension (blobs)")->capture_default_str();
  c->add_option("--std", o.stddev, "Cluster std (blobs)")->capture_default_str();
  c->add_option("--spread", o.spread, "Centre spread (blobs)")->capture_default_str();
  c->add_option("--seed", o.seed, "Seed")->capture_default_str();
  c->add_option("--out", o.out, "Output CSV")->required();
  c->callback([&, c] {
    run = [&, c] {
      Dataset d;
      if (o.gen == "two-moons") d = make_two_moons(o.n, o.noise, o.seed);
      else if (o.gen == "blobs") d = make_blobs(o.n, o.classes, o.dim, o.stddev, o.spread, o.seed);
      else d = make_rings(o.n, o.classes, o.noise, o.seed);
      write_manifest(*c, o.seed, o.out, false);
      write_csv(o.out, d);
      std::printf("wrote %zu rows to %s\n", d.size(), o.out.c_str());
    };
  });
}

// --- train-ensemble ----------------------------------------------------------

struct EnsembleOpts {
  std::string data, out, activation = "swish";
  std::size_t members = 5;
  std::vector<std::size_t> hidden{64, 64, 64};
  TeacherTrainConfig t;
  std::uint64_t seed = 0;
};

void add_train_ensemble(CLI::App& root, EnsembleOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("train-ensemble", "Train a deep ensemble of MLP classifiers");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--data", o.data, "Training CSV")->required();
  c->add_option("--members", o.members, "Ensemble size M")->capture_default_str();
  c->add_option("--hidden", o.hidden, "Hidden widths")->delimiter(',')->capture_default_str();
  c->add_option("--activation", o.activation)->check(CLI::IsMember({"relu", "relu6", "swish"}))->capture_default_str();
  c->add_option("--epochs", o.t.epochs)->capture_default_str();
  c->add_option("--batch", o.t.batch)->capture_default_str();
  c->add_option("--lr", o.t.lr)->capture_default_str();
  c->add_option("--momentum", o.t.momentum)->capture_default_str();
  c->add_option("--weight-decay", o.t.weight_decay)->capture_default_str();
  c->add_option("--threads", o.t.threads)->capture_default_str();
  c->add_option("--seed", o.seed, "Member i uses seed*1000 + 11 + i")->capture_default_str();
  c->add_option("--out", o.out, "Output ensemble directory")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto data = read_csv(o.data);
      ClassifierArch arch;
      arch.input_dim = data.dim;
      arch.class_count = data.class_count();
      arch.hidden = o.hidden;
      arch.activation = nn::activation_from_string(o.activation);
      BenchmarkConfig seeds;
      seeds.seed = o.seed;
      seeds.members = o.members;
      const auto m = write_manifest(*c, o.seed, o.out, true);
      const auto b = train_teachers(data, arch, o.members, seeds.member_seeds(), o.t);
      io::save_bundle(o.out, b, m);
      for (std::size_t i = 0; i < b.size(); ++i) std::printf("member %zu train acc %.4f\n", i, b.train_accuracy[i]);
    };
  });
}

// --- train-bridge ------------------------------------------------------------

struct BridgeOpts {
  std::string ensemble, data, out;
  std::vector<std::size_t> teachers{0, 1, 2};
  std::size_t sde_steps = 5;
  double beta_max = 0.3;
  BridgeTrainConfig b;
};

void add_train_bridge(CLI::App& root, BridgeOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("train-bridge", "Train a score network bridging the source to a sub-ensemble");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--ensemble", o.ensemble, "Ensemble directory")->required();
  c->add_option("--data", o.data, "Training CSV")->required();
  c->add_option("--teachers", o.teachers, "Member indices, source first")->delimiter(',')->capture_default_str();
  c->add_option("--steps", o.b.steps)->capture_default_str();
  c->add_option("--batch", o.b.batch)->capture_default_str();
  c->add_option("--lr", o.b.lr)->capture_default_str();
  c->add_option("--ema-decay", o.b.ema_decay)->capture_default_str();
  c->add_option("--mixup", o.b.mixup_alpha, "Beta(a,a) mixup, 0 disables")->capture_default_str();
  c->add_option("--sde-steps", o.sde_steps, "Diffusion steps N")->capture_default_str();
  c->add_option("--beta-max", o.beta_max)->capture_default_str();
  c->add_option("--feature-tap", o.b.feature_tap, "Hidden layer feeding h1")->capture_default_str();
  c->add_option("--max-relative-params", o.b.max_relative_params, "Score-net size limit as a fraction of one teacher")
      ->capture_default_str();
  c->add_option("--seed", o.b.seed)->capture_default_str();
  c->add_option("--out", o.out, "Output bridge directory")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto bundle = io::load_bundle(o.ensemble);
      const auto data = read_csv(o.data);
      auto cfg = o.b;
      cfg.teacher_indices = o.teachers;
      cfg.schedule = build_schedule(o.sde_steps, ScheduleShape::symmetric_triangular, o.beta_max);
      const auto m = write_manifest(*c, cfg.seed, o.out, true);
      std::vector<LogRow> log;
      const auto bridge = train_bridge(bundle, data, cfg, &log);
      io::save_bridge(o.out, bridge, m);
      nn::write_text_file(fs::path(o.out) / "train_log.csv", log_to_csv(log));
      std::printf("bridge trained, final loss %.6f\n", log.back().loss);
    };
  });
}

// --- distill -----------------------------------------------------------------

struct DistillOpts {
  std::string bridge, ensemble, data, out;
  DistillConfig d;
};

void add_distill(CLI::App& root, DistillOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("distill", "Halve the bridge's step count round by round down to one step");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--bridge", o.bridge, "Multi-step bridge directory")->required();
  c->add_option("--ensemble", o.ensemble, "Ensemble directory")->required();
  c->add_option("--data", o.data, "Training CSV")->required();
  c->add_option("--steps", o.d.steps, "Steps per round")->capture_default_str();
  c->add_option("--batch", o.d.batch)->capture_default_str();
  c->add_option("--lr", o.d.lr)->capture_default_str();
  c->add_option("--ema-decay", o.d.ema_decay)->capture_default_str();
  c->add_option("--mixup", o.d.mixup_alpha)->capture_default_str();
  c->add_flag("--rollout-noise", o.d.rollout_noise, "Sample teacher rollouts instead of using posterior means");
  c->add_option("--seed", o.d.seed)->capture_default_str();
  c->add_option("--out", o.out, "Output directory (round_<r>/ plus final/)")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto teacher = io::load_bridge(o.bridge);
      const auto bundle = io::load_bundle(o.ensemble);
      const auto data = read_csv(o.data);
      const auto m = write_manifest(*c, o.d.seed, o.out, true);
      const auto res = distill_to_one(teacher, bundle, data, o.d, [&](std::size_t r, const BridgeModel& b) {
        io::save_bridge(fs::path(o.out) / ("round_" + std::to_string(r)), b, m);
        std::printf("round %zu: %zu steps\n", r, b.n_steps());
      });
      io::save_bridge(fs::path(o.out) / "final", res.final_model(), m);
    };
  });
}

// --- assemble ----------------------------------------------------------------

struct AssembleOpts {
  std::string ensemble, mode = "one-step", out;
  std::vector<std::string> bridges;
};

void add_assemble(CLI::App& root, AssembleOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("assemble", "Bundle the source model and bridges into a predictor");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--ensemble", o.ensemble, "Ensemble directory (source member)")->required();
  c->add_option("--bridges", o.bridges, "Bridge directories")->delimiter(',')->required();
  c->add_option("--mode", o.mode)->check(CLI::IsMember({"one-step", "ancestral"}))->capture_default_str();
  c->add_option("--out", o.out, "Output predictor directory")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto bundle = io::load_bundle(o.ensemble);
      DbnPredictor p;
      p.source = bundle.source();
      for (const auto& b : o.bridges) p.bridges.push_back(io::load_bridge(b));
      p.mode = o.mode == "one-step" ? InferenceMode::one_step : InferenceMode::ancestral;
      p.validate();
      const auto m = write_manifest(*c, 0, o.out, true);
      io::save_predictor(o.out, p, m);
      std::printf("predictor with %zu bridge(s) written to %s\n", p.bridges.size(), o.out.c_str());
    };
  });
}

// --- infer / eval ------------------------------------------------------------

struct PredictOpts {
  std::string predictor, ensemble, data, out, curve_from;
  std::size_t k = 0, steps = 0;
  bool fixed_temp = false, stochastic = false;
  std::uint64_t seed = 0;
};

void add_predict_flags(CLI::App* c, PredictOpts& o) {
  c->add_flag("--fixed-temp", o.fixed_temp, "Pin the annealing temperature to its mean");
  c->add_flag("--stochastic", o.stochastic, "Sample bridge noise instead of taking posterior means");
  c->add_option("--steps", o.steps, "Ancestral steps (0 = every grid step)")->capture_default_str();
  c->add_option("--seed", o.seed)->capture_default_str();
}

DbnPredictor load_for_inference(const PredictOpts& o) {
  auto p = io::load_predictor(o.predictor);
  p.stochastic = o.stochastic;
  if (o.fixed_temp) p.fix_temperature_to_mean();
  return p;
}

std::vector<double> run_predictor(const DbnPredictor& p, std::span<const float> x, std::size_t steps, Rng& rng) {
  if (steps > 0 && p.mode == InferenceMode::ancestral) return infer_ancestral(p, x, steps, rng);
  return predict(p, x, rng);
}

void add_infer(CLI::App& root, PredictOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("infer", "Write class probabilities for every row of a CSV");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--predictor", o.predictor, "Predictor directory")->required();
  c->add_option("--data", o.data, "Input CSV (label column optional)")->required();
  add_predict_flags(c, o);
  c->add_option("--out", o.out, "Output probabilities CSV")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto p = load_for_inference(o);
      const auto data = read_csv(o.data, false);
      if (data.dim != p.source.arch().input_dim)
        throw DataError("input has " + std::to_string(data.dim) + " features, predictor expects " +
                        std::to_string(p.source.arch().input_dim));
      write_manifest(*c, o.seed, o.out, false);
      Rng rng = make_rng(o.seed, 1);
      std::string csv;
      for (std::size_t k = 0; k < p.source.class_count(); ++k) csv += (k ? ",p" : "p") + std::to_string(k);
      csv += "\n";
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto probs = run_predictor(p, data.row(i), o.steps, rng);
        for (std::size_t k = 0; k < probs.size(); ++k) csv += (k ? "," : "") + format_double(probs[k]);
        csv += "\n";
      }
      nn::write_text_file(o.out, csv);
      std::printf("wrote %zu rows to %s\n", data.size(), o.out.c_str());
    };
  });
}

void add_eval(CLI::App& root, PredictOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("eval", "Metrics report (JSON) for a predictor or a DE-k ensemble");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  auto* pred = c->add_option("--predictor", o.predictor, "Predictor directory");
  auto* ens = c->add_option("--ensemble", o.ensemble, "Ensemble directory, evaluated as DE-k");
  pred->excludes(ens);
  c->add_option("--k", o.k, "Members averaged with --ensemble (0 = all)")->capture_default_str();
  c->add_option("--data", o.data, "Labelled test CSV")->required();
  c->add_option("--de-curve", o.curve_from, "Ensemble directory whose DE-k curve gives DEE");
  add_predict_flags(c, o);
  c->add_option("--out", o.out, "Output report JSON (stdout if omitted)");
  c->callback([&, c, pred, ens] {
    if (pred->count() + ens->count() != 1) throw CLI::ValidationError("eval", "give exactly one of --predictor, --ensemble");
    run = [&, c] {
      const auto data = read_csv(o.data);
      metrics::Predictions probs;
      cost::LayerCost mc, baseline;
      if (!o.predictor.empty()) {
        const auto p = load_for_inference(o);
        Rng rng = make_rng(o.seed, 2);
        for (std::size_t i = 0; i < data.size(); ++i) probs.push_back(run_predictor(p, data.row(i), o.steps, rng));
        mc = model_cost(p);
        baseline = model_cost(p.source);
      } else {
        const auto b = io::load_bundle(o.ensemble);
        const std::size_t k = o.k == 0 ? b.size() : o.k;
        if (k > b.size()) throw ConfigError("--k exceeds the ensemble size");
        const auto idx = first_k(k);
        for (std::size_t i = 0; i < data.size(); ++i) probs.push_back(ensemble_probs(b, idx, data.row(i)));
        mc = ensemble_cost(b, k);
        baseline = model_cost(b.source());
      }
      std::optional<std::vector<std::pair<std::size_t, double>>> curve;
      if (!o.curve_from.empty()) {
        curve = de_curve(io::load_bundle(o.curve_from), data);
        if (!strictly_decreasing(*curve)) {
          std::fprintf(stderr, "warning: DE-k NLL curve is not strictly decreasing; DEE left undefined\n");
          curve.reset();
        }
      }
      const auto r = metrics::evaluate(probs, data.labels, curve ? &*curve : nullptr);
      auto j = r.to_json();
      j["params"] = mc.params;
      j["flops"] = mc.flops;
      j["relative_flops"] = cost::relative(mc, baseline);
      j["relative_params"] = cost::relative_params(mc, baseline);
      if (!o.out.empty()) {
        const auto m = write_manifest(*c, o.seed, o.out, false);
        j["manifest_hash"] = io::manifest_hash(m);
        nn::write_text_file(o.out, j.dump(2) + "\n");
      } else {
        j["manifest_hash"] = io::manifest_hash(io::run_manifest(c->get_name(), effective_config(*c), o.seed));
      }
      std::cout << j.dump(2) << "\n";
    };
  });
}

// --- cost --------------------------------------------------------------------

struct CostOpts {
  std::string ensemble, out;
  std::vector<std::string> predictors;
  std::uint64_t flops_per_mac = cost::kFlopsPerMac;
};

void add_cost(CLI::App& root, CostOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("cost", "Parameter and FLOPs table relative to one source pass (CSV)");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  c->add_option("--ensemble", o.ensemble, "Ensemble directory")->required();
  c->add_option("--predictor", o.predictors, "Predictor directories")->delimiter(',');
  c->add_option("--flops-per-mac", o.flops_per_mac, "FLOPs per multiply-add")->capture_default_str();
  c->add_option("--out", o.out, "Output CSV (stdout only if omitted)");
  c->callback([&, c] {
    run = [&, c] {
      const auto b = io::load_bundle(o.ensemble);
      const auto base = model_cost(b.source(), o.flops_per_mac);
      std::vector<cost::CostRow> rows;
      auto add = [&](const std::string& name, const cost::LayerCost& lc) {
        rows.push_back({name, lc, cost::relative(lc, base), cost::relative_params(lc, base)});
      };
      for (std::size_t k = 1; k <= b.size(); ++k) add("DE-" + std::to_string(k), ensemble_cost(b, k, o.flops_per_mac));
      for (const auto& d : o.predictors) add(fs::path(d).filename().string(), model_cost(io::load_predictor(d), o.flops_per_mac));
      const auto csv = cost::to_csv(rows);
      if (!o.out.empty()) {
        write_manifest(*c, 0, o.out, false);
        nn::write_text_file(o.out, csv);
      }
      std::cout << csv;
    };
  });
}

// --- pipeline ----------------------------------------------------------------

struct PipelineOpts {
  BenchmarkConfig b;
  std::string out;
};

void add_pipeline(CLI::App& root, PipelineOpts& o, std::function<void()>& run) {
  auto* c = root.add_subcommand("pipeline", "Two-moons benchmark: dataset, DE-M, bridges, distillation, evaluation");
  c->add_option("--config", "key=value file; flags on the command line take precedence");
  auto& b = o.b;
  c->add_option("--seed", b.seed)->capture_default_str();
  c->add_option("--n-train", b.n_train)->capture_default_str();
  c->add_option("--n-test", b.n_test)->capture_default_str();
  c->add_option("--noise", b.noise)->capture_default_str();
  c->add_option("--members", b.members, "M = L*per_bridge + 1")->capture_default_str();
  c->add_option("--per-bridge", b.per_bridge, "Non-source members per bridge")->capture_default_str();
  c->add_option("--hidden", b.arch.hidden)->delimiter(',')->capture_default_str();
  c->add_option("--teacher-epochs", b.teacher.epochs)->capture_default_str();
  c->add_option("--teacher-batch", b.teacher.batch)->capture_default_str();
  c->add_option("--teacher-lr", b.teacher.lr)->capture_default_str();
  c->add_option("--teacher-weight-decay", b.teacher.weight_decay)->capture_default_str();
  c->add_option("--bridge-steps", b.bridge_steps)->capture_default_str();
  c->add_option("--bridge-batch", b.bridge_batch)->capture_default_str();
  c->add_option("--distill-steps", b.distill_steps, "Steps per distillation round")->capture_default_str();
  c->add_option("--distill-batch", b.distill_batch)->capture_default_str();
  c->add_option("--sde-steps", b.sde_steps)->capture_default_str();
  c->add_option("--out", o.out, "Output directory")->required();
  c->callback([&, c] {
    run = [&, c] {
      const auto m = write_manifest(*c, o.b.seed, o.out, true);
      auto r = run_benchmark(o.b, o.out, [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); });
      r.report["manifest_hash"] = io::manifest_hash(m);
      nn::write_text_file(fs::path(o.out) / "report.json", r.report.dump(2) + "\n");
      std::printf("%-12s %10s %8s\n", "model", "NLL", "ACC");
      for (const auto& [k, v] : r.de_curve) std::printf("DE-%-9zu %10.5f\n", k, v);
      std::printf("%-12s %10.5f %8.4f\n", "DBN (1 br)", r.one_bridge.nll, r.one_bridge.acc);
      std::printf("%-12s %10.5f %8.4f\n", "DBN (2 br)", r.two_bridge.nll, r.two_bridge.acc);
      std::printf("relative FLOPs: DBN %.3f, DE-%zu %.3f; %.1f s\n", r.flops_one_bridge, o.b.per_bridge + 1,
                  r.flops_de_target, r.seconds);
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion bridge networks: compress a deep ensemble into one model plus a small score network"};
  app.require_subcommand(1);
  std::function<void()> run;
  DatasetOpts dataset;
  EnsembleOpts ensemble;
  BridgeOpts bridge;
  DistillOpts distill;
  AssembleOpts assemble;
  PredictOpts infer, eval;
  CostOpts cost_opts;
  PipelineOpts pipeline;
  add_dataset(app, dataset, run);
  add_train_ensemble(app, ensemble, run);
  add_train_bridge(app, bridge, run);
  add_distill(app, distill, run);
  add_assemble(app, assemble, run);
  add_infer(app, infer, run);
  add_eval(app, eval, run);
  add_cost(app, cost_opts, run);
  add_pipeline(app, pipeline, run);

  try {
    auto args = expand_config(app, std::vector<std::string>(argv, argv + argc));
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    run();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: malformed file: %s\n", e.what());
    return 3;
  }
  return 0;
}
