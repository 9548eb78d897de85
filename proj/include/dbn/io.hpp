#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dbn/bridge.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/error.hpp"
#include "dbn/inference.hpp"
#include "dbn/nn/checkpoint.hpp"
#include "json.hpp"

namespace dbn::io {

namespace fs = std::filesystem;

inline constexpr const char* kCodeVersion = "0.1.0";

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Run manifest: canonical config, its hash, seed and code version.
inline nlohmann::json run_manifest(const std::string& command, const std::map<std::string, std::string>& config,
                                   std::uint64_t seed) {
  nlohmann::json cfg(config);
  return {{"command", command},
          {"config", cfg},
          {"config_hash", hex64(fnv1a64(cfg.dump()))},
          {"seed", seed},
          {"code_version", kCodeVersion}};
}

inline std::string manifest_hash(const nlohmann::json& manifest) { return hex64(fnv1a64(manifest.dump())); }

// --- classifier -------------------------------------------------------------

inline void save_model(const fs::path& stem, const ClassifierModel& m) {
  nlohmann::json j = {{"kind", "classifier"},
                      {"architecture",
                       {{"arch", m.arch().to_json()}, {"feature", m.feature_net().to_json()}, {"head", m.head().to_json()}}}};
  nn::save_checkpoint(stem, m.params(), j);
}

inline ClassifierModel load_model(const fs::path& stem) {
  auto ck = nn::load_checkpoint(stem);
  try {
    const auto& a = ck.manifest.at("architecture");
    return ClassifierModel::assemble(ClassifierArch::from_json(a.at("arch")), nn::LayerStack::from_json(a.at("feature")),
                                     nn::LayerStack::from_json(a.at("head")), std::move(ck.params));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + stem.string() + "': bad classifier manifest: " + e.what());
  }
}

// --- ensemble bundle --------------------------------------------------------

inline void save_bundle(const fs::path& dir, const EnsembleBundle& b, const nlohmann::json& run = nullptr) {
  fs::create_directories(dir);
  nlohmann::json j = {{"format_version", nn::kFormatVersion}, {"kind", "ensemble"}, {"source_index", b.source_index},
                      {"train_accuracy", b.train_accuracy}};
  j["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < b.members.size(); ++i) {
    const std::string stem = "member_" + std::to_string(i);
    save_model(dir / (stem + ".json"), b.members[i]);
    j["members"].push_back(stem);
  }
  if (!run.is_null()) j["run"] = run;
  nn::write_text_file(dir / "ensemble.json", j.dump(2) + "\n");
}

inline EnsembleBundle load_bundle(const fs::path& dir) {
  const auto j = nn::read_json_file(dir / "ensemble.json");
  nn::require_version(j, (dir / "ensemble.json").string());
  EnsembleBundle b;
  try {
    for (const auto& stem : j.at("members")) b.members.push_back(load_model(dir / (stem.get<std::string>() + ".json")));
    b.source_index = j.at("source_index");
    b.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + dir.string() + "': bad ensemble manifest: " + e.what());
  }
  b.validate();
  return b;
}

// --- bridge -----------------------------------------------------------------

inline void save_bridge(const fs::path& dir, const BridgeModel& b, const nlohmann::json& run = nullptr) {
  fs::create_directories(dir);
  nlohmann::json j = {{"kind", "bridge"},
                      {"architecture", {{"config", b.net.config().to_json()}, {"layers", b.net.arch().to_json()}}},
                      {"schedule", b.schedule.to_json()},
                      {"active_grid", b.active},
                      {"n_steps", b.n_steps()},
                      {"teacher_indices", b.teacher_indices},
                      {"source_index", b.source_index},
                      {"feature_tap", b.feature_tap},
                      {"temperature_law", b.law.to_json()},
                      {"weights", b.weights},
                      {"lineage", b.lineage}};
  if (!run.is_null()) j["run"] = run;
  nn::save_checkpoint(dir / "bridge.json", b.net.params(), j);
}

inline BridgeModel load_bridge(const fs::path& dir) {
  auto ck = nn::load_checkpoint(dir / "bridge.json");
  const auto& j = ck.manifest;
  BridgeModel b;
  try {
    if (j.at("kind") != "bridge") throw DataError("'" + dir.string() + "' is not a bridge checkpoint");
    b.net = ScoreNetwork::assemble(ScoreNetConfig::from_json(j.at("architecture").at("config")),
                                   ScoreArch::from_json(j.at("architecture").at("layers")), std::move(ck.params));
    b.schedule = DiffusionSchedule::from_json(j.at("schedule"));
    b.active = j.at("active_grid").get<std::vector<std::size_t>>();
    b.teacher_indices = j.at("teacher_indices").get<std::vector<std::size_t>>();
    b.source_index = j.at("source_index");
    b.feature_tap = j.at("feature_tap");
    b.law = TemperatureLaw::from_json(j.at("temperature_law"));
    b.weights = j.at("weights");
    b.lineage = j.at("lineage").get<std::vector<std::vector<double>>>();
    if (j.at("n_steps").get<std::size_t>() != b.n_steps())
      throw DataError("'" + dir.string() + "': n_steps does not match the active grid");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + dir.string() + "': bad bridge manifest: " + e.what());
  }
  if (b.weights != "ema") throw DataError("'" + dir.string() + "': bridge weights are not EMA weights");
  return b;
}

// --- predictor --------------------------------------------------------------

inline void save_predictor(const fs::path& dir, const DbnPredictor& p, const nlohmann::json& run = nullptr) {
  fs::create_directories(dir);
  save_model(dir / "source.json", p.source);
  nlohmann::json j = {{"format_version", nn::kFormatVersion},
                      {"kind", "predictor"},
                      {"source", "source"},
                      {"mode", p.mode == InferenceMode::one_step ? "one-step" : "ancestral"}};
  j["bridges"] = nlohmann::json::array();
  for (std::size_t i = 0; i < p.bridges.size(); ++i) {
    const std::string name = "bridge_" + std::to_string(i);
    save_bridge(dir / name, p.bridges[i]);
    j["bridges"].push_back(name);
  }
  if (!run.is_null()) j["run"] = run;
  nn::write_text_file(dir / "predictor.json", j.dump(2) + "\n");
}

inline DbnPredictor load_predictor(const fs::path& dir) {
  const auto j = nn::read_json_file(dir / "predictor.json");
  nn::require_version(j, (dir / "predictor.json").string());
  DbnPredictor p;
  try {
    p.source = load_model(dir / (j.at("source").get<std::string>() + ".json"));
    for (const auto& name : j.at("bridges")) p.bridges.push_back(load_bridge(dir / name.get<std::string>()));
    p.mode = j.at("mode") == "one-step" ? InferenceMode::one_step : InferenceMode::ancestral;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + dir.string() + "': bad predictor manifest: " + e.what());
  }
  p.validate();
  return p;
}

}  // namespace dbn::io
