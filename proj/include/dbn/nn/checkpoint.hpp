#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dbn/error.hpp"
#include "dbn/nn/param_store.hpp"
#include "json.hpp"

namespace dbn::nn {

inline constexpr const char* kFormatVersion = "1";

// Checkpoint layout: <stem>.json manifest plus <stem>.bin holding the tensors
// as little-endian float32, concatenated in manifest order.

inline std::string params_to_bytes(const ParamStore& params) {
  std::string out;
  out.reserve(params.parameter_count() * 4);
  for (const auto& t : params.tensors()) {
    for (float v : t.values) {
      const auto u = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xffu));
    }
  }
  return out;
}

inline nlohmann::json tensor_manifest(const ParamStore& params) {
  auto arr = nlohmann::json::array();
  for (const auto& t : params.tensors()) arr.push_back({{"name", t.name}, {"shape", t.shape}});
  return arr;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

/// Writes `<stem>.json` and `<stem>.bin`. `manifest` carries the caller's
/// architecture description; tensor layout, seed and version are added here.
inline void save_checkpoint(const std::filesystem::path& stem, const ParamStore& params, nlohmann::json manifest) {
  auto bin = stem;
  bin.replace_extension(".bin");
  auto js = stem;
  js.replace_extension(".json");
  manifest["format_version"] = kFormatVersion;
  manifest["seed"] = params.seed();
  manifest["tensors"] = tensor_manifest(params);
  manifest["data_file"] = bin.filename().string();
  write_text_file(bin, params_to_bytes(params));
  write_text_file(js, manifest.dump(2) + "\n");
}

inline void require_version(const nlohmann::json& manifest, const std::string& where) {
  if (!manifest.contains("format_version") || manifest.at("format_version") != kFormatVersion)
    throw DataError("'" + where + "': unsupported format_version (expected \"" + std::string(kFormatVersion) + "\")");
}

struct LoadedCheckpoint {
  ParamStore params;
  nlohmann::json manifest;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& stem) {
  auto js = stem;
  js.replace_extension(".json");
  LoadedCheckpoint out;
  out.manifest = read_json_file(js);
  require_version(out.manifest, js.string());
  try {
    out.params = ParamStore(out.manifest.at("seed").get<std::uint64_t>());
    const auto bytes = read_text_file(js.parent_path() / out.manifest.at("data_file").get<std::string>());
    std::size_t pos = 0;
    for (const auto& t : out.manifest.at("tensors")) {
      const auto idx = out.params.add(t.at("name"), t.at("shape").get<std::vector<std::size_t>>());
      auto v = out.params.mutable_values(idx);
      if (pos + 4 * v.size() > bytes.size()) throw DataError("'" + js.string() + "': sidecar file is truncated");
      for (auto& x : v) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
        x = std::bit_cast<float>(u);
      }
    }
    if (pos != bytes.size()) throw DataError("'" + js.string() + "': sidecar file has trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + js.string() + "': " + e.what());
  }
  return out;
}

}  // namespace dbn::nn
