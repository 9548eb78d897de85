#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbn/error.hpp"
#include "json.hpp"

namespace dbn::cost {

/// Multiply-adds count as two FLOPs unless configured otherwise.
inline constexpr std::uint64_t kFlopsPerMac = 2;

struct LayerCost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::string layer;

  LayerCost& operator+=(const LayerCost& o) {
    params += o.params;
    flops += o.flops;
    return *this;
  }
  friend LayerCost operator+(LayerCost a, const LayerCost& b) { return a += b; }
  LayerCost scaled(std::uint64_t n) const { return {params * n, flops * n, layer}; }
  bool operator==(const LayerCost& o) const { return params == o.params && flops == o.flops; }
};

/// d -> h dense layer: d*h weights plus h biases; flops count the MACs and the bias adds.
inline LayerCost dense_cost(std::uint64_t in, std::uint64_t out, bool bias = true,
                            std::uint64_t flops_per_mac = kFlopsPerMac) {
  return {in * out + (bias ? out : 0), flops_per_mac * in * out + (bias ? out : 0),
          "dense " + std::to_string(in) + "->" + std::to_string(out)};
}

enum class ConvKind { standard, depthwise_separable };

/// Stride 1, full padding, no bias. Depthwise-separable = h*w per-channel
/// filters followed by a 1x1 pointwise C_in -> C_out mix.
inline LayerCost conv_cost(std::uint64_t H, std::uint64_t W, std::uint64_t h, std::uint64_t w, std::uint64_t c_in,
                           std::uint64_t c_out, ConvKind kind, std::uint64_t flops_per_mac = kFlopsPerMac) {
  if (H == 0 || W == 0 || h == 0 || w == 0 || c_in == 0 || c_out == 0)
    throw ConfigError("conv_cost: all dimensions must be >= 1");
  if (kind == ConvKind::standard)
    return {h * w * c_in * c_out, flops_per_mac * H * h * W * w * c_in * c_out, "conv"};
  return {(h * w + c_out) * c_in, flops_per_mac * (h * w + c_out) * H * W * c_in, "dsconv"};
}

/// Closed-form depthwise-separable / standard ratio.
inline double separable_ratio(std::uint64_t h, std::uint64_t w, std::uint64_t c_out) {
  return 1.0 / static_cast<double>(c_out) + 1.0 / static_cast<double>(h * w);
}

/// Cost of a serialized LayerStack ({"name", "layers": [...]}).
/// Activations are free; LayerNorm contributes its 2n affine parameters.
inline LayerCost stack_cost(const nlohmann::json& stack, std::uint64_t flops_per_mac = kFlopsPerMac) {
  LayerCost total{0, 0, stack.value("name", std::string("stack"))};
  for (const auto& l : stack.at("layers")) {
    const auto type = l.at("type").get<std::string>();
    if (type == "dense") {
      total += dense_cost(l.at("in"), l.at("out"), !l.at("bias").is_null(), flops_per_mac);
    } else if (type == "layernorm") {
      total.params += 2 * l.at("width").get<std::uint64_t>();
    } else if (type == "relu" || type == "relu6" || type == "swish") {
      // no parameters, not counted
    } else {
      throw ConfigError("cost model: unknown layer type '" + type + "'");
    }
  }
  return total;
}

inline double relative(const LayerCost& c, const LayerCost& baseline) {
  if (baseline.flops == 0) throw ConfigError("relative cost: baseline has zero FLOPs");
  return static_cast<double>(c.flops) / static_cast<double>(baseline.flops);
}

inline double relative_params(const LayerCost& c, const LayerCost& baseline) {
  if (baseline.params == 0) throw ConfigError("relative cost: baseline has zero parameters");
  return static_cast<double>(c.params) / static_cast<double>(baseline.params);
}

struct CostRow {
  std::string name;
  LayerCost cost;
  double relative_flops = 1.0;
  double relative_params = 1.0;
};

inline std::string to_csv(const std::vector<CostRow>& rows) {
  std::string out = "name,params,flops,relative_flops,relative_params\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.relative_flops, r.relative_params);
    out += r.name + "," + std::to_string(r.cost.params) + "," + std::to_string(r.cost.flops) + "," + buf + "\n";
  }
  return out;
}

}  // namespace dbn::cost
