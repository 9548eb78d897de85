#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dbn/error.hpp"
#include "dbn/nn/param_store.hpp"
#include "dbn/random.hpp"
#include "json.hpp"

namespace dbn::nn {

enum class Activation { relu, relu6, swish };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::relu6: return "relu6";
    case Activation::swish: return "swish";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "relu6") return Activation::relu6;
  if (s == "swish") return Activation::swish;
  throw ConfigError("unknown activation '" + s + "'");
}

enum class Init { he_uniform, lecun_uniform, zeros };

inline constexpr std::size_t kNoTensor = std::numeric_limits<std::size_t>::max();

struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::size_t weight = kNoTensor;  // [out, in], row-major
  std::size_t bias = kNoTensor;    // [out] or kNoTensor
};

struct ActivationLayer {
  Activation kind = Activation::relu;
  std::size_t width = 0;
};

struct LayerNormLayer {
  std::size_t width = 0;
  std::size_t gain = kNoTensor, shift = kNoTensor;
  float eps = 1e-5f;
};

using Layer = std::variant<DenseLayer, ActivationLayer, LayerNormLayer>;

inline std::size_t layer_in(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>) return x.in;
        else return x.width;
      },
      l);
}

inline std::size_t layer_out(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>) return x.out;
        else return x.width;
      },
      l);
}

inline std::string describe(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, DenseLayer>)
          return "dense " + std::to_string(x.in) + "->" + std::to_string(x.out);
        else if constexpr (std::is_same_v<T, ActivationLayer>)
          return std::string(to_string(x.kind)) + " " + std::to_string(x.width);
        else
          return "layernorm " + std::to_string(x.width);
      },
      l);
}

/// Fills one tensor from a stream derived from the store seed and tensor index,
/// so the values do not depend on construction order of other tensors.
template <class Real>
void init_tensor(BasicParamStore<Real>& store, std::size_t index, Init init, std::size_t fan_in) {
  auto v = store.mutable_values(index);
  if (init == Init::zeros || fan_in == 0) {
    std::fill(v.begin(), v.end(), Real{0});
    return;
  }
  const double scale = init == Init::he_uniform ? 6.0 : 3.0;
  const float limit = static_cast<float>(std::sqrt(scale / static_cast<double>(fan_in)));
  Rng rng = make_rng(store.seed(), index);
  std::uniform_real_distribution<float> dist(-limit, limit);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
}

/// Activation record for one pass through a LayerStack.
template <class Real>
struct BasicTape {
  std::uint64_t stamp = 0;
  std::vector<std::vector<Real>> inputs;  // input to each layer
  std::vector<std::vector<Real>> normed;  // LayerNorm x-hat, empty otherwise
  std::vector<Real> inv_std;              // LayerNorm 1/sigma, 0 otherwise
  std::vector<Real> output;
};

using Tape = BasicTape<float>;

/// Ordered sequence of layers whose parameters live in an external store.
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }

  std::size_t input_width() const { return layers_.empty() ? 0 : layer_in(layers_.front()); }
  std::size_t output_width() const { return layers_.empty() ? 0 : layer_out(layers_.back()); }

  template <class Real>
  LayerStack& dense(BasicParamStore<Real>& store, std::size_t in, std::size_t out, Init init, bool bias = true) {
    check_chain(in);
    const auto tag = name_ + "." + std::to_string(layers_.size());
    DenseLayer d{in, out, store.add(tag + ".weight", {out, in}), kNoTensor};
    init_tensor(store, d.weight, init, in);
    if (bias) d.bias = store.add(tag + ".bias", {out});
    layers_.emplace_back(d);
    return *this;
  }

  LayerStack& activation(Activation kind, std::size_t width) {
    check_chain(width);
    layers_.emplace_back(ActivationLayer{kind, width});
    return *this;
  }

  template <class Real>
  LayerStack& layer_norm(BasicParamStore<Real>& store, std::size_t width) {
    check_chain(width);
    const auto tag = name_ + "." + std::to_string(layers_.size());
    LayerNormLayer ln{width, store.add(tag + ".gain", {width}), store.add(tag + ".shift", {width})};
    auto g = store.mutable_values(ln.gain);
    std::fill(g.begin(), g.end(), Real{1});
    layers_.emplace_back(ln);
    return *this;
  }

  nlohmann::json to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& l : layers_) {
      std::visit(
          [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
              nlohmann::json j = {{"type", "dense"}, {"in", x.in}, {"out", x.out}, {"weight", x.weight}};
              j["bias"] = x.bias == kNoTensor ? nlohmann::json(nullptr) : nlohmann::json(x.bias);
              arr.push_back(j);
            } else if constexpr (std::is_same_v<T, ActivationLayer>) {
              arr.push_back({{"type", to_string(x.kind)}, {"width", x.width}});
            } else {
              arr.push_back({{"type", "layernorm"}, {"width", x.width}, {"gain", x.gain},
                             {"shift", x.shift}, {"eps", x.eps}});
            }
          },
          l);
    }
    return {{"name", name_}, {"layers", arr}};
  }

  static LayerStack from_json(const nlohmann::json& j) {
    LayerStack s(j.at("name").get<std::string>());
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "dense") {
        DenseLayer d{l.at("in"), l.at("out"), l.at("weight"), kNoTensor};
        if (!l.at("bias").is_null()) d.bias = l.at("bias");
        s.layers_.emplace_back(d);
      } else if (type == "layernorm") {
        s.layers_.emplace_back(LayerNormLayer{l.at("width"), l.at("gain"), l.at("shift"), l.at("eps")});
      } else if (type == "relu" || type == "relu6" || type == "swish") {
        s.layers_.emplace_back(ActivationLayer{activation_from_string(type), l.at("width")});
      } else {
        throw DataError("unknown layer type '" + type + "' in stack '" + s.name_ + "'");
      }
    }
    return s;
  }

  bool operator==(const LayerStack& o) const { return to_json() == o.to_json(); }

 private:
  void check_chain(std::size_t in) const {
    if (!layers_.empty() && layer_out(layers_.back()) != in)
      throw ConfigError("stack '" + name_ + "': layer " + std::to_string(layers_.size()) + " expects width " +
                        std::to_string(in) + " but previous layer produces " +
                        std::to_string(layer_out(layers_.back())));
  }

  std::string name_;
  std::vector<Layer> layers_;
};

namespace detail {

template <class Real>
Real sigmoid(Real x) {
  return Real{1} / (Real{1} + std::exp(-x));
}

template <class Real>
void apply_activation(Activation kind, std::span<const Real> x, std::vector<Real>& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = x[i];
    switch (kind) {
      case Activation::relu: y[i] = v > Real{0} ? v : Real{0}; break;
      case Activation::relu6: y[i] = std::min(std::max(v, Real{0}), Real{6}); break;
      case Activation::swish: y[i] = v * sigmoid(v); break;
    }
  }
}

template <class Real>
Real activation_grad(Activation kind, Real v) {
  switch (kind) {
    case Activation::relu: return v > Real{0} ? Real{1} : Real{0};
    case Activation::relu6: return (v > Real{0} && v < Real{6}) ? Real{1} : Real{0};
    case Activation::swish: {
      const Real s = sigmoid(v);
      return s + v * s * (Real{1} - s);
    }
  }
  return Real{0};
}

template <class Real>
void dense_forward(const DenseLayer& d, const BasicParamStore<Real>& store, std::span<const Real> x,
                   std::vector<Real>& y) {
  const auto w = store.values(d.weight);
  y.resize(d.out);
  for (std::size_t o = 0; o < d.out; ++o) {
    const Real* row = w.data() + o * d.in;
    Real acc{0};
    for (std::size_t i = 0; i < d.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  if (d.bias != kNoTensor) {
    const auto b = store.values(d.bias);
    for (std::size_t o = 0; o < d.out; ++o) y[o] += b[o];
  }
}

template <class Real>
void layer_norm_forward(const LayerNormLayer& ln, const BasicParamStore<Real>& store, std::span<const Real> x,
                        std::vector<Real>& y, std::vector<Real>* normed, Real* inv_std_out) {
  const std::size_t n = ln.width;
  Real mean{0};
  for (auto v : x) mean += v;
  mean /= static_cast<Real>(n);
  Real var{0};
  for (auto v : x) var += (v - mean) * (v - mean);
  var /= static_cast<Real>(n);
  const Real inv = Real{1} / std::sqrt(var + static_cast<Real>(ln.eps));
  const auto g = store.values(ln.gain);
  const auto b = store.values(ln.shift);
  y.resize(n);
  if (normed) normed->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real xh = (x[i] - mean) * inv;
    if (normed) (*normed)[i] = xh;
    y[i] = g[i] * xh + b[i];
  }
  if (inv_std_out) *inv_std_out = inv;
}

}  // namespace detail

/// Runs `stack` on `x`. When `tape` is non-null, records what backward() needs.
/// `upto` limits evaluation to the first `upto` layers.
template <class Real>
std::vector<Real> forward(const LayerStack& stack, const BasicParamStore<Real>& store, std::span<const Real> x,
                          BasicTape<Real>* tape = nullptr, std::size_t upto = kNoTensor) {
  const auto& layers = stack.layers();
  const std::size_t n = std::min(upto, layers.size());
  if (n > 0 && x.size() != layer_in(layers[0]))
    throw ConfigError("stack '" + stack.name() + "' layer 0 (" + describe(layers[0]) + "): input length " +
                      std::to_string(x.size()) + " != fan-in " + std::to_string(layer_in(layers[0])));
  if (tape) {
    tape->stamp = store.stamp();
    tape->inputs.resize(n);
    tape->normed.resize(n);
    tape->inv_std.assign(n, Real{0});
  }
  std::vector<Real> cur(x.begin(), x.end());
  std::vector<Real> next;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = layers[l];
    if (cur.size() != layer_in(layer))
      throw ConfigError("stack '" + stack.name() + "' layer " + std::to_string(l) + " (" + describe(layer) +
                        "): got input length " + std::to_string(cur.size()));
    std::visit(
        [&](const auto& ly) {
          using T = std::decay_t<decltype(ly)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            detail::dense_forward(ly, store, std::span<const Real>(cur), next);
          } else if constexpr (std::is_same_v<T, ActivationLayer>) {
            detail::apply_activation(ly.kind, std::span<const Real>(cur), next);
          } else {
            detail::layer_norm_forward(ly, store, std::span<const Real>(cur), next,
                                       tape ? &tape->normed[l] : nullptr, tape ? &tape->inv_std[l] : nullptr);
          }
        },
        layer);
    if (tape) tape->inputs[l] = std::move(cur);
    cur.swap(next);
  }
  if (tape) tape->output = cur;
  return cur;
}

/// Untaped evaluation of layers [begin, end).
template <class Real>
std::vector<Real> forward_range(const LayerStack& stack, const BasicParamStore<Real>& store, std::span<const Real> x,
                                std::size_t begin, std::size_t end) {
  const auto& layers = stack.layers();
  end = std::min(end, layers.size());
  std::vector<Real> cur(x.begin(), x.end());
  std::vector<Real> next;
  for (std::size_t l = begin; l < end; ++l) {
    if (cur.size() != layer_in(layers[l]))
      throw ConfigError("stack '" + stack.name() + "' layer " + std::to_string(l) + " (" + describe(layers[l]) +
                        "): got input length " + std::to_string(cur.size()));
    std::visit(
        [&](const auto& ly) {
          using T = std::decay_t<decltype(ly)>;
          if constexpr (std::is_same_v<T, DenseLayer>)
            detail::dense_forward(ly, store, std::span<const Real>(cur), next);
          else if constexpr (std::is_same_v<T, ActivationLayer>)
            detail::apply_activation(ly.kind, std::span<const Real>(cur), next);
          else
            detail::layer_norm_forward(ly, store, std::span<const Real>(cur), next, static_cast<std::vector<Real>*>(nullptr),
                                       static_cast<Real*>(nullptr));
        },
        layers[l]);
    cur.swap(next);
  }
  return cur;
}

/// Back-propagates `dy` through the recorded pass, accumulating parameter
/// gradients into `grads` and returning the gradient w.r.t. the stack input.
template <class Real>
std::vector<Real> backward(const LayerStack& stack, const BasicParamStore<Real>& store, const BasicTape<Real>& tape,
                           std::span<const Real> dy, BasicParamStore<Real>& grads) {
  if (tape.stamp != store.stamp())
    throw InvalidTape("stack '" + stack.name() + "': tape was recorded against different or since-modified parameters");
  const auto& layers = stack.layers();
  const std::size_t n = tape.inputs.size();
  std::vector<Real> g(dy.begin(), dy.end());
  std::vector<Real> gin;
  for (std::size_t l = n; l-- > 0;) {
    const auto& x = tape.inputs[l];
    std::visit(
        [&](const auto& ly) {
          using T = std::decay_t<decltype(ly)>;
          if constexpr (std::is_same_v<T, DenseLayer>) {
            const auto w = store.values(ly.weight);
            auto gw = grads.mutable_values(ly.weight);
            gin.assign(ly.in, Real{0});
            for (std::size_t o = 0; o < ly.out; ++o) {
              const Real go = g[o];
              Real* gw_row = gw.data() + o * ly.in;
              const Real* w_row = w.data() + o * ly.in;
              for (std::size_t i = 0; i < ly.in; ++i) {
                gw_row[i] += go * x[i];
                gin[i] += w_row[i] * go;
              }
            }
            if (ly.bias != kNoTensor) {
              auto gb = grads.mutable_values(ly.bias);
              for (std::size_t o = 0; o < ly.out; ++o) gb[o] += g[o];
            }
          } else if constexpr (std::is_same_v<T, ActivationLayer>) {
            gin.resize(ly.width);
            for (std::size_t i = 0; i < ly.width; ++i) gin[i] = g[i] * detail::activation_grad(ly.kind, x[i]);
          } else {
            const auto& xh = tape.normed[l];
            const Real inv = tape.inv_std[l];
            const auto gain = store.values(ly.gain);
            auto gg = grads.mutable_values(ly.gain);
            auto gs = grads.mutable_values(ly.shift);
            const std::size_t w = ly.width;
            Real sum_d{0}, sum_dx{0};
            std::vector<Real> dxh(w);
            for (std::size_t i = 0; i < w; ++i) {
              gg[i] += g[i] * xh[i];
              gs[i] += g[i];
              dxh[i] = g[i] * gain[i];
              sum_d += dxh[i];
              sum_dx += dxh[i] * xh[i];
            }
            gin.resize(w);
            const Real nw = static_cast<Real>(w);
            for (std::size_t i = 0; i < w; ++i) gin[i] = inv / nw * (nw * dxh[i] - sum_d - xh[i] * sum_dx);
          }
        },
        layers[l]);
    g.swap(gin);
  }
  return g;
}

/// A LayerStack that owns its parameters.
struct Network {
  LayerStack stack;
  ParamStore params;
};

inline std::pair<std::vector<float>, Tape> forward_eval(const Network& net, std::span<const float> input) {
  Tape tape;
  auto out = forward(net.stack, net.params, input, &tape);
  return {std::move(out), std::move(tape)};
}

inline ParamStore grad_eval(const Network& net, const Tape& tape, std::span<const float> loss_grad) {
  ParamStore grads = net.params.zeros_like();
  backward(net.stack, net.params, tape, loss_grad, grads);
  return grads;
}

/// Plain MLP: dense/activation pairs for each hidden width, then a linear output.
inline Network make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation act,
                        std::uint64_t seed, const std::string& name = "mlp") {
  Network net{LayerStack(name), ParamStore(seed)};
  std::size_t width = in;
  for (auto h : hidden) {
    net.stack.dense(net.params, width, h, Init::he_uniform);
    net.stack.activation(act, h);
    width = h;
  }
  net.stack.dense(net.params, width, out, Init::lecun_uniform);
  return net;
}

}  // namespace dbn::nn
