#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dbn/error.hpp"
#include "dbn/logits.hpp"
#include "dbn/nn/layers.hpp"
#include "json.hpp"

namespace dbn {

/// Sinusoidal features of the step index t*1000: interleaved (sin, cos)
/// pairs at frequencies 10000^(-2i/dim), i = 0 .. dim/2-1.
template <class Real = float>
std::vector<Real> sinusoidal_embed(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("sinusoidal embedding dimension must be even and positive");
  const double step = t * 1000.0;
  std::vector<Real> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    out[2 * i] = static_cast<Real>(std::sin(step * freq));
    out[2 * i + 1] = static_cast<Real>(std::cos(step * freq));
  }
  return out;
}

struct ScoreNetConfig {
  std::size_t feature_dim = 64;  // h: width of h1
  std::size_t class_count = 2;   // K
  std::size_t embed_width = 8;   // e
  std::size_t blocks = 2;
  bool zero_head = false;

  /// Logit dimension rounded up to a multiple of 4.
  std::size_t padded_logit_dim() const { return 4 * ((class_count + 3) / 4); }
  std::size_t time_sin_dim() const {
    const std::size_t q = padded_logit_dim() / 4;
    return q % 2 == 0 ? q : q + 1;
  }
  std::size_t time_hidden() const { return padded_logit_dim() / 2; }

  nlohmann::json to_json() const {
    return {{"feature_dim", feature_dim}, {"class_count", class_count}, {"embed_width", embed_width},
            {"blocks", blocks}, {"zero_head", zero_head}, {"time_sin_dim", time_sin_dim()},
            {"time_hidden", time_hidden()}};
  }
  static ScoreNetConfig from_json(const nlohmann::json& j) {
    ScoreNetConfig c;
    c.feature_dim = j.at("feature_dim");
    c.class_count = j.at("class_count");
    c.embed_width = j.at("embed_width");
    c.blocks = j.at("blocks");
    c.zero_head = j.at("zero_head");
    return c;
  }
  bool operator==(const ScoreNetConfig&) const = default;
};

/// Layer structure of the score estimator eps(h1, Z_t, t).
///
///   te = time_mlp(sinusoid(t))                    sin_dim -> d/2 -> e, swish
///   he = h1_embed(h1)                             h -> e
///   ze = zt_mlp(zt_norm(Z_t))                     layernorm, K -> e, relu6
///   x  = proj([he, ze, t])                        2e+1 -> e
///   x += block_b(x)  (te added after block 0)     layernorm, e -> e, swish, e -> e
///   eps = head(x) + skip(Z_t)                     e -> K, K -> K (no bias)
struct ScoreArch {
  nn::LayerStack h1_embed, zt_norm, zt_mlp, time_mlp, proj, head, skip;
  std::vector<nn::LayerStack> blocks;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"h1_embed", h1_embed.to_json()}, {"zt_norm", zt_norm.to_json()},
                        {"zt_mlp", zt_mlp.to_json()},     {"time_mlp", time_mlp.to_json()},
                        {"proj", proj.to_json()},         {"head", head.to_json()},
                        {"skip", skip.to_json()}};
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : blocks) j["blocks"].push_back(b.to_json());
    return j;
  }
  static ScoreArch from_json(const nlohmann::json& j) {
    ScoreArch a;
    a.h1_embed = nn::LayerStack::from_json(j.at("h1_embed"));
    a.zt_norm = nn::LayerStack::from_json(j.at("zt_norm"));
    a.zt_mlp = nn::LayerStack::from_json(j.at("zt_mlp"));
    a.time_mlp = nn::LayerStack::from_json(j.at("time_mlp"));
    a.proj = nn::LayerStack::from_json(j.at("proj"));
    a.head = nn::LayerStack::from_json(j.at("head"));
    a.skip = nn::LayerStack::from_json(j.at("skip"));
    for (const auto& b : j.at("blocks")) a.blocks.push_back(nn::LayerStack::from_json(b));
    return a;
  }
  std::vector<const nn::LayerStack*> stacks() const {
    std::vector<const nn::LayerStack*> v{&h1_embed, &zt_norm, &zt_mlp, &time_mlp, &proj};
    for (const auto& b : blocks) v.push_back(&b);
    v.push_back(&head);
    v.push_back(&skip);
    return v;
  }
};

template <class Real>
struct ScoreTape {
  std::uint64_t stamp = 0;
  nn::BasicTape<Real> h1, zt_norm, zt_mlp, time, proj, head, skip;
  std::vector<nn::BasicTape<Real>> blocks;
};

template <class Real>
std::vector<Real> score_forward_impl(const ScoreArch& a, const ScoreNetConfig& c, const nn::BasicParamStore<Real>& p,
                                     std::span<const Real> h1, std::span<const Real> zt, double t,
                                     ScoreTape<Real>* tape) {
  if (h1.size() != c.feature_dim)
    throw ConfigError("score network: h1 has length " + std::to_string(h1.size()) + ", expected " +
                      std::to_string(c.feature_dim));
  if (zt.size() != c.class_count)
    throw ConfigError("score network: Z_t has length " + std::to_string(zt.size()) + ", expected " +
                      std::to_string(c.class_count));
  for (auto v : h1)
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("score network: non-finite entry in h1");
  for (auto v : zt)
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("score network: non-finite entry in Z_t");
  if (!std::isfinite(t)) throw NumericError("score network: non-finite t");

  const std::size_t e = c.embed_width;
  if (tape) {
    tape->stamp = p.stamp();
    tape->blocks.resize(a.blocks.size());
  }
  auto tp = [&](nn::BasicTape<Real> ScoreTape<Real>::*m) { return tape ? &(tape->*m) : nullptr; };

  const auto sin = sinusoidal_embed<Real>(t, c.time_sin_dim());
  const auto te = nn::forward(a.time_mlp, p, std::span<const Real>(sin), tp(&ScoreTape<Real>::time));
  const auto he = nn::forward(a.h1_embed, p, h1, tp(&ScoreTape<Real>::h1));
  const auto zn = nn::forward(a.zt_norm, p, zt, tp(&ScoreTape<Real>::zt_norm));
  const auto ze = nn::forward(a.zt_mlp, p, std::span<const Real>(zn), tp(&ScoreTape<Real>::zt_mlp));

  std::vector<Real> u;
  u.reserve(2 * e + 1);
  u.insert(u.end(), he.begin(), he.end());
  u.insert(u.end(), ze.begin(), ze.end());
  u.push_back(static_cast<Real>(t));
  auto x = nn::forward(a.proj, p, std::span<const Real>(u), tp(&ScoreTape<Real>::proj));

  if (a.blocks.empty())
    for (std::size_t i = 0; i < e; ++i) x[i] += te[i];
  for (std::size_t b = 0; b < a.blocks.size(); ++b) {
    const auto r = nn::forward(a.blocks[b], p, std::span<const Real>(x), tape ? &tape->blocks[b] : nullptr);
    for (std::size_t i = 0; i < e; ++i) x[i] += r[i];
    if (b == 0)
      for (std::size_t i = 0; i < e; ++i) x[i] += te[i];
  }
  auto eps = nn::forward(a.head, p, std::span<const Real>(x), tp(&ScoreTape<Real>::head));
  const auto sk = nn::forward(a.skip, p, zt, tp(&ScoreTape<Real>::skip));
  for (std::size_t k = 0; k < eps.size(); ++k) eps[k] += sk[k];
  return eps;
}

/// Accumulates parameter gradients of <d_eps, eps> into `grads`.
template <class Real>
void score_backward_impl(const ScoreArch& a, const ScoreNetConfig& c, const nn::BasicParamStore<Real>& p,
                         const ScoreTape<Real>& tape, std::span<const Real> d_eps, nn::BasicParamStore<Real>& grads) {
  if (tape.stamp != p.stamp()) throw InvalidTape("score network: tape does not match current parameters");
  const std::size_t e = c.embed_width;
  nn::backward(a.skip, p, tape.skip, d_eps, grads);
  auto dx = nn::backward(a.head, p, tape.head, d_eps, grads);
  std::vector<Real> dte(e, Real{0});
  if (a.blocks.empty()) dte = dx;
  for (std::size_t b = a.blocks.size(); b-- > 0;) {
    if (b == 0) dte = dx;
    const auto dr = nn::backward(a.blocks[b], p, tape.blocks[b], std::span<const Real>(dx), grads);
    for (std::size_t i = 0; i < e; ++i) dx[i] += dr[i];
  }
  const auto du = nn::backward(a.proj, p, tape.proj, std::span<const Real>(dx), grads);
  const std::span<const Real> dhe(du.data(), e), dze(du.data() + e, e);
  const auto dzn = nn::backward(a.zt_mlp, p, tape.zt_mlp, dze, grads);
  nn::backward(a.zt_norm, p, tape.zt_norm, std::span<const Real>(dzn), grads);
  nn::backward(a.h1_embed, p, tape.h1, dhe, grads);
  nn::backward(a.time_mlp, p, tape.time, std::span<const Real>(dte), grads);
}

/// Conditional score estimator with its parameters.
class ScoreNetwork {
 public:
  ScoreNetwork() = default;

  static ScoreNetwork create(const ScoreNetConfig& cfg, std::uint64_t seed) {
    if (cfg.embed_width == 0 || cfg.feature_dim == 0 || cfg.class_count == 0)
      throw ConfigError("score network dimensions must be positive");
    ScoreNetwork net;
    net.cfg_ = cfg;
    net.params_ = nn::ParamStore(seed);
    auto& p = net.params_;
    auto& a = net.arch_;
    const std::size_t e = cfg.embed_width, K = cfg.class_count;
    a.time_mlp = nn::LayerStack("time_mlp");
    a.time_mlp.dense(p, cfg.time_sin_dim(), cfg.time_hidden(), nn::Init::he_uniform)
        .activation(nn::Activation::swish, cfg.time_hidden())
        .dense(p, cfg.time_hidden(), e, nn::Init::lecun_uniform);
    a.h1_embed = nn::LayerStack("h1_embed");
    a.h1_embed.dense(p, cfg.feature_dim, e, nn::Init::lecun_uniform);
    a.zt_norm = nn::LayerStack("zt_norm");
    a.zt_norm.layer_norm(p, K);
    a.zt_mlp = nn::LayerStack("zt_mlp");
    a.zt_mlp.dense(p, K, e, nn::Init::he_uniform).activation(nn::Activation::relu6, e);
    a.proj = nn::LayerStack("proj");
    a.proj.dense(p, 2 * e + 1, e, nn::Init::lecun_uniform);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      nn::LayerStack blk("block" + std::to_string(b));
      blk.layer_norm(p, e)
          .dense(p, e, e, nn::Init::he_uniform)
          .activation(nn::Activation::swish, e)
          .dense(p, e, e, nn::Init::lecun_uniform);
      a.blocks.push_back(std::move(blk));
    }
    a.head = nn::LayerStack("head");
    a.head.dense(p, e, K, cfg.zero_head ? nn::Init::zeros : nn::Init::lecun_uniform);
    a.skip = nn::LayerStack("skip");
    a.skip.dense(p, K, K, nn::Init::zeros, /*bias=*/false);
    return net;
  }

  static ScoreNetwork assemble(ScoreNetConfig cfg, ScoreArch arch, nn::ParamStore params) {
    ScoreNetwork n;
    n.cfg_ = cfg;
    n.arch_ = std::move(arch);
    n.params_ = std::move(params);
    return n;
  }

  const ScoreNetConfig& config() const { return cfg_; }
  const ScoreArch& arch() const { return arch_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& mutable_params() { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  LogitVector epsilon(std::span<const float> h1, std::span<const float> zt, double t) const {
    return score_forward_impl<float>(arch_, cfg_, params_, h1, zt, t, nullptr);
  }

  LogitVector forward(std::span<const float> h1, std::span<const float> zt, double t, ScoreTape<float>& tape) const {
    return score_forward_impl<float>(arch_, cfg_, params_, h1, zt, t, &tape);
  }

  void backward(const ScoreTape<float>& tape, std::span<const float> d_eps, nn::ParamStore& grads) const {
    score_backward_impl<float>(arch_, cfg_, params_, tape, d_eps, grads);
  }

  bool operator==(const ScoreNetwork& o) const {
    return cfg_ == o.cfg_ && params_ == o.params_ && arch_.to_json() == o.arch_.to_json();
  }

 private:
  ScoreNetConfig cfg_;
  ScoreArch arch_;
  nn::ParamStore params_;
};

inline LogitVector score_forward(const ScoreNetwork& net, std::span<const float> h1, std::span<const float> zt,
                                 double t) {
  return net.epsilon(h1, zt, t);
}

}  // namespace dbn
