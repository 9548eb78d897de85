#pragma once

#include <atomic>
#include <exception>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dbn/data.hpp"
#include "dbn/error.hpp"
#include "dbn/logits.hpp"
#include "dbn/nn/layers.hpp"
#include "dbn/nn/optim.hpp"
#include "dbn/random.hpp"
#include "json.hpp"

namespace dbn {

struct ClassifierArch {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{64, 64, 64};
  nn::Activation activation = nn::Activation::swish;
  std::size_t class_count = 2;

  nlohmann::json to_json() const {
    return {{"input_dim", input_dim}, {"hidden", hidden}, {"activation", nn::to_string(activation)},
            {"class_count", class_count}};
  }
  static ClassifierArch from_json(const nlohmann::json& j) {
    ClassifierArch a;
    a.input_dim = j.at("input_dim");
    a.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    a.activation = nn::activation_from_string(j.at("activation"));
    a.class_count = j.at("class_count");
    return a;
  }
  bool operator==(const ClassifierArch&) const = default;
};

/// f = c o g: a feature extractor (dense+activation blocks) and a linear head.
class ClassifierModel {
 public:
  ClassifierModel() = default;

  static ClassifierModel create(const ClassifierArch& arch, std::uint64_t seed) {
    if (arch.hidden.empty()) throw ConfigError("classifier needs at least one hidden layer");
    if (arch.class_count < 2) throw ConfigError("classifier needs at least two classes");
    ClassifierModel m;
    m.arch_ = arch;
    m.params_ = nn::ParamStore(seed);
    m.feature_ = nn::LayerStack("feature");
    std::size_t w = arch.input_dim;
    for (auto h : arch.hidden) {
      m.feature_.dense(m.params_, w, h, nn::Init::he_uniform);
      m.feature_.activation(arch.activation, h);
      w = h;
    }
    m.head_ = nn::LayerStack("head");
    m.head_.dense(m.params_, w, arch.class_count, nn::Init::lecun_uniform);
    return m;
  }

  static ClassifierModel assemble(ClassifierArch arch, nn::LayerStack feature, nn::LayerStack head,
                                  nn::ParamStore params) {
    ClassifierModel m;
    m.arch_ = std::move(arch);
    m.feature_ = std::move(feature);
    m.head_ = std::move(head);
    m.params_ = std::move(params);
    return m;
  }

  const ClassifierArch& arch() const { return arch_; }
  std::uint64_t seed() const { return params_.seed(); }
  std::size_t class_count() const { return arch_.class_count; }
  std::size_t feature_width() const { return arch_.hidden.back(); }
  std::size_t hidden_count() const { return arch_.hidden.size(); }
  const nn::LayerStack& feature_net() const { return feature_; }
  const nn::LayerStack& head() const { return head_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& mutable_params() { return params_; }

  /// g(x)
  std::vector<float> features(std::span<const float> x) const { return nn::forward(feature_, params_, x); }
  /// c(h)
  LogitVector head_logits(std::span<const float> h) const { return nn::forward(head_, params_, h); }
  /// c(g(x))
  LogitVector logits(std::span<const float> x) const {
    const auto h = features(x);
    return head_logits(h);
  }

  /// Width of hidden block `tap`.
  std::size_t tap_width(std::size_t tap) const {
    check_tap(tap);
    return arch_.hidden[tap];
  }

  void check_tap(std::size_t tap) const {
    if (tap >= hidden_count())
      throw ConfigError("feature tap " + std::to_string(tap) + " out of range (model has " +
                        std::to_string(hidden_count()) + " hidden blocks)");
  }

  /// Output of hidden block `tap` and the logits, from a single pass.
  std::pair<std::vector<float>, LogitVector> tap_and_logits(std::span<const float> x, std::size_t tap) const {
    check_tap(tap);
    const std::size_t cut = 2 * (tap + 1);
    auto h = nn::forward_range(feature_, params_, x, 0, cut);
    const auto g = nn::forward_range(feature_, params_, std::span<const float>(h), cut, feature_.size());
    return {std::move(h), head_logits(g)};
  }

  bool operator==(const ClassifierModel& o) const {
    return arch_ == o.arch_ && params_ == o.params_ && feature_ == o.feature_ && head_ == o.head_;
  }

 private:
  ClassifierArch arch_;
  nn::LayerStack feature_, head_;
  nn::ParamStore params_;
};

/// M members sharing one architecture; member `source_index` feeds the bridges.
struct EnsembleBundle {
  std::vector<ClassifierModel> members;
  std::size_t source_index = 0;
  std::vector<double> train_accuracy;

  std::size_t size() const { return members.size(); }
  const ClassifierModel& source() const { return members.at(source_index); }

  void validate() const {
    if (members.empty()) throw ConfigError("ensemble must have at least one member");
    if (source_index >= members.size()) throw ConfigError("source index out of range");
    for (const auto& m : members)
      if (!(m.arch() == members.front().arch())) throw ConfigError("ensemble members must share one architecture");
  }
};

struct TeacherTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  unsigned threads = 1;
};

/// Trains one member with SGD-momentum on softmax cross-entropy; returns the
/// final training accuracy.
inline double train_member(ClassifierModel& model, const Dataset& data, const TeacherTrainConfig& cfg,
                           std::size_t member_index = 0) {
  if (data.empty()) throw ConfigError("empty training set");
  if (cfg.batch == 0 || cfg.epochs == 0) throw ConfigError("epochs and batch must be positive");
  const std::size_t n = data.size();
  const std::size_t batches = (n + cfg.batch - 1) / cfg.batch;
  nn::OptimizerConfig oc;
  oc.kind = nn::OptimizerKind::sgd_momentum;
  oc.base_lr = cfg.lr;
  oc.momentum = cfg.momentum;
  oc.weight_decay = cfg.weight_decay;
  oc.total_steps = static_cast<long>(cfg.epochs * batches);
  nn::OptimizerState opt(oc, model.params());
  Rng rng = make_rng(model.seed(), 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  nn::Tape ftape, htape;
  nn::ParamStore grads = model.params().zeros_like();
  const std::size_t K = model.class_count();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[sample_index(rng, i)]);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch, hi = std::min(n, lo + cfg.batch);
      const float inv_b = 1.0f / static_cast<float>(hi - lo);
      grads.set_zero();
      double loss = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t idx = order[k];
        const auto h = nn::forward(model.feature_net(), model.params(), data.row(idx), &ftape);
        const auto z = nn::forward(model.head(), model.params(), std::span<const float>(h), &htape);
        const auto p = softmax(z);
        const int y = data.labels[idx];
        loss -= std::log(std::max(static_cast<double>(p[static_cast<std::size_t>(y)]), kProbFloor));
        std::vector<float> dz(K);
        for (std::size_t c = 0; c < K; ++c) dz[c] = (p[c] - (static_cast<int>(c) == y ? 1.0f : 0.0f)) * inv_b;
        const auto dh = nn::backward(model.head(), model.params(), htape, std::span<const float>(dz), grads);
        nn::backward(model.feature_net(), model.params(), ftape, std::span<const float>(dh), grads);
      }
      if (!std::isfinite(loss))
        throw NumericError("teacher " + std::to_string(member_index) + " (seed " + std::to_string(model.seed()) +
                           "): non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      opt.step(model.mutable_params(), grads);
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax(model.logits(data.row(i))) == static_cast<std::size_t>(data.labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(n);
}

/// Deep ensemble: one member per seed, each trained independently.
inline EnsembleBundle train_teachers(const Dataset& data, const ClassifierArch& arch, std::size_t members,
                                     const std::vector<std::uint64_t>& seeds, const TeacherTrainConfig& cfg) {
  if (members == 0) throw ConfigError("ensemble size must be at least 1");
  if (seeds.size() != members) throw ConfigError("need exactly one seed per member");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("member seeds must be distinct");
  if (data.dim != arch.input_dim)
    throw ConfigError("dataset has " + std::to_string(data.dim) + " features but the architecture expects " +
                      std::to_string(arch.input_dim));
  if (data.class_count() > arch.class_count)
    throw DataError("dataset labels exceed class count " + std::to_string(arch.class_count));
  if (data.distinct_labels() < arch.class_count)
    throw ConfigError("dataset has " + std::to_string(data.distinct_labels()) + " distinct labels, fewer than K = " +
                      std::to_string(arch.class_count));

  EnsembleBundle bundle;
  for (auto s : seeds) bundle.members.push_back(ClassifierModel::create(arch, s));
  bundle.train_accuracy.assign(members, 0.0);

  std::vector<std::exception_ptr> errors(members);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < members; i = next++) {
      try {
        bundle.train_accuracy[i] = train_member(bundle.members[i], data, cfg, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(members)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return bundle;
}

struct ClampStats {
  std::size_t clamped = 0;
};

/// Mean-centred log of the averaged member probabilities, so that
/// softmax(result) recovers the average exactly (up to rounding).
inline LogitVector ens_logit(std::span<const std::vector<float>> probabilities, ClampStats* stats = nullptr) {
  if (probabilities.empty()) throw ConfigError("ens_logit needs at least one member");
  const std::size_t K = probabilities.front().size();
  std::vector<double> mean(K, 0.0);
  for (const auto& p : probabilities) {
    if (p.size() != K) throw ConfigError("ens_logit: members disagree on class count");
    for (std::size_t k = 0; k < K; ++k) mean[k] += static_cast<double>(p[k]);
  }
  std::vector<double> logs(K);
  double centre = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double v = mean[k] / static_cast<double>(probabilities.size());
    if (v < kProbFloor) {
      v = kProbFloor;
      if (stats) ++stats->clamped;
    }
    logs[k] = std::log(v);
    centre += logs[k];
  }
  centre /= static_cast<double>(K);
  LogitVector out(K);
  for (std::size_t k = 0; k < K; ++k) out[k] = static_cast<float>(logs[k] - centre);
  return out;
}

inline LogitVector ens_logit(const std::vector<std::vector<float>>& probabilities, ClampStats* stats = nullptr) {
  return ens_logit(std::span<const std::vector<float>>(probabilities), stats);
}

/// Average of member softmax outputs over `indices`.
inline std::vector<double> ensemble_probs(const EnsembleBundle& bundle, std::span<const std::size_t> indices,
                                          std::span<const float> x) {
  std::vector<double> mean(bundle.members.front().class_count(), 0.0);
  for (auto i : indices) {
    const auto p = softmax(bundle.members.at(i).logits(x));
    for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
  }
  for (auto& v : mean) v /= static_cast<double>(indices.size());
  return mean;
}

/// First-k members as index list {0, ..., k-1}.
inline std::vector<std::size_t> first_k(std::size_t k) {
  std::vector<std::size_t> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = i;
  return v;
}

struct SourceFeature {
  std::vector<float> h1;
  LogitVector z1;
};

/// Configured intermediate activation of the source member plus its logits.
inline SourceFeature source_feature(const EnsembleBundle& bundle, std::span<const float> x, std::size_t tap = 0) {
  auto [h, z] = bundle.source().tap_and_logits(x, tap);
  return {std::move(h), std::move(z)};
}

}  // namespace dbn
