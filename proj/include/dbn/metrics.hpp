#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbn/data.hpp"
#include "dbn/error.hpp"
#include "dbn/logits.hpp"
#include "json.hpp"

namespace dbn::metrics {

using Predictions = std::vector<std::vector<double>>;

inline constexpr std::size_t kDefaultBins = 15;

namespace detail {
inline void require_inputs(const Predictions& probs, std::span<const int> labels, const char* what) {
  if (probs.empty()) throw ConfigError(std::string(what) + ": empty input");
  if (probs.size() != labels.size()) throw ConfigError(std::string(what) + ": prediction/label count mismatch");
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= probs[i].size())
      throw DataError(std::string(what) + ": label out of range at row " + std::to_string(i));
}
}  // namespace detail

inline double accuracy(const Predictions& probs, std::span<const int> labels) {
  detail::require_inputs(probs, labels, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (argmax(probs[i]) == static_cast<std::size_t>(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

/// Mean of -log p_label, with probabilities floored at kProbFloor.
inline double nll(const Predictions& probs, std::span<const int> labels) {
  detail::require_inputs(probs, labels, "nll");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    sum -= std::log(std::max(probs[i][static_cast<std::size_t>(labels[i])], kProbFloor));
  return sum / static_cast<double>(probs.size());
}

/// Mean squared distance to the one-hot label.
inline double brier(const Predictions& probs, std::span<const int> labels) {
  detail::require_inputs(probs, labels, "brier");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t k = 0; k < probs[i].size(); ++k) {
      const double y = static_cast<std::size_t>(labels[i]) == k ? 1.0 : 0.0;
      sum += (probs[i][k] - y) * (probs[i][k] - y);
    }
  return sum / static_cast<double>(probs.size());
}

struct BinRecord {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct EceResult {
  double ece = 0.0;
  std::vector<BinRecord> bins;
};

/// Bin b holds examples whose max confidence falls in [b/n, (b+1)/n); the top
/// bin is closed at 1. ECE = sum_b n_b |acc_b - conf_b| / n.
inline EceResult ece(const Predictions& probs, std::span<const int> labels, std::size_t n_bins = kDefaultBins) {
  if (n_bins == 0) throw ConfigError("ece: need at least one bin");
  detail::require_inputs(probs, labels, "ece");
  std::vector<double> conf_sum(n_bins, 0.0), hit_sum(n_bins, 0.0);
  EceResult out;
  out.bins.assign(n_bins, {});
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t k = argmax(probs[i]);
    const double c = probs[i][k];
    auto b = static_cast<std::size_t>(std::floor(c * static_cast<double>(n_bins)));
    b = std::min(b, n_bins - 1);
    out.bins[b].count++;
    conf_sum[b] += c;
    hit_sum[b] += k == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = out.bins[b];
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / n;
    bin.accuracy = hit_sum[b] / n;
    total += n * std::abs(bin.accuracy - bin.mean_confidence);
  }
  out.ece = total / static_cast<double>(probs.size());
  return out;
}

struct DeeResult {
  double value = 0.0;
  bool below_one = false;      // linearly extrapolated below k = 1
  bool above_curve = false;    // extrapolated past the largest k
};

/// Deep-ensemble equivalent: the fractional k whose DE-k NLL matches
/// `nll_target`, by piecewise-linear interpolation of the DE curve.
inline DeeResult dee(double nll_target, const std::vector<std::pair<std::size_t, double>>& curve) {
  if (curve.size() < 2) throw ConfigError("dee: curve needs at least two points");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].first != i + 1) throw ConfigError("dee: curve must list k = 1, 2, ... in order");
    if (i > 0 && !(curve[i].second < curve[i - 1].second))
      throw ConfigError("dee: non-monotone curve (NLL must strictly decrease in k)");
  }
  auto seg = [&](std::size_t s) {  // interpolate on [s, s+1], s is 1-based
    const double a = curve[s - 1].second, b = curve[s].second;
    return static_cast<double>(s) + (nll_target - a) / (b - a);
  };
  DeeResult r;
  if (nll_target > curve.front().second) {
    r.value = seg(1);
    r.below_one = true;
    return r;
  }
  std::size_t s = 1;
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (curve[i].second >= nll_target) s = i + 1;
  if (s == curve.size()) {
    if (nll_target == curve.back().second) {
      r.value = static_cast<double>(s);
      return r;
    }
    r.value = seg(s - 1);
    r.above_curve = true;
    return r;
  }
  r.value = seg(s);
  return r;
}

struct MetricsReport {
  double acc = 0.0, nll = 0.0, brier = 0.0, ece = 0.0;
  std::optional<DeeResult> dee;
  std::size_t n_examples = 0;
  std::vector<BinRecord> bins;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"acc", acc}, {"nll", nll}, {"brier", brier}, {"ece", ece}, {"n_examples", n_examples}};
    if (dee) {
      j["dee"] = dee->value;
      j["dee_flag"] = dee->below_one ? "<1-extrapolated" : (dee->above_curve ? ">kmax-extrapolated" : "interpolated");
    } else {
      j["dee"] = nullptr;
    }
    auto b = nlohmann::json::array();
    for (const auto& r : bins)
      b.push_back({{"count", r.count}, {"mean_confidence", r.mean_confidence}, {"accuracy", r.accuracy}});
    j["bins"] = b;
    return j;
  }

  static std::string csv_header() { return "acc,nll,brier,ece,dee,n_examples"; }
  std::string csv_row() const {
    return format_double(acc) + "," + format_double(nll) + "," + format_double(brier) + "," + format_double(ece) + "," +
           (dee ? format_double(dee->value) : std::string()) + "," + std::to_string(n_examples);
  }
};

/// All metrics in one pass over precomputed predictions.
inline MetricsReport evaluate(const Predictions& probs, std::span<const int> labels,
                              const std::vector<std::pair<std::size_t, double>>* de_curve = nullptr,
                              std::size_t n_bins = kDefaultBins) {
  MetricsReport r;
  r.acc = accuracy(probs, labels);
  r.nll = nll(probs, labels);
  r.brier = brier(probs, labels);
  auto e = ece(probs, labels, n_bins);
  r.ece = e.ece;
  r.bins = std::move(e.bins);
  r.n_examples = probs.size();
  if (de_curve) r.dee = dee(r.nll, *de_curve);
  return r;
}

/// Runs `predict(x) -> probability vector` over a dataset, then evaluates.
template <class PredictFn>
MetricsReport evaluate(PredictFn&& predict, const Dataset& data,
                       const std::vector<std::pair<std::size_t, double>>* de_curve = nullptr) {
  Predictions probs;
  probs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) probs.push_back(predict(data.row(i)));
  return evaluate(probs, data.labels, de_curve);
}

}  // namespace dbn::metrics
