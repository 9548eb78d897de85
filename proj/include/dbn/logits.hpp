#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace dbn {

/// K pre-softmax class scores.
using LogitVector = std::vector<float>;

/// Floor applied to probabilities before any log (NLL, EnsLogit).
inline constexpr double kProbFloor = 1e-12;

template <class Real>
std::vector<Real> softmax(std::span<const Real> z) {
  std::vector<Real> p(z.size());
  if (z.empty()) return p;
  const double mx = static_cast<double>(*std::max_element(z.begin(), z.end()));
  double sum = 0.0;
  std::vector<double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(static_cast<double>(z[i]) - mx);
    sum += e[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<Real>(e[i] / sum);
  return p;
}

template <class Real>
std::vector<Real> softmax(const std::vector<Real>& z) {
  return softmax(std::span<const Real>(z));
}

template <class Real>
std::size_t argmax(std::span<const Real> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <class Real>
std::size_t argmax(const std::vector<Real>& v) {
  return argmax(std::span<const Real>(v));
}

}  // namespace dbn
