#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbn/error.hpp"

namespace dbn::nn {

namespace detail {
inline std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <class Real>
struct BasicTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<Real> values;

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t numel() const { return values.size(); }

  bool operator==(const BasicTensor&) const = default;
};

/// Named flat tensors plus the seed they were initialized from.
///
/// Every mutable access re-stamps the store. Tapes remember the stamp they
/// were recorded under, which is how stale tapes are detected.
template <class Real>
class BasicParamStore {
 public:
  using Tensor = BasicTensor<Real>;

  BasicParamStore() = default;
  explicit BasicParamStore(std::uint64_t seed) : seed_(seed) {}

  BasicParamStore(const BasicParamStore& other)
      : tensors_(other.tensors_), seed_(other.seed_), stamp_(detail::next_stamp()) {}
  BasicParamStore& operator=(const BasicParamStore& other) {
    tensors_ = other.tensors_;
    seed_ = other.seed_;
    stamp_ = detail::next_stamp();
    return *this;
  }
  BasicParamStore(BasicParamStore&& other) noexcept
      : tensors_(std::move(other.tensors_)), seed_(other.seed_), stamp_(other.stamp_) {
    other.stamp_ = detail::next_stamp();
  }
  BasicParamStore& operator=(BasicParamStore&& other) noexcept {
    tensors_ = std::move(other.tensors_);
    seed_ = other.seed_;
    stamp_ = other.stamp_;
    other.stamp_ = detail::next_stamp();
    return *this;
  }

  /// Appends a zero-filled tensor and returns its index.
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    Tensor t;
    t.name = std::move(name);
    t.values.assign(Tensor::count(shape), Real{0});
    t.shape = std::move(shape);
    tensors_.push_back(std::move(t));
    stamp_ = detail::next_stamp();
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::span<const Real> values(std::size_t i) const { return tensors_.at(i).values; }
  std::span<Real> mutable_values(std::size_t i) {
    stamp_ = detail::next_stamp();
    return tensors_.at(i).values;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stamp() const { return stamp_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name == name) return i;
    throw ConfigError("no tensor named '" + name + "'");
  }

  BasicParamStore zeros_like() const {
    BasicParamStore out(seed_);
    for (const auto& t : tensors_) out.add(t.name, t.shape);
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), Real{0});
    stamp_ = detail::next_stamp();
  }

  bool same_layout(const BasicParamStore& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].shape != other.tensors_[i].shape) return false;
    return true;
  }

  /// Throws ConfigError naming the first tensor whose shape differs.
  void require_same_layout(const BasicParamStore& other, const char* what) const {
    if (tensors_.size() != other.tensors_.size())
      throw ConfigError(std::string(what) + ": tensor count " + std::to_string(other.tensors_.size()) +
                        " does not match " + std::to_string(tensors_.size()));
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].shape != other.tensors_[i].shape)
        throw ConfigError(std::string(what) + ": shape mismatch on tensor '" + tensors_[i].name + "'");
  }

  // Contents only; the stamp is bookkeeping.
  bool operator==(const BasicParamStore& other) const {
    return seed_ == other.seed_ && tensors_ == other.tensors_;
  }

 private:
  std::vector<Tensor> tensors_;
  std::uint64_t seed_ = 0;
  std::uint64_t stamp_ = detail::next_stamp();
};

using Tensor = BasicTensor<float>;
using ParamStore = BasicParamStore<float>;

template <class To, class From>
BasicParamStore<To> cast_params(const BasicParamStore<From>& in) {
  BasicParamStore<To> out(in.seed());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto idx = out.add(in[i].name, in[i].shape);
    auto dst = out.mutable_values(idx);
    const auto src = in.values(i);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<To>(src[j]);
  }
  return out;
}

}  // namespace dbn::nn
