#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dbn/error.hpp"
#include "dbn/random.hpp"

namespace dbn {

/// Row-major feature matrix with integer labels.
struct Dataset {
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  std::size_t class_count() const {
    int k = -1;
    for (int y : labels) k = std::max(k, y);
    return static_cast<std::size_t>(k + 1);
  }

  std::size_t distinct_labels() const { return std::set<int>(labels.begin(), labels.end()).size(); }

  void push(std::span<const float> x, int y) {
    if (dim == 0 && empty()) dim = x.size();
    if (x.size() != dim) throw DataError("row has " + std::to_string(x.size()) + " features, expected " + std::to_string(dim));
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
  }

  bool operator==(const Dataset&) const = default;
};

inline std::string format_float(float v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string format_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

// CSV schema: header f0,...,f{d-1},label then one row per example. Floats are
// written in shortest round-trip form so a read returns the exact bits.
inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t j = 0; j < ds.dim; ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.row(i)) out += format_float(v) + ",";
    out += std::to_string(ds.labels[i]) + "\n";
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << to_csv(ds);
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

template <class T>
T parse_number(const std::string& s, std::size_t line) {
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line) + ": cannot parse '" + s + "'");
  return v;
}
}  // namespace detail

/// Parses the dataset CSV. A `label` column is optional when `require_label`
/// is false (inference inputs); missing labels read as -1.
inline Dataset parse_csv(const std::string& text, bool require_label = true) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  const auto header = detail::split_csv_line(line);
  const bool has_label = !header.empty() && header.back() == "label";
  if (require_label && !has_label) throw DataError("CSV header must end with a 'label' column");
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "f" + std::to_string(j)) throw DataError("unexpected CSV column '" + header[j] + "'");
  Dataset ds;
  ds.dim = d;
  std::size_t lineno = 1;
  std::vector<float> row(d);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " cells");
    for (std::size_t j = 0; j < d; ++j) row[j] = detail::parse_number<float>(cells[j], lineno);
    const int y = has_label ? detail::parse_number<int>(cells[d], lineno) : -1;
    if (has_label && y < 0) throw DataError("line " + std::to_string(lineno) + ": negative label");
    ds.push(row, y);
  }
  return ds;
}

inline Dataset read_csv(const std::filesystem::path& path, bool require_label = true) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open dataset '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), require_label);
}

inline void shuffle_rows(Dataset& ds, Rng& rng) {
  for (std::size_t i = ds.size(); i > 1; --i) {
    const std::size_t j = sample_index(rng, i);
    std::swap(ds.labels[i - 1], ds.labels[j]);
    for (std::size_t k = 0; k < ds.dim; ++k) std::swap(ds.features[(i - 1) * ds.dim + k], ds.features[j * ds.dim + k]);
  }
}

// --- synthetic generators -----------------------------------------------------

/// Two interleaving half circles (labels 0/1) with isotropic Gaussian noise.
inline Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw ConfigError("two-moons needs n >= 2");
  if (noise < 0) throw ConfigError("noise must be non-negative");
  Rng rng = make_rng(seed, 101);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n_out = n / 2, n_in = n - n_out;
  Dataset ds;
  ds.dim = 2;
  auto emit = [&](double x, double y, int label) {
    const float p[2] = {static_cast<float>(x + noise * gauss(rng)), static_cast<float>(y + noise * gauss(rng))};
    ds.push(p, label);
  };
  for (std::size_t i = 0; i < n_out; ++i) {
    const double th = std::numbers::pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n_out - 1, 1));
    emit(std::cos(th), std::sin(th), 0);
  }
  for (std::size_t i = 0; i < n_in; ++i) {
    const double th = std::numbers::pi * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(n_in - 1, 1));
    emit(1.0 - std::cos(th), 0.5 - std::sin(th), 1);
  }
  shuffle_rows(ds, rng);
  return ds;
}

/// K Gaussian blobs with centers evenly spaced on a circle of radius `spread`.
inline Dataset make_blobs(std::size_t n, std::size_t classes, std::size_t dim, double stddev, double spread,
                          std::uint64_t seed) {
  if (classes < 1 || dim < 1 || n < classes) throw ConfigError("blobs needs classes >= 1, dim >= 1, n >= classes");
  Rng rng = make_rng(seed, 202);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.dim = dim;
  std::vector<float> p(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    for (std::size_t j = 0; j < dim; ++j) {
      double c = 0.0;
      if (j == 0) c = spread * std::cos(ang);
      if (j == 1) c = spread * std::sin(ang);
      p[j] = static_cast<float>(c + stddev * gauss(rng));
    }
    ds.push(p, static_cast<int>(k));
  }
  shuffle_rows(ds, rng);
  return ds;
}

/// Concentric rings; ring k has radius k+1.
inline Dataset make_rings(std::size_t n, std::size_t classes, double noise, std::uint64_t seed) {
  if (classes < 1 || n < classes) throw ConfigError("rings needs classes >= 1 and n >= classes");
  Rng rng = make_rng(seed, 303);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  Dataset ds;
  ds.dim = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    const double r = static_cast<double>(k + 1);
    const double a = angle(rng);
    const float p[2] = {static_cast<float>(r * std::cos(a) + noise * gauss(rng)),
                        static_cast<float>(r * std::sin(a) + noise * gauss(rng))};
    ds.push(p, static_cast<int>(k));
  }
  shuffle_rows(ds, rng);
  return ds;
}

}  // namespace dbn
