#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ltsm/ltsm.hpp"

namespace th {

// Runs fn and returns the library error code it raised, if any.
inline std::optional<ltsm::Errc> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ltsm::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline ltsm::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  ltsm::SplitMix64 rng(seed);
  ltsm::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline ltsm::TimeSeries series_of(const ltsm::Matrix& values, const std::string& name = "s") {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < values.cols(); ++j) names.push_back("v" + std::to_string(j));
  return ltsm::TimeSeries(name, "1h", values, names);
}

inline ltsm::TimeSeries ramp(std::size_t n, std::size_t d = 1) {
  ltsm::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = static_cast<double>(i + 1) + 1000.0 * j;
  return series_of(m);
}

inline std::vector<double> column(const ltsm::Matrix& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, c);
  return out;
}

inline double max_abs_diff(const ltsm::Matrix& a, const ltsm::Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Tiny model configs shared by the backbone and trainer tests.
inline ltsm::BackboneConfig tiny_config(std::size_t layers = 1, std::size_t dim = 8, std::size_t heads = 2) {
  ltsm::BackboneConfig c;
  c.num_layers = layers;
  c.model_dim = dim;
  c.num_heads = heads;
  c.ff_dim = 2 * dim;
  c.horizon = 4;
  c.prompt_len = 3;
  c.lookback_len = 13;
  c.patch = {4, 2};
  return c;
}

}  // namespace th
