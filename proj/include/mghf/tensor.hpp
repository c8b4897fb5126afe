#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/rng.hpp"

namespace mghf {

// Dense rank-3 array, row-major (channel, row, column). The universal
// feature carrier: images are 3xHxW, detail maps are 1xHxW.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;

  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw ShapeError("Tensor dims must be positive, got " + std::to_string(c) + "x" +
                       std::to_string(h) + "x" + std::to_string(w));
    data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  }

  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
};

/// Ordered list of single-channel detail maps, all with equal spatial size.
using FeatureStack = std::vector<Tensor>;

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

inline void check_aligned(const FeatureStack& a, const FeatureStack& b, const char* where) {
  if (a.size() != b.size())
    throw ShapeError(std::string(where) + ": stack length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) check_same_shape(a[i], b[i], where);
}

// Reductions accumulate in index order so repeated evaluation is
// bit-identical; never reorder these loops.
inline double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data) acc += v;
  return acc;
}

inline double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.size()); }

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

/// a += scale * b
inline void add_scaled(Tensor& a, const Tensor& b, double scale) {
  check_same_shape(a, b, "add_scaled");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

inline Tensor scaled(const Tensor& t, double scale) {
  Tensor out = t;
  for (double& v : out.data) v *= scale;
  return out;
}

inline Tensor random_tensor(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor t(c, h, w);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline double stack_max_abs_diff(const FeatureStack& a, const FeatureStack& b) {
  check_aligned(a, b, "stack_max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a[i], b[i]));
  return m;
}

}  // namespace mghf
