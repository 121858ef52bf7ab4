#pragma once

#include <cstddef>
#include <span>

#include "dynivf/common.hpp"

namespace dynivf {

// Both metrics are normalized so that smaller means more similar, which keeps
// a single top-k code path: SquaredL2 is the plain squared distance and
// InnerProduct is negated.
enum class DistanceMetric { kSquaredL2, kInnerProduct };

inline const char* metric_name(DistanceMetric m) {
  return m == DistanceMetric::kSquaredL2 ? "l2" : "ip";
}

inline DistanceMetric metric_from_name(const std::string& name) {
  if (name == "l2") return DistanceMetric::kSquaredL2;
  if (name == "ip") return DistanceMetric::kInnerProduct;
  throw ConfigError("unknown metric: " + name);
}

// Unchecked hot-path variant; callers guarantee matching dimensions.
inline float distance(const float* a, const float* b, std::size_t dim, DistanceMetric metric) {
  float acc = 0.0f;
  if (metric == DistanceMetric::kSquaredL2) {
    for (std::size_t i = 0; i < dim; ++i) {
      const float diff = a[i] - b[i];
      acc += diff * diff;
    }
    return acc;
  }
  for (std::size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
  return -acc;
}

inline float distance(std::span<const float> a, std::span<const float> b, DistanceMetric metric) {
  if (a.size() != b.size())
    throw DimensionError("distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  return distance(a.data(), b.data(), a.size(), metric);
}

}  // namespace dynivf
