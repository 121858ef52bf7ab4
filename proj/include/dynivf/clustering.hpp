#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dynivf/distance.hpp"

namespace dynivf {

struct KMeansParams {
  std::size_t k = 0;
  std::uint32_t iterations = 10;
  // When nonempty, seeds the clustering (and then |initial_centroids| must
  // equal k). With iterations == 0 this degenerates to a single
  // capacity-constrained assignment round against these centroids.
  std::vector<std::vector<float>> initial_centroids;
  double balance_slack = 1.25;
  std::uint64_t seed = 0;
};

struct ClusteringResult {
  std::vector<std::vector<float>> centroids;
  // Parallel to the input point order.
  std::vector<std::uint32_t> assignments;
  std::vector<std::size_t> cluster_sizes;
  // MSE of points against their assigned final centroid (squared L2).
  double error = 0.0;
};

// Lloyd-style balanced k-means. Each assignment round is capacity
// constrained: no cluster may take more than ceil(n/k * balance_slack)
// points. Points are placed in descending order of the gap between their
// nearest and second-nearest centroid, each going to its nearest non-full
// centroid. Empty clusters are re-seeded from the point farthest from its
// assigned centroid. Deterministic for a fixed seed.
ClusteringResult balanced_kmeans(const float* data, std::size_t count, std::size_t dim,
                                 const KMeansParams& params);

// Exact top-k over a centroid list by exhaustive scan; ascending by
// (distance, index).
void knn_centroids(const float* query, std::span<const float* const> centroids, std::size_t dim,
                   std::size_t k, DistanceMetric metric, std::vector<std::uint32_t>& idx_out,
                   std::vector<float>& dist_out);

// Convenience overload for tests and small call sites.
std::pair<std::vector<std::uint32_t>, std::vector<float>> knn_centroids(
    std::span<const float> query, const std::vector<std::vector<float>>& centroids, std::size_t k,
    DistanceMetric metric);

}  // namespace dynivf
