#include "dynivf/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dynivf {

namespace {

std::vector<std::vector<float>> kmeanspp_seed(const float* data, std::size_t count,
                                              std::size_t dim, std::size_t k,
                                              std::mt19937_64& rng) {
  std::vector<std::vector<float>> centroids;
  centroids.reserve(k);
  const float* first = data + rng_index(rng, count) * dim;
  centroids.emplace_back(first, first + dim);

  std::vector<double> min_dist(count);
  for (std::size_t i = 0; i < count; ++i)
    min_dist[i] = distance(data + i * dim, centroids[0].data(), dim, DistanceMetric::kSquaredL2);

  while (centroids.size() < k) {
    double total = std::accumulate(min_dist.begin(), min_dist.end(), 0.0);
    std::size_t pick;
    if (total <= 0.0) {
      // All remaining points coincide with a seed; any choice works.
      pick = rng_index(rng, count);
    } else {
      const double r = rng_unit(rng) * total;
      double acc = 0.0;
      pick = count - 1;
      for (std::size_t i = 0; i < count; ++i) {
        acc += min_dist[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    const float* p = data + pick * dim;
    centroids.emplace_back(p, p + dim);
    for (std::size_t i = 0; i < count; ++i) {
      const double d = distance(data + i * dim, p, dim, DistanceMetric::kSquaredL2);
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }
  return centroids;
}

std::size_t capacity_for(std::size_t n, std::size_t k, double slack) {
  const double cap = std::ceil(static_cast<double>(n) / static_cast<double>(k) * slack);
  if (!(cap < static_cast<double>(n))) return n;
  return static_cast<std::size_t>(cap);
}

// One capacity-constrained assignment round. dist_matrix is n x k.
void constrained_assign(const std::vector<float>& dist_matrix, std::size_t n, std::size_t k,
                        std::size_t cap, std::vector<std::uint32_t>& assign,
                        std::vector<std::size_t>& sizes) {
  std::vector<float> gap(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = dist_matrix.data() + i * k;
    float best = row[0], second = std::numeric_limits<float>::infinity();
    for (std::size_t c = 1; c < k; ++c) {
      if (row[c] < best) {
        second = best;
        best = row[c];
      } else if (row[c] < second) {
        second = row[c];
      }
    }
    gap[i] = (k == 1) ? 0.0f : second - best;
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (gap[a] != gap[b]) return gap[a] > gap[b];
    return a < b;
  });

  sizes.assign(k, 0);
  for (std::uint32_t point : order) {
    const float* row = dist_matrix.data() + static_cast<std::size_t>(point) * k;
    std::size_t best = k;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] >= cap) continue;
      if (row[c] < best_d) {
        best_d = row[c];
        best = c;
      }
    }
    // cap * k >= n for slack >= 1, so a slot always exists.
    assign[point] = static_cast<std::uint32_t>(best);
    ++sizes[best];
  }
}

void fill_dist_matrix(const float* data, std::size_t n, std::size_t dim,
                      const std::vector<std::vector<float>>& centroids,
                      std::vector<float>& dist_matrix) {
  const std::size_t k = centroids.size();
  dist_matrix.resize(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = data + i * dim;
    float* row = dist_matrix.data() + i * k;
    for (std::size_t c = 0; c < k; ++c)
      row[c] = distance(p, centroids[c].data(), dim, DistanceMetric::kSquaredL2);
  }
}

void recompute_means(const float* data, std::size_t n, std::size_t dim,
                     const std::vector<std::uint32_t>& assign,
                     const std::vector<std::size_t>& sizes,
                     std::vector<std::vector<float>>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<double> sums(k * dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
    const float* p = data + i * dim;
    for (std::size_t j = 0; j < dim; ++j) dst[j] += p[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(sizes[c]);
    for (std::size_t j = 0; j < dim; ++j)
      centroids[c][j] = static_cast<float>(sums[c * dim + j] * inv);
  }
}

// Re-seed every empty cluster from the point currently farthest from its
// assigned centroid, skipping clusters that would be emptied by the move.
// Returns true when any point moved (means must then be recomputed).
bool repair_empty_clusters(const float* data, std::size_t n, std::size_t dim,
                           std::vector<std::uint32_t>& assign, std::vector<std::size_t>& sizes,
                           std::vector<std::vector<float>>& centroids) {
  const std::size_t k = centroids.size();
  bool moved = false;
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = n;
    float far_d = -1.0f;
    for (std::size_t i = 0; i < n; ++i) {
      if (sizes[assign[i]] <= 1) continue;
      const float d =
          distance(data + i * dim, centroids[assign[i]].data(), dim, DistanceMetric::kSquaredL2);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == n) continue;
    const float* p = data + far * dim;
    centroids[c].assign(p, p + dim);
    --sizes[assign[far]];
    assign[far] = static_cast<std::uint32_t>(c);
    sizes[c] = 1;
    moved = true;
  }
  return moved;
}

}  // namespace

ClusteringResult balanced_kmeans(const float* data, std::size_t count, std::size_t dim,
                                 const KMeansParams& params) {
  const std::size_t k = params.k;
  if (k == 0) throw InvalidK("balanced_kmeans: k must be positive");
  if (k > count)
    throw InvalidK("balanced_kmeans: k=" + std::to_string(k) + " exceeds point count " +
                   std::to_string(count));
  if (!params.initial_centroids.empty() && params.initial_centroids.size() != k)
    throw InvalidK("balanced_kmeans: initial_centroids size mismatch");
  if (params.balance_slack < 1.0) throw ConfigError("balanced_kmeans: balance_slack must be >= 1");

  std::mt19937_64 rng(params.seed);
  ClusteringResult result;
  if (params.initial_centroids.empty()) {
    result.centroids = kmeanspp_seed(data, count, dim, k, rng);
  } else {
    result.centroids = params.initial_centroids;
    for (const auto& c : result.centroids)
      if (c.size() != dim) throw DimensionError("balanced_kmeans: initial centroid dim mismatch");
  }

  const std::size_t cap = capacity_for(count, k, params.balance_slack);
  result.assignments.assign(count, 0);
  std::vector<float> dist_matrix;

  if (params.iterations == 0) {
    fill_dist_matrix(data, count, dim, result.centroids, dist_matrix);
    constrained_assign(dist_matrix, count, k, cap, result.assignments, result.cluster_sizes);
  } else {
    for (std::uint32_t it = 0; it < params.iterations; ++it) {
      fill_dist_matrix(data, count, dim, result.centroids, dist_matrix);
      constrained_assign(dist_matrix, count, k, cap, result.assignments, result.cluster_sizes);
      recompute_means(data, count, dim, result.assignments, result.cluster_sizes, result.centroids);
      if (repair_empty_clusters(data, count, dim, result.assignments, result.cluster_sizes,
                                result.centroids))
        recompute_means(data, count, dim, result.assignments, result.cluster_sizes,
                        result.centroids);
    }
  }

  double err = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    err += distance(data + i * dim, result.centroids[result.assignments[i]].data(), dim,
                    DistanceMetric::kSquaredL2);
  result.error = count ? err / static_cast<double>(count) : 0.0;
  return result;
}

void knn_centroids(const float* query, std::span<const float* const> centroids, std::size_t dim,
                   std::size_t k, DistanceMetric metric, std::vector<std::uint32_t>& idx_out,
                   std::vector<float>& dist_out) {
  const std::size_t n = centroids.size();
  if (k == 0) throw InvalidK("knn_centroids: k must be positive");
  if (k > n)
    throw InvalidK("knn_centroids: k=" + std::to_string(k) + " exceeds centroid count " +
                   std::to_string(n));
  std::vector<std::pair<float, std::uint32_t>> scored(n);
  for (std::size_t i = 0; i < n; ++i)
    scored[i] = {distance(query, centroids[i], dim, metric), static_cast<std::uint32_t>(i)};
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  idx_out.resize(k);
  dist_out.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    idx_out[i] = scored[i].second;
    dist_out[i] = scored[i].first;
  }
}

std::pair<std::vector<std::uint32_t>, std::vector<float>> knn_centroids(
    std::span<const float> query, const std::vector<std::vector<float>>& centroids, std::size_t k,
    DistanceMetric metric) {
  std::vector<const float*> ptrs(centroids.size());
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    if (centroids[i].size() != query.size())
      throw DimensionError("knn_centroids: centroid dim mismatch");
    ptrs[i] = centroids[i].data();
  }
  std::pair<std::vector<std::uint32_t>, std::vector<float>> out;
  knn_centroids(query.data(), ptrs, query.size(), k, metric, out.first, out.second);
  return out;
}

}  // namespace dynivf
