#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "dynivf/common.hpp"

namespace dynivf {

class IvfIndex;

// Per-partition tracked properties. The running centroid itself lives on the
// partition; together they make up two d-dim vectors (mu0 and mu) plus three
// scalars per partition.
struct PartitionMeta {
  std::uint64_t size = 0;
  std::vector<float> mu0;
  double temperature = 1.0;
  double score = 0.0;
};

// Global clustering statistics. Baseline fields (sigma0, eps0, n0) are frozen
// at build/rebuild time; current fields are refreshed from the index.
struct GlobalStats {
  double sigma0 = 0.0;
  double sigma = 0.0;
  double eps0 = 0.0;
  double eps = 0.0;
  std::uint64_t n0 = 0;
  std::uint64_t n = 0;
  std::size_t dim = 0;
};

// Upper clamp on temperatures; multiplicative heating is unbounded and a
// permanently hot partition would overflow a double on very long runs.
inline constexpr double kMaxTemperature = 1e30;

// Batch update rule for one partition: size moves by +/-|delta| and the
// running mean moves by (s_delta / new_size) * (mean(delta) - mu). The mean
// update is skipped when update_mean is false (frozen centroids) or when the
// partition empties (the caller removes it instead).
void update_partition_properties(PartitionMeta& meta, std::span<float> mu,
                                 const float* delta_data, std::size_t delta_count, std::size_t dim,
                                 bool is_delete, bool update_mean = true);

// Single-query temperature update. probed_ids/probed_dists come from the
// centroid KNN of one search, ascending by distance. Probed partitions heat
// by 1 + d_mu * eta where d_mu is the nearest-probed distance over the
// partition's own distance; all others cool by 1 - nu, floored at 1.0.
void update_temperature(std::map<PartitionId, PartitionMeta>& metas,
                        std::span<const PartitionId> probed_ids,
                        std::span<const float> probed_dists, double eta, double nu);

// Per-batch variant: one multiplicative step per query batch. A partition
// probed by any query heats by its largest scaled distance across the batch;
// everything else cools once.
void update_temperature_batch(std::map<PartitionId, PartitionMeta>& metas,
                              const std::vector<std::vector<PartitionId>>& probed_ids,
                              const std::vector<std::vector<float>>& probed_dists, double eta,
                              double nu);

// Exact MSE of partition-resident vectors against their partition centroid;
// delta-store vectors are excluded.
double compute_reconstruction_error(const IvfIndex& index);

// eps' = eps0 * (n0/n)^(1/d): the reconstruction error a from-scratch rebuild
// is estimated to achieve at the current vector count.
double estimate_ideal_error(const GlobalStats& stats);

// Population standard deviation of partition sizes.
double partition_size_std(const IvfIndex& index);
double population_std(std::span<const std::size_t> values);

}  // namespace dynivf
