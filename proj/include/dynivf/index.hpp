#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "dynivf/clustering.hpp"
#include "dynivf/dataset.hpp"
#include "dynivf/distance.hpp"
#include "dynivf/tracking.hpp"

namespace dynivf {

struct IndexConfig {
  // Initial partition count; 0 means derive from target_partition_size.
  std::size_t n_c = 0;
  // Default probe count used when a caller does not pass one.
  std::size_t n_p = 8;
  DistanceMetric metric = DistanceMetric::kSquaredL2;
  std::size_t target_partition_size = 1000;
  std::size_t delta_capacity = 0;
  std::uint64_t seed = 0;
  std::uint32_t build_iterations = 10;
  double balance_slack = 1.25;
};

// One IVF cluster: parallel member arrays plus the running centroid.
// member_assign_dist caches each vector's squared distance to the centroid it
// was assigned against, which backs the incremental reconstruction-error
// accounting.
struct Partition {
  PartitionId id = 0;
  std::vector<float> centroid;
  std::vector<VectorId> member_ids;
  std::vector<float> member_data;
  std::vector<float> member_assign_dist;
  double assign_dist_sum = 0.0;

  std::size_t size() const { return member_ids.size(); }
  const float* member(std::size_t i, std::size_t dim) const { return member_data.data() + i * dim; }
};

// Fixed-capacity buffer of recent inserts; scanned exhaustively by every
// search and flushed into partitions when full.
struct DeltaStore {
  std::size_t capacity = 0;
  std::vector<VectorId> ids;
  std::vector<float> data;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

struct SearchResult {
  std::vector<std::pair<VectorId, float>> hits;  // ascending (distance, id)
  std::vector<PartitionId> probed;               // ascending by centroid distance
  std::vector<float> probed_dists;
  std::size_t scanned = 0;  // candidate vectors examined
};

struct InsertReport {
  std::size_t routed = 0;    // vectors appended directly to partitions
  std::size_t to_delta = 0;  // vectors parked in the delta store
  std::size_t flushes = 0;
  std::vector<PartitionId> modified;
};

struct DeleteReport {
  std::size_t from_partitions = 0;
  std::size_t from_delta = 0;
  std::vector<PartitionId> modified;
  std::vector<PartitionId> removed_partitions;
};

struct FlushReport {
  std::size_t flushed = 0;
  std::vector<PartitionId> modified;
};

class IvfIndex {
 public:
  // Offline construction: balanced k-means over the dataset with k = n_c
  // (or live/target_partition_size when n_c is 0), partitions populated from
  // the assignment, metadata and global baselines initialized.
  static IvfIndex build(const VectorDataset& dataset, const IndexConfig& config);

  // Scans the n_p partitions with nearest centroids plus the whole delta
  // store; ties broken by lower id. n_p is clamped to the partition count.
  SearchResult search(std::span<const float> query, std::size_t k, std::size_t n_p) const;
  SearchResult search(std::span<const float> query, std::size_t k) const {
    return search(query, k, config_.n_p);
  }

  // Batch insert; rejects atomically on duplicate ids. Vectors enter the
  // delta store when it has capacity, overflow triggers a flush first.
  InsertReport insert(std::span<const VectorId> ids, const float* data);
  // Batch delete; rejects atomically on unknown ids. Emptied partitions are
  // dropped from the index.
  DeleteReport remove(std::span<const VectorId> ids);
  // Routes all delta entries to their nearest partitions; no-op when empty.
  FlushReport flush_delta();

  // Maintenance surface: replaces the given partitions with freshly
  // clustered ones. New partitions get mu0 = mu, score 0 and the
  // size-weighted mean temperature of the sources.
  std::vector<PartitionId> replace_partitions(std::span<const PartitionId> victims,
                                              const ClusteringResult& clustering,
                                              std::span<const VectorId> pooled_ids,
                                              const std::vector<float>& pooled_data);

  // Rebuild from all live vectors (partitions + delta) and reset baselines;
  // the new partition count is live / target_size (the config target when 0).
  void rebuild(std::size_t target_size = 0);

  // Accessors.
  std::size_t dim() const { return dim_; }
  const IndexConfig& config() const { return config_; }
  const std::map<PartitionId, Partition>& partitions() const { return partitions_; }
  const std::map<PartitionId, PartitionMeta>& meta() const { return meta_; }
  std::map<PartitionId, PartitionMeta>& meta() { return meta_; }
  const DeltaStore& delta() const { return delta_; }
  const std::unordered_map<VectorId, PartitionId>& id_map() const { return id_map_; }
  std::size_t partition_count() const { return partitions_.size(); }
  std::uint64_t partitioned_count() const { return partitioned_count_; }
  std::uint64_t live_count() const { return partitioned_count_ + delta_.size(); }

  // Current global statistics: tracked eps, current sigma and n over the
  // frozen baselines.
  GlobalStats stats() const;
  // Replaces the tracked eps contributions with an exact recomputation.
  void refresh_exact_error();
  // Resets baselines (sigma0, eps0, n0) from the current clustering state and
  // clears temperatures, scores and mu0.
  void reset_baselines();

  // When false, running-mean centroid updates are suppressed on insert/delete
  // (frozen-centroid policies); sizes still move.
  bool centroid_tracking() const { return centroid_tracking_; }
  void set_centroid_tracking(bool enabled) { centroid_tracking_ = enabled; }

  const Partition& partition(PartitionId pid) const;
  PartitionMeta& meta_for(PartitionId pid);

  // Full consistency audit: id_map covers exactly the partition and delta
  // members, meta sizes match, counters match. Throws InvariantError.
  void audit() const;

  // Collects all live vectors in ascending id order.
  void collect_live(std::vector<VectorId>& ids, std::vector<float>& data) const;

  // Total tracked metadata footprint in bytes, using the 4-byte-per-field
  // accounting of two d-dim vectors plus three scalars per partition.
  std::size_t metadata_bytes() const;

 private:
  friend class SnapshotCodec;

  void rebuild_from(std::span<const VectorId> ids, const std::vector<float>& data);
  void route_into_partitions(std::span<const VectorId> ids, const float* data,
                             std::vector<PartitionId>& modified);
  PartitionId fresh_partition_id() { return next_partition_id_++; }
  void drop_partition(PartitionId pid);

  std::size_t dim_ = 0;
  IndexConfig config_;
  std::map<PartitionId, Partition> partitions_;
  std::map<PartitionId, PartitionMeta> meta_;
  std::unordered_map<VectorId, PartitionId> id_map_;
  DeltaStore delta_;
  PartitionId next_partition_id_ = 0;
  std::uint64_t partitioned_count_ = 0;
  bool centroid_tracking_ = true;

  double sigma0_ = 0.0;
  double eps0_ = 0.0;
  std::uint64_t n0_ = 0;
};

}  // namespace dynivf
