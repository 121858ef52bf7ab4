#include "dynivf/index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <unordered_set>

namespace dynivf {

namespace {

std::size_t derive_partition_count(std::size_t live, std::size_t target_size) {
  if (live == 0) return 1;
  const std::size_t k =
      static_cast<std::size_t>(std::llround(static_cast<double>(live) / static_cast<double>(target_size)));
  return std::clamp<std::size_t>(k, 1, live);
}

}  // namespace

IvfIndex IvfIndex::build(const VectorDataset& dataset, const IndexConfig& config) {
  if (dataset.empty()) throw EmptyIndex("build: dataset is empty");
  std::size_t k = config.n_c != 0 ? config.n_c
                                  : derive_partition_count(dataset.size(), config.target_partition_size);
  if (k > dataset.size())
    throw InvalidK("build: n_c=" + std::to_string(k) + " exceeds dataset size " +
                   std::to_string(dataset.size()));

  IvfIndex index;
  index.dim_ = dataset.dim();
  index.config_ = config;
  index.delta_.capacity = config.delta_capacity;

  std::vector<float> data(dataset.data(), dataset.data() + dataset.size() * dataset.dim());
  std::vector<VectorId> ids = dataset.ids();
  IndexConfig& cfg = index.config_;
  const std::size_t saved_nc = cfg.n_c;
  cfg.n_c = k;
  index.rebuild_from(ids, data);
  cfg.n_c = saved_nc;
  return index;
}

void IvfIndex::rebuild_from(std::span<const VectorId> ids, const std::vector<float>& data) {
  const std::size_t count = ids.size();
  const std::size_t k = config_.n_c != 0
                            ? config_.n_c
                            : derive_partition_count(count, config_.target_partition_size);

  KMeansParams params;
  params.k = std::min(k, count);
  params.iterations = config_.build_iterations;
  params.balance_slack = config_.balance_slack;
  params.seed = config_.seed;
  ClusteringResult clustering = balanced_kmeans(data.data(), count, dim_, params);

  partitions_.clear();
  meta_.clear();
  id_map_.clear();
  delta_.ids.clear();
  delta_.data.clear();
  partitioned_count_ = 0;

  std::vector<PartitionId> cluster_pid(params.k, 0);
  for (std::size_t c = 0; c < params.k; ++c) {
    if (clustering.cluster_sizes[c] == 0) continue;
    const PartitionId pid = fresh_partition_id();
    cluster_pid[c] = pid;
    Partition part;
    part.id = pid;
    part.centroid = clustering.centroids[c];
    part.member_ids.reserve(clustering.cluster_sizes[c]);
    part.member_data.reserve(clustering.cluster_sizes[c] * dim_);
    partitions_.emplace(pid, std::move(part));
  }
  for (std::size_t i = 0; i < count; ++i) {
    Partition& part = partitions_.at(cluster_pid[clustering.assignments[i]]);
    part.member_ids.push_back(ids[i]);
    part.member_data.insert(part.member_data.end(), data.begin() + i * dim_,
                            data.begin() + (i + 1) * dim_);
    id_map_[ids[i]] = part.id;
  }
  for (auto& [pid, part] : partitions_) {
    part.member_assign_dist.resize(part.size());
    part.assign_dist_sum = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
      const float d =
          distance(part.member(i, dim_), part.centroid.data(), dim_, DistanceMetric::kSquaredL2);
      part.member_assign_dist[i] = d;
      part.assign_dist_sum += d;
    }
    PartitionMeta meta;
    meta.size = part.size();
    meta.mu0 = part.centroid;
    meta_.emplace(pid, std::move(meta));
    partitioned_count_ += part.size();
  }
  reset_baselines();
}

void IvfIndex::reset_baselines() {
  sigma0_ = partition_size_std(*this);
  double sum = 0.0;
  for (const auto& [pid, part] : partitions_) sum += part.assign_dist_sum;
  eps0_ = partitioned_count_ ? sum / static_cast<double>(partitioned_count_) : 0.0;
  n0_ = live_count();
  for (auto& [pid, meta] : meta_) {
    meta.mu0 = partitions_.at(pid).centroid;
    meta.temperature = 1.0;
    meta.score = 0.0;
  }
}

void IvfIndex::rebuild(std::size_t target_size) {
  std::vector<VectorId> ids;
  std::vector<float> data;
  collect_live(ids, data);
  if (ids.empty()) throw EmptyIndex("rebuild: no live vectors");
  if (target_size == 0) target_size = config_.target_partition_size;
  const std::size_t saved_nc = config_.n_c;
  config_.n_c = derive_partition_count(ids.size(), target_size);
  rebuild_from(ids, data);
  config_.n_c = saved_nc;
}

SearchResult IvfIndex::search(std::span<const float> query, std::size_t k, std::size_t n_p) const {
  if (k == 0) throw InvalidK("search: k must be positive");
  if (n_p == 0) throw InvalidK("search: n_p must be positive");
  if (query.size() != dim_) throw DimensionError("search: query dim mismatch");
  if (live_count() == 0) throw EmptyIndex("search: index is empty");

  SearchResult result;
  const std::size_t n_probe = std::min(n_p, partitions_.size());
  if (n_probe > 0) {
    std::vector<const float*> centroid_ptrs;
    std::vector<PartitionId> pids;
    centroid_ptrs.reserve(partitions_.size());
    pids.reserve(partitions_.size());
    for (const auto& [pid, part] : partitions_) {
      centroid_ptrs.push_back(part.centroid.data());
      pids.push_back(pid);
    }
    std::vector<std::uint32_t> idx;
    knn_centroids(query.data(), centroid_ptrs, dim_, n_probe, config_.metric, idx,
                  result.probed_dists);
    result.probed.reserve(n_probe);
    for (std::uint32_t i : idx) result.probed.push_back(pids[i]);
  }

  // Bounded max-heap over (distance, id); lexicographic order keeps ties on
  // lower id.
  std::priority_queue<std::pair<float, VectorId>> heap;
  auto offer = [&](float d, VectorId id) {
    if (heap.size() < k) {
      heap.emplace(d, id);
    } else if (std::pair<float, VectorId>(d, id) < heap.top()) {
      heap.pop();
      heap.emplace(d, id);
    }
  };

  for (PartitionId pid : result.probed) {
    const Partition& part = partitions_.at(pid);
    for (std::size_t i = 0; i < part.size(); ++i)
      offer(distance(query.data(), part.member(i, dim_), dim_, config_.metric),
            part.member_ids[i]);
    result.scanned += part.size();
  }
  for (std::size_t i = 0; i < delta_.size(); ++i)
    offer(distance(query.data(), delta_.data.data() + i * dim_, dim_, config_.metric),
          delta_.ids[i]);
  result.scanned += delta_.size();

  result.hits.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    result.hits[i] = {heap.top().second, heap.top().first};
    heap.pop();
  }
  return result;
}

InsertReport IvfIndex::insert(std::span<const VectorId> ids, const float* data) {
  InsertReport report;
  if (ids.empty()) return report;

  std::unordered_set<VectorId> seen;
  seen.reserve(ids.size());
  for (VectorId id : ids) {
    if (id_map_.count(id) || !seen.insert(id).second)
      throw DuplicateId("insert: id " + std::to_string(id) + " already present");
  }

  if (delta_.capacity > 0) {
    std::size_t pos = 0;
    while (pos < ids.size()) {
      if (delta_.size() >= delta_.capacity) {
        FlushReport flushed = flush_delta();
        ++report.flushes;
        for (PartitionId pid : flushed.modified) report.modified.push_back(pid);
      }
      const std::size_t take = std::min(delta_.capacity - delta_.size(), ids.size() - pos);
      for (std::size_t i = 0; i < take; ++i) {
        delta_.ids.push_back(ids[pos + i]);
        id_map_[ids[pos + i]] = kDeltaPartition;
      }
      delta_.data.insert(delta_.data.end(), data + pos * dim_, data + (pos + take) * dim_);
      report.to_delta += take;
      pos += take;
    }
  } else {
    route_into_partitions(ids, data, report.modified);
    report.routed = ids.size();
  }
  return report;
}

void IvfIndex::route_into_partitions(std::span<const VectorId> ids, const float* data,
                                     std::vector<PartitionId>& modified) {
  if (ids.empty()) return;

  // Degenerate case: nothing to route against, open a fresh partition.
  if (partitions_.empty()) {
    const PartitionId pid = fresh_partition_id();
    Partition part;
    part.id = pid;
    part.centroid.assign(dim_, 0.0f);
    std::vector<double> mean(dim_, 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < dim_; ++j) mean[j] += data[i * dim_ + j];
    for (std::size_t j = 0; j < dim_; ++j)
      part.centroid[j] = static_cast<float>(mean[j] / static_cast<double>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      part.member_ids.push_back(ids[i]);
      id_map_[ids[i]] = pid;
    }
    part.member_data.assign(data, data + ids.size() * dim_);
    part.member_assign_dist.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const float d =
          distance(part.member(i, dim_), part.centroid.data(), dim_, DistanceMetric::kSquaredL2);
      part.member_assign_dist[i] = d;
      part.assign_dist_sum += d;
    }
    PartitionMeta meta;
    meta.size = ids.size();
    meta.mu0 = part.centroid;
    meta_.emplace(pid, std::move(meta));
    partitions_.emplace(pid, std::move(part));
    partitioned_count_ += ids.size();
    modified.push_back(pid);
    return;
  }

  std::vector<const float*> centroid_ptrs;
  std::vector<PartitionId> pids;
  centroid_ptrs.reserve(partitions_.size());
  pids.reserve(partitions_.size());
  for (const auto& [pid, part] : partitions_) {
    centroid_ptrs.push_back(part.centroid.data());
    pids.push_back(pid);
  }

  // Assignment is always squared-L2, independent of the search metric.
  std::map<PartitionId, std::vector<std::size_t>> groups;
  std::vector<std::uint32_t> idx;
  std::vector<float> dist;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    knn_centroids(data + i * dim_, centroid_ptrs, dim_, 1, DistanceMetric::kSquaredL2, idx, dist);
    groups[pids[idx[0]]].push_back(i);
  }

  std::vector<float> group_data;
  for (auto& [pid, rows] : groups) {
    Partition& part = partitions_.at(pid);
    PartitionMeta& meta = meta_.at(pid);
    group_data.clear();
    for (std::size_t row : rows) {
      const float* v = data + row * dim_;
      group_data.insert(group_data.end(), v, v + dim_);
      const float d = distance(v, part.centroid.data(), dim_, DistanceMetric::kSquaredL2);
      part.member_ids.push_back(ids[row]);
      part.member_data.insert(part.member_data.end(), v, v + dim_);
      part.member_assign_dist.push_back(d);
      part.assign_dist_sum += d;
      id_map_[ids[row]] = pid;
    }
    update_partition_properties(meta, part.centroid, group_data.data(), rows.size(), dim_,
                                /*is_delete=*/false, centroid_tracking_);
    partitioned_count_ += rows.size();
    modified.push_back(pid);
  }
}

DeleteReport IvfIndex::remove(std::span<const VectorId> ids) {
  DeleteReport report;
  if (ids.empty()) return report;

  std::unordered_set<VectorId> seen;
  seen.reserve(ids.size());
  std::map<PartitionId, std::vector<VectorId>> by_partition;
  std::unordered_set<VectorId> delta_targets;
  for (VectorId id : ids) {
    auto it = id_map_.find(id);
    if (it == id_map_.end() || !seen.insert(id).second)
      throw NotFound("delete: id " + std::to_string(id) + " not present");
    if (it->second == kDeltaPartition)
      delta_targets.insert(id);
    else
      by_partition[it->second].push_back(id);
  }

  if (!delta_targets.empty()) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < delta_.size(); ++r) {
      if (delta_targets.count(delta_.ids[r])) continue;
      if (w != r) {
        delta_.ids[w] = delta_.ids[r];
        std::copy(delta_.data.begin() + r * dim_, delta_.data.begin() + (r + 1) * dim_,
                  delta_.data.begin() + w * dim_);
      }
      ++w;
    }
    delta_.ids.resize(w);
    delta_.data.resize(w * dim_);
    report.from_delta = delta_targets.size();
    for (VectorId id : delta_targets) id_map_.erase(id);
  }

  std::vector<float> removed_data;
  for (auto& [pid, victims] : by_partition) {
    Partition& part = partitions_.at(pid);
    PartitionMeta& meta = meta_.at(pid);
    std::unordered_set<VectorId> target(victims.begin(), victims.end());

    removed_data.clear();
    removed_data.reserve(victims.size() * dim_);
    std::size_t w = 0;
    for (std::size_t r = 0; r < part.size(); ++r) {
      if (target.count(part.member_ids[r])) {
        removed_data.insert(removed_data.end(), part.member_data.begin() + r * dim_,
                            part.member_data.begin() + (r + 1) * dim_);
        part.assign_dist_sum -= part.member_assign_dist[r];
        continue;
      }
      if (w != r) {
        part.member_ids[w] = part.member_ids[r];
        part.member_assign_dist[w] = part.member_assign_dist[r];
        std::copy(part.member_data.begin() + r * dim_, part.member_data.begin() + (r + 1) * dim_,
                  part.member_data.begin() + w * dim_);
      }
      ++w;
    }
    part.member_ids.resize(w);
    part.member_assign_dist.resize(w);
    part.member_data.resize(w * dim_);

    update_partition_properties(meta, part.centroid, removed_data.data(), victims.size(), dim_,
                                /*is_delete=*/true, centroid_tracking_);
    partitioned_count_ -= victims.size();
    report.from_partitions += victims.size();
    for (VectorId id : victims) id_map_.erase(id);

    if (meta.size == 0) {
      drop_partition(pid);
      report.removed_partitions.push_back(pid);
    } else {
      report.modified.push_back(pid);
    }
  }
  return report;
}

FlushReport IvfIndex::flush_delta() {
  FlushReport report;
  if (delta_.empty()) return report;
  std::vector<VectorId> ids = std::move(delta_.ids);
  std::vector<float> data = std::move(delta_.data);
  delta_.ids.clear();
  delta_.data.clear();
  route_into_partitions(ids, data.data(), report.modified);
  report.flushed = ids.size();
  return report;
}

std::vector<PartitionId> IvfIndex::replace_partitions(std::span<const PartitionId> victims,
                                                      const ClusteringResult& clustering,
                                                      std::span<const VectorId> pooled_ids,
                                                      const std::vector<float>& pooled_data) {
  double heat_weight = 0.0;
  double total_weight = 0.0;
  for (PartitionId pid : victims) {
    const PartitionMeta& meta = meta_.at(pid);
    heat_weight += meta.temperature * static_cast<double>(meta.size);
    total_weight += static_cast<double>(meta.size);
  }
  const double inherited =
      total_weight > 0.0 ? std::max(heat_weight / total_weight, 1.0) : 1.0;

  for (PartitionId pid : victims) {
    partitioned_count_ -= partitions_.at(pid).size();
    drop_partition(pid);
  }

  std::vector<PartitionId> created;
  const std::size_t k = clustering.centroids.size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < pooled_ids.size(); ++i)
    members[clustering.assignments[i]].push_back(i);

  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty()) continue;  // reassignment-only rounds can starve a seed
    const PartitionId pid = fresh_partition_id();
    Partition part;
    part.id = pid;
    part.centroid = clustering.centroids[c];
    part.member_ids.reserve(members[c].size());
    part.member_data.reserve(members[c].size() * dim_);
    part.member_assign_dist.reserve(members[c].size());
    for (std::size_t row : members[c]) {
      const float* v = pooled_data.data() + row * dim_;
      part.member_ids.push_back(pooled_ids[row]);
      part.member_data.insert(part.member_data.end(), v, v + dim_);
      const float d = distance(v, part.centroid.data(), dim_, DistanceMetric::kSquaredL2);
      part.member_assign_dist.push_back(d);
      part.assign_dist_sum += d;
      id_map_[pooled_ids[row]] = pid;
    }
    PartitionMeta meta;
    meta.size = part.size();
    meta.mu0 = part.centroid;
    meta.temperature = inherited;
    meta_.emplace(pid, std::move(meta));
    partitioned_count_ += part.size();
    partitions_.emplace(pid, std::move(part));
    created.push_back(pid);
  }
  return created;
}

void IvfIndex::drop_partition(PartitionId pid) {
  partitions_.erase(pid);
  meta_.erase(pid);
}

GlobalStats IvfIndex::stats() const {
  GlobalStats s;
  s.sigma0 = sigma0_;
  s.eps0 = eps0_;
  s.n0 = n0_;
  s.dim = dim_;
  s.sigma = partition_size_std(*this);
  double sum = 0.0;
  for (const auto& [pid, part] : partitions_) sum += part.assign_dist_sum;
  s.eps = partitioned_count_ ? sum / static_cast<double>(partitioned_count_) : 0.0;
  s.n = live_count();
  return s;
}

void IvfIndex::refresh_exact_error() {
  for (auto& [pid, part] : partitions_) {
    part.assign_dist_sum = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
      const float d =
          distance(part.member(i, dim_), part.centroid.data(), dim_, DistanceMetric::kSquaredL2);
      part.member_assign_dist[i] = d;
      part.assign_dist_sum += d;
    }
  }
}

const Partition& IvfIndex::partition(PartitionId pid) const {
  auto it = partitions_.find(pid);
  if (it == partitions_.end()) throw NotFound("partition " + std::to_string(pid));
  return it->second;
}

PartitionMeta& IvfIndex::meta_for(PartitionId pid) {
  auto it = meta_.find(pid);
  if (it == meta_.end()) throw NotFound("partition meta " + std::to_string(pid));
  return it->second;
}

void IvfIndex::audit() const {
  std::uint64_t total = 0;
  if (partitions_.size() != meta_.size()) throw InvariantError("audit: partition/meta key mismatch");
  for (const auto& [pid, part] : partitions_) {
    auto mit = meta_.find(pid);
    if (mit == meta_.end()) throw InvariantError("audit: missing meta for partition");
    if (part.size() == 0) throw InvariantError("audit: empty partition retained");
    if (mit->second.size != part.size()) throw InvariantError("audit: meta size mismatch");
    if (part.member_data.size() != part.size() * dim_ ||
        part.member_assign_dist.size() != part.size())
      throw InvariantError("audit: member array length mismatch");
    if (part.centroid.size() != dim_ || mit->second.mu0.size() != dim_)
      throw InvariantError("audit: centroid dim mismatch");
    if (mit->second.temperature < 1.0) throw InvariantError("audit: temperature below floor");
    for (std::size_t i = 0; i < part.size(); ++i) {
      auto it = id_map_.find(part.member_ids[i]);
      if (it == id_map_.end() || it->second != pid)
        throw InvariantError("audit: id_map does not point at owning partition");
    }
    total += part.size();
  }
  for (std::size_t i = 0; i < delta_.size(); ++i) {
    auto it = id_map_.find(delta_.ids[i]);
    if (it == id_map_.end() || it->second != kDeltaPartition)
      throw InvariantError("audit: delta entry missing from id_map");
  }
  if (delta_.capacity == 0 && !delta_.empty())
    throw InvariantError("audit: delta entries with zero capacity");
  if (delta_.capacity > 0 && delta_.size() > delta_.capacity)
    throw InvariantError("audit: delta store over capacity");
  if (total != partitioned_count_) throw InvariantError("audit: partitioned count drift");
  if (id_map_.size() != partitioned_count_ + delta_.size())
    throw InvariantError("audit: id_map size mismatch");
}

void IvfIndex::collect_live(std::vector<VectorId>& ids, std::vector<float>& data) const {
  ids.clear();
  data.clear();
  std::vector<std::pair<VectorId, const float*>> rows;
  rows.reserve(live_count());
  for (const auto& [pid, part] : partitions_)
    for (std::size_t i = 0; i < part.size(); ++i)
      rows.emplace_back(part.member_ids[i], part.member(i, dim_));
  for (std::size_t i = 0; i < delta_.size(); ++i)
    rows.emplace_back(delta_.ids[i], delta_.data.data() + i * dim_);
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ids.reserve(rows.size());
  data.reserve(rows.size() * dim_);
  for (const auto& [id, ptr] : rows) {
    ids.push_back(id);
    data.insert(data.end(), ptr, ptr + dim_);
  }
}

std::size_t IvfIndex::metadata_bytes() const {
  return partitions_.size() * (2 * dim_ * 4 + 3 * 4);
}

}  // namespace dynivf
