#include "dynivf/maintenance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace dynivf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

double norm_diff(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Pool of partitions feeding one reclustering round.
struct Pool {
  std::vector<VectorId> ids;
  std::vector<float> data;
  std::vector<std::vector<float>> seeds;
  std::vector<PartitionId> victims;

  void absorb_members(const Partition& part) {
    ids.insert(ids.end(), part.member_ids.begin(), part.member_ids.end());
    data.insert(data.end(), part.member_data.begin(), part.member_data.end());
    victims.push_back(part.id);
  }
};

void recluster_pool(IvfIndex& index, Pool& pool, std::size_t k, std::uint32_t iota,
                    bool seeded, MaintenanceReport& report) {
  KMeansParams params;
  params.k = k;
  params.iterations = iota;
  params.balance_slack = index.config().balance_slack;
  params.seed = hash_combine(index.config().seed, pool.victims.empty() ? 0 : pool.victims[0]);
  if (seeded) params.initial_centroids = pool.seeds;
  ClusteringResult clustering =
      balanced_kmeans(pool.data.data(), pool.ids.size(), index.dim(), params);
  auto created = index.replace_partitions(pool.victims, clustering, pool.ids, pool.data);
  report.removals += pool.victims.size();
  report.created += created.size();
  report.work_items += pool.ids.size() * std::max<std::uint64_t>(1, iota);
}

}  // namespace

const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFrozen: return "frozen";
    case PolicyKind::kUpdateCentroids: return "update";
    case PolicyKind::kPeriodicRebuild: return "rebuild";
    case PolicyKind::kDeDrift: return "dedrift";
    case PolicyKind::kLire: return "lire";
    case PolicyKind::kAdaIvf: return "adaivf";
  }
  return "unknown";
}

PolicyKind policy_from_name(const std::string& name) {
  if (name == "frozen") return PolicyKind::kFrozen;
  if (name == "update") return PolicyKind::kUpdateCentroids;
  if (name == "rebuild") return PolicyKind::kPeriodicRebuild;
  if (name == "dedrift") return PolicyKind::kDeDrift;
  if (name == "lire") return PolicyKind::kLire;
  if (name == "adaivf") return PolicyKind::kAdaIvf;
  throw ConfigError("unknown policy: " + name);
}

double size_deviation(std::size_t size, std::size_t tau_s) {
  const double s = static_cast<double>(size);
  const double target = static_cast<double>(tau_s);
  if (s >= target) return (s - target) / target;
  return (target - s) / s;
}

double local_indicator(PartitionMeta& meta, std::span<const float> mu,
                       const AdaIvfParams& params) {
  const double f_t = params.alpha * meta.temperature;
  const double f_s = size_deviation(meta.size, params.tau_s);
  const double mu0_norm = norm(meta.mu0);
  const double displacement = norm_diff(mu, meta.mu0);
  const double f_d = mu0_norm > 0.0 ? displacement / mu0_norm : displacement;
  const double f = f_t * (params.beta * f_s + (1.0 - params.beta) * f_d);
  meta.score = f;
  return f;
}

double global_indicator(const GlobalStats& stats, const AdaIvfParams& params) {
  const double sigma_dev = std::abs(stats.sigma - stats.sigma0);
  const double g_s = stats.sigma0 > 0.0 ? sigma_dev / stats.sigma0 : sigma_dev;
  const double ideal = estimate_ideal_error(stats);
  const double err_dev = std::abs(stats.eps - ideal);
  const double g_o = ideal > 0.0 ? err_dev / ideal : err_dev;
  return params.gamma * g_s + (1.0 - params.gamma) * g_o;
}

void local_reindex(IvfIndex& index, std::span<const PartitionId> violators, std::size_t tau_s,
                   std::size_t radius, std::uint32_t iota, MaintenanceReport& report) {
  if (violators.empty()) return;
  const std::size_t dim = index.dim();

  std::vector<PartitionId> ordered(violators.begin(), violators.end());
  std::sort(ordered.begin(), ordered.end());

  Pool pool;
  // Step 1: split oversized violators; their split centroids (or the whole
  // partition's centroid) seed the re-clustering.
  for (PartitionId pid : ordered) {
    const Partition& part = index.partition(pid);
    if (part.size() > tau_s) {
      KMeansParams split;
      split.k = (part.size() + tau_s - 1) / tau_s;
      split.iterations = iota;
      split.balance_slack = index.config().balance_slack;
      split.seed = hash_combine(index.config().seed, pid);
      ClusteringResult pieces =
          balanced_kmeans(part.member_data.data(), part.size(), dim, split);
      for (auto& c : pieces.centroids) pool.seeds.push_back(std::move(c));
      report.work_items += part.size() * std::max<std::uint64_t>(1, iota);
      ++report.splits;
    } else {
      pool.seeds.push_back(part.centroid);
    }
    pool.absorb_members(part);
  }

  // Step 2: pull in the nearest surviving partitions around every seed.
  {
    std::vector<PartitionId> survivor_ids;
    std::vector<const float*> survivor_centroids;
    std::set<PartitionId> removed(ordered.begin(), ordered.end());
    for (const auto& [pid, part] : index.partitions()) {
      if (removed.count(pid)) continue;
      survivor_ids.push_back(pid);
      survivor_centroids.push_back(part.centroid.data());
    }
    const std::size_t take = std::min(radius, survivor_ids.size());
    if (take > 0) {
      std::set<PartitionId> neighbors;
      std::vector<std::uint32_t> idx;
      std::vector<float> dist;
      for (const auto& seed : pool.seeds) {
        knn_centroids(seed.data(), survivor_centroids, dim, take, DistanceMetric::kSquaredL2,
                      idx, dist);
        for (std::uint32_t i : idx) neighbors.insert(survivor_ids[i]);
      }
      for (PartitionId pid : neighbors) {
        const Partition& part = index.partition(pid);
        pool.seeds.push_back(part.centroid);
        pool.absorb_members(part);
        ++report.merges;
      }
    }
  }

  if (pool.ids.empty()) return;

  // Step 3: recluster the pooled region seeded with the previous centroids.
  recluster_pool(index, pool, pool.seeds.size(), iota, /*seeded=*/true, report);
}

MaintenanceReport check_reindex(IvfIndex& index, const MaintenancePolicy& policy) {
  MaintenanceReport report;
  const auto start = Clock::now();
  const AdaIvfParams& p = policy.params;
  const bool lire = policy.kind == PolicyKind::kLire;

  for (auto& [pid, meta] : index.meta()) {
    bool violates;
    if (lire) {
      violates = meta.size < p.min_size || meta.size > p.max_size;
    } else {
      violates = local_indicator(meta, index.partition(pid).centroid, p) > p.tau_f;
    }
    if (violates) report.violators.push_back(pid);
  }

  if (!report.violators.empty())
    local_reindex(index, report.violators, p.tau_s, p.radius, lire ? 0 : p.iota, report);

  if (index.partitioned_count() > 0) {
    double g = global_indicator(index.stats(), p);
    if (g > p.tau_g) {
      // The tracked error is approximate; recompute exactly before committing
      // to a full rebuild.
      index.refresh_exact_error();
      g = global_indicator(index.stats(), p);
      if (g > p.tau_g) {
        report.work_items += index.live_count() * index.config().build_iterations;
        index.rebuild(p.tau_s);
        report.rebuild_triggered = true;
      }
    }
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

namespace {

MaintenanceReport run_dedrift(IvfIndex& index, const AdaIvfParams& p) {
  MaintenanceReport report;
  const auto start = Clock::now();
  const std::size_t k1 = std::max<std::size_t>(1, p.dedrift_k1);
  if (index.partition_count() >= 2) {
    std::vector<std::pair<std::size_t, PartitionId>> by_size;
    for (const auto& [pid, part] : index.partitions()) by_size.emplace_back(part.size(), pid);
    std::sort(by_size.begin(), by_size.end());

    std::set<PartitionId> chosen;
    for (std::size_t i = 0; i < k1 && i < by_size.size(); ++i) chosen.insert(by_size[i].second);
    for (std::size_t i = 0; i < k1 && i < by_size.size(); ++i)
      chosen.insert(by_size[by_size.size() - 1 - i].second);

    if (chosen.size() >= 2) {
      Pool pool;
      for (PartitionId pid : chosen) {
        const Partition& part = index.partition(pid);
        pool.seeds.push_back(part.centroid);
        pool.absorb_members(part);
      }
      // Partition count stays fixed: k equals the number collected.
      recluster_pool(index, pool, pool.seeds.size(), p.iota, /*seeded=*/true, report);
    }
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

}  // namespace

MaintenanceReport apply_policy_on_update(IvfIndex& index, MaintenanceState& state,
                                         const MaintenancePolicy& policy,
                                         const UpdateReport& update) {
  switch (policy.kind) {
    case PolicyKind::kFrozen:
    case PolicyKind::kUpdateCentroids:
      // Nothing beyond what the index update itself already did.
      return {};
    case PolicyKind::kPeriodicRebuild: {
      MaintenanceReport report;
      const auto start = Clock::now();
      state.modified_since_rebuild += update.modified_vectors;
      const double threshold =
          policy.params.rebuild_fraction * static_cast<double>(index.live_count());
      if (index.live_count() > 0 &&
          static_cast<double>(state.modified_since_rebuild) >= threshold) {
        report.work_items += index.live_count() * index.config().build_iterations;
        index.rebuild(policy.params.tau_s);
        report.rebuild_triggered = true;
        state.modified_since_rebuild = 0;
      }
      report.wall_seconds = seconds_since(start);
      return report;
    }
    case PolicyKind::kDeDrift:
      if (update.modified_partitions.empty()) return {};
      ++state.dedrift_batches;
      if (state.dedrift_batches % std::max<std::size_t>(1, policy.params.dedrift_epoch) != 0)
        return {};
      return run_dedrift(index, policy.params);
    case PolicyKind::kLire:
    case PolicyKind::kAdaIvf:
      // Updates absorbed by the delta store have not reached the index yet;
      // partition state is unchanged, so the reindexing check waits for the
      // flush that actually modifies partitions.
      if (update.modified_partitions.empty()) return {};
      return check_reindex(index, policy);
  }
  return {};
}

}  // namespace dynivf
