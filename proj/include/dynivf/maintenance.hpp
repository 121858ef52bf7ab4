#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynivf/index.hpp"

namespace dynivf {

enum class PolicyKind {
  kFrozen,
  kUpdateCentroids,
  kPeriodicRebuild,
  kDeDrift,
  kLire,
  kAdaIvf,
};

const char* policy_name(PolicyKind kind);
PolicyKind policy_from_name(const std::string& name);

// Shared parameter record; each policy kind reads the subset it needs.
struct AdaIvfParams {
  double alpha = 1.0;             // temperature scale in f_T
  double beta = 0.5;              // imbalance vs drift weight
  double tau_f = 0.5;             // local indicator threshold
  std::size_t tau_s = 1000;       // target partition size
  std::size_t radius = 25;        // reclustering radius r_c
  std::uint32_t iota = 5;         // local k-means iterations
  double gamma = 0.5;             // imbalance vs error weight in G
  double tau_g = 1.0;             // global indicator threshold
  double eta = 0.5;               // temperature heating factor
  double nu = 0.01;               // temperature cooling factor
  std::size_t min_size = 500;     // LIRE lower size bound
  std::size_t max_size = 2000;    // LIRE upper size bound
  double rebuild_fraction = 0.025;  // PeriodicRebuild trigger fraction
  std::size_t dedrift_k1 = 1;     // DeDrift: k1 largest and smallest
  std::size_t dedrift_epoch = 1;  // DeDrift cadence in update batches
};

struct MaintenancePolicy {
  PolicyKind kind = PolicyKind::kAdaIvf;
  AdaIvfParams params;
};

struct MaintenanceReport {
  std::vector<PartitionId> violators;
  std::size_t splits = 0;    // violators split to meet the target size
  std::size_t merges = 0;    // neighbor partitions pulled into the recluster
  std::size_t removals = 0;  // partitions removed
  std::size_t created = 0;   // partitions created
  bool rebuild_triggered = false;
  double wall_seconds = 0.0;
  // Vectors touched by reclustering or rebuild; deterministic cost proxy.
  std::uint64_t work_items = 0;
};

// Persistent policy-driver state across update batches.
struct MaintenanceState {
  std::uint64_t modified_since_rebuild = 0;
  std::uint64_t dedrift_batches = 0;
};

// Partitions modified by the last update batch, as reported by the index.
struct UpdateReport {
  std::uint64_t modified_vectors = 0;
  std::vector<PartitionId> modified_partitions;
};

// Local indicator f = (alpha*T) * (beta*f_s + (1-beta)*f_d). Updates
// meta.score. With a zero-norm mu0 the drift term degrades to the absolute
// displacement.
double local_indicator(PartitionMeta& meta, std::span<const float> mu, const AdaIvfParams& params);

// Size-deviation term of the local indicator.
double size_deviation(std::size_t size, std::size_t tau_s);

// Global indicator G = gamma*|sigma-sigma0|/sigma0 + (1-gamma)*|eps-eps'|/eps'.
// Degenerate baselines (sigma0 == 0 or eps' == 0) fall back to absolute
// deviations.
double global_indicator(const GlobalStats& stats, const AdaIvfParams& params);

// Splits violators above the target size, pools them with their radius
// nearest neighbor partitions, and re-clusters the region seeded from the
// previous centroid state.
void local_reindex(IvfIndex& index, std::span<const PartitionId> violators, std::size_t tau_s,
                   std::size_t radius, std::uint32_t iota, MaintenanceReport& report);

// Collects local violators and reindexes them, then applies the global
// fail-safe: if G still exceeds tau_g after an exact error refresh the whole
// index is rebuilt and baselines reset.
MaintenanceReport check_reindex(IvfIndex& index, const MaintenancePolicy& policy);

// Policy dispatch, called once after each update batch.
MaintenanceReport apply_policy_on_update(IvfIndex& index, MaintenanceState& state,
                                         const MaintenancePolicy& policy,
                                         const UpdateReport& update);

}  // namespace dynivf
