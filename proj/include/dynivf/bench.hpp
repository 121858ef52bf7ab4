#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynivf/index.hpp"
#include "dynivf/maintenance.hpp"
#include "dynivf/workload.hpp"

namespace dynivf {

struct RunConfig {
  std::string trace_path;
  // Inline generation: used when trace_path is empty.
  std::string dataset_path;
  std::string query_path;
  std::optional<WorkloadSpec> gen_spec;

  IndexConfig index;
  MaintenancePolicy policy;
  double recall_target = 0.9;
  std::size_t k = 10;
  // Measure (ground truth + tuning + metrics row) every Nth search batch.
  std::size_t measure_cadence = 1;
  std::string output_prefix;
  std::uint64_t seed = 1;
  // Replaces wall-clock readings with operation-count proxies so repeated
  // runs emit byte-identical CSVs.
  bool deterministic_timing = false;
  std::size_t threads = 1;
  bool audit = true;
  // Apply the temperature rule per query (default) or once per search batch.
  bool temperature_per_query = true;
};

struct MetricsRow {
  std::size_t op_index = 0;
  std::uint64_t live_count = 0;
  std::size_t partition_count = 0;
  double sigma = 0.0;
  double eps = 0.0;
  double eps_prime = 0.0;
  double qps_at_target = 0.0;
  double mean_recall = 0.0;
  std::size_t n_p_used = 0;
  double cum_update_seconds = 0.0;
  double cum_maintenance_seconds = 0.0;
  std::size_t violators_this_step = 0;
};

struct RunSummary {
  std::string policy;
  double total_update_seconds = 0.0;
  double total_maintenance_seconds = 0.0;
  double mean_qps_at_target = 0.0;
  std::size_t final_partition_count = 0;
  std::uint64_t final_live_count = 0;
  std::uint64_t total_updated_vectors = 0;
  std::size_t rebuilds = 0;
  std::map<std::string, double> normalization;  // per-column max over the run
  std::vector<MetricsRow> rows;
};

// Mirror of the live vector set maintained directly from the trace; the
// ground-truth oracle runs against this, independent of the index.
class LiveSet {
 public:
  explicit LiveSet(std::size_t dim) : dim_(dim) {}

  void insert(VectorId id, const float* v) {
    pos_.emplace(id, ids_.size());
    ids_.push_back(id);
    data_.insert(data_.end(), v, v + dim_);
  }
  void remove(VectorId id) {
    const std::size_t at = pos_.at(id);
    const std::size_t last = ids_.size() - 1;
    if (at != last) {
      ids_[at] = ids_[last];
      std::copy(data_.begin() + last * dim_, data_.begin() + (last + 1) * dim_,
                data_.begin() + at * dim_);
      pos_[ids_[at]] = at;
    }
    ids_.pop_back();
    data_.resize(data_.size() - dim_);
    pos_.erase(id);
  }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<VectorId>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }

 private:
  std::size_t dim_;
  std::vector<VectorId> ids_;
  std::vector<float> data_;
  std::unordered_map<VectorId, std::size_t> pos_;
};

// Exact top-k over the live set by linear scan, ties by lower id. Lists are
// truncated (and *truncated set) when k exceeds the live count.
std::vector<std::vector<VectorId>> ground_truth(const LiveSet& live, const float* queries,
                                                std::size_t query_count, std::size_t k,
                                                DistanceMetric metric, bool* truncated = nullptr);

// |G intersect R| / k.
double recall(std::span<const VectorId> returned, std::span<const VectorId> truth, std::size_t k);

struct TuneResult {
  std::size_t n_p = 1;
  double mean_recall = 0.0;
  double qps = 0.0;
  bool target_reached = true;
  std::size_t scanned = 0;  // candidates scanned during the measured run
  // Per-query probe lists from the measured run, for temperature updates.
  std::vector<std::vector<PartitionId>> probed;
  std::vector<std::vector<float>> probed_dists;
};

// Smallest n_p (doubling then binary search) whose mean recall meets the
// target, plus QPS measured over the full batch at that n_p. Tuning
// evaluations are excluded from the timed measurement.
TuneResult tune_nprobe(const IvfIndex& index, const float* queries, std::size_t query_count,
                       std::size_t k, const std::vector<std::vector<VectorId>>& truth,
                       double recall_target, std::size_t threads = 1,
                       bool deterministic_timing = false);

// Replays the trace under the policy and collects the metric timeline.
// Writes <output_prefix>.csv and <output_prefix>.json when a prefix is set.
RunSummary run(const RunConfig& config);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_summary_json(const std::filesystem::path& path, const RunSummary& summary,
                        const RunConfig& config);

// Cross-run comparison table: normalizes per-column either to the maximum
// across runs or to the run with the rebuild policy.
std::string report_table(const std::vector<std::filesystem::path>& summary_paths,
                         const std::string& normalize_mode);

// Rewrites a metrics CSV with each metric column divided by its own maximum
// over the run (taken from the sibling summary JSON).
std::string normalized_timeline(const std::filesystem::path& csv_path);

// Overlays a JSON run-configuration document onto the given config; keys
// present in the document win over current values.
void apply_run_config_json(const std::string& text, RunConfig& config);

}  // namespace dynivf
