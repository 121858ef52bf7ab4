#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "dynivf/dataset.hpp"

namespace dynivf {

struct WorkloadSpec {
  // Initial set size: absolute count wins when nonzero, else a fraction of
  // the dataset.
  std::size_t s0_count = 0;
  double s0_fraction = 0.1;
  std::size_t update_size = 10000;  // s_u
  // Insert/delete batch ratio; infinity means insert-only.
  double insert_delete_ratio = std::numeric_limits<double>::infinity();
  double update_csf = 1.0;  // cluster sample fraction for updates, in (0,1]
  double read_write_ratio = 0.1;  // search batches per update batch
  // When true, read_write_ratio counts queries per updated vector instead of
  // search ops per update op.
  bool rw_ratio_by_vectors = false;
  // Cluster sample fraction for queries; 0 disables cluster-local queries
  // (external query file or uniform sampling instead).
  double query_csf = 0.0;
  // Fraction of generator clusters eligible as query sources (1.0 = all);
  // lets traces confine queries to a region of the space.
  double query_cluster_pool_fraction = 1.0;
  std::size_t query_batch_size = 100;
  std::size_t n_gen_clusters = 0;  // 0 = max(10, n/10000)
  std::size_t total_ops = 100;     // scheduled ops after the initial insert
  std::size_t k = 10;
  std::uint64_t seed = 1;
};

enum class TraceOpKind { kInsert, kDelete, kSearch };

struct TraceOp {
  TraceOpKind kind = TraceOpKind::kInsert;
  std::vector<VectorId> ids;   // insert / delete
  std::vector<float> vectors;  // flat; insert payload or search queries
  std::size_t query_count = 0;
  std::size_t k = 0;
};

// Ordered operation sequence. The first operation is always an InsertBatch
// holding the initial set the harness builds from.
struct Trace {
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  WorkloadSpec spec;
  std::string dataset_ref;
  bool reinsertion = false;  // ran short of fresh vectors at least once
  std::vector<TraceOp> ops;
};

// Clusters the dataset with plain (unconstrained) k-means for generator
// sampling; returns one label per dataset row.
std::vector<std::uint32_t> cluster_dataset(const VectorDataset& dataset, std::size_t n_clusters,
                                           std::uint64_t seed);

// Builds a trace by clustering the dataset and sampling cluster-local update
// and query batches. Queries come from the (optional) query set when given.
Trace generate(const VectorDataset& dataset, const WorkloadSpec& spec,
               const VectorDataset* queries = nullptr);

// Line-delimited JSON records with an fvecs sidecar holding insert and query
// vectors; the header line carries dim, seed and the generator settings.
void save_trace(const Trace& trace, const std::filesystem::path& path);
Trace load_trace(const std::filesystem::path& path);

// Walks the trace and verifies replay validity: no delete of an absent id,
// no duplicate insert, never searching an empty live set. Throws SpecError.
void validate_trace(const Trace& trace);

// JSON bridging for configuration files; overlay semantics (absent keys keep
// the current value).
void apply_workload_spec_json(const std::string& text, WorkloadSpec& spec);
std::string workload_spec_to_json(const WorkloadSpec& spec);

}  // namespace dynivf
