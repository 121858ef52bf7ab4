#include "dynivf/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dynivf/clustering.hpp"
#include "dynivf/io.hpp"

namespace dynivf {

using nlohmann::json;

namespace {

json spec_to_json(const WorkloadSpec& s) {
  json j;
  j["s0_count"] = s.s0_count;
  j["s0_fraction"] = s.s0_fraction;
  j["update_size"] = s.update_size;
  if (std::isinf(s.insert_delete_ratio))
    j["insert_delete_ratio"] = "inf";
  else
    j["insert_delete_ratio"] = s.insert_delete_ratio;
  j["update_csf"] = s.update_csf;
  j["read_write_ratio"] = s.read_write_ratio;
  j["rw_ratio_by_vectors"] = s.rw_ratio_by_vectors;
  j["query_csf"] = s.query_csf;
  j["query_cluster_pool_fraction"] = s.query_cluster_pool_fraction;
  j["query_batch_size"] = s.query_batch_size;
  j["n_gen_clusters"] = s.n_gen_clusters;
  j["total_ops"] = s.total_ops;
  j["k"] = s.k;
  j["seed"] = s.seed;
  return j;
}

WorkloadSpec spec_from_json(const json& j, WorkloadSpec s = {}) {
  s.s0_count = j.value("s0_count", s.s0_count);
  s.s0_fraction = j.value("s0_fraction", s.s0_fraction);
  s.update_size = j.value("update_size", s.update_size);
  if (j.contains("insert_delete_ratio")) {
    if (j["insert_delete_ratio"].is_string())
      s.insert_delete_ratio = std::numeric_limits<double>::infinity();
    else
      s.insert_delete_ratio = j["insert_delete_ratio"].get<double>();
  }
  s.update_csf = j.value("update_csf", s.update_csf);
  s.read_write_ratio = j.value("read_write_ratio", s.read_write_ratio);
  s.rw_ratio_by_vectors = j.value("rw_ratio_by_vectors", s.rw_ratio_by_vectors);
  s.query_csf = j.value("query_csf", s.query_csf);
  s.query_cluster_pool_fraction =
      j.value("query_cluster_pool_fraction", s.query_cluster_pool_fraction);
  s.query_batch_size = j.value("query_batch_size", s.query_batch_size);
  s.n_gen_clusters = j.value("n_gen_clusters", s.n_gen_clusters);
  s.total_ops = j.value("total_ops", s.total_ops);
  s.k = j.value("k", s.k);
  s.seed = j.value("seed", s.seed);
  return s;
}

// Per-cluster pools backing the locality sampling.
struct ClusterPools {
  // Rows not yet live; popped from the back. Deleted rows return here when
  // re-insertion is enabled.
  std::vector<std::vector<std::size_t>> available;
  // Live ids per cluster plus the position of each id for O(1) removal.
  std::vector<std::vector<VectorId>> live;
  struct LivePos {
    std::uint32_t cluster;
    std::size_t pos;
    std::size_t row;
  };
  std::unordered_map<VectorId, LivePos> live_pos;
  std::uint64_t live_total = 0;

  void add_live(VectorId id, std::uint32_t cluster, std::size_t row) {
    live_pos[id] = {cluster, live[cluster].size(), row};
    live[cluster].push_back(id);
    ++live_total;
  }

  std::size_t remove_live(VectorId id) {
    const LivePos at = live_pos.at(id);
    auto& list = live[at.cluster];
    const VectorId moved = list.back();
    list[at.pos] = moved;
    list.pop_back();
    if (moved != id) live_pos.at(moved).pos = at.pos;
    live_pos.erase(id);
    --live_total;
    return at.row;
  }
};

std::size_t round_fraction(double fraction, std::size_t count) {
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
  return std::max<std::size_t>(1, m);
}

}  // namespace

void apply_workload_spec_json(const std::string& text, WorkloadSpec& spec) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("workload spec: ") + e.what());
  }
  spec = spec_from_json(j, spec);
}

std::string workload_spec_to_json(const WorkloadSpec& spec) { return spec_to_json(spec).dump(2); }

std::vector<std::uint32_t> cluster_dataset(const VectorDataset& dataset, std::size_t n_clusters,
                                           std::uint64_t seed) {
  if (n_clusters == 0 || n_clusters > dataset.size())
    throw SpecError("cluster_dataset: invalid cluster count " + std::to_string(n_clusters));
  KMeansParams params;
  params.k = n_clusters;
  params.iterations = 10;
  params.balance_slack = 1e12;  // unconstrained: natural clusters drive locality
  params.seed = seed;
  auto result = balanced_kmeans(dataset.data(), dataset.size(), dataset.dim(), params);
  return result.assignments;
}

Trace generate(const VectorDataset& dataset, const WorkloadSpec& spec,
               const VectorDataset* queries) {
  const std::size_t n = dataset.size();
  const std::size_t dim = dataset.dim();
  if (n == 0) throw SpecError("generate: dataset is empty");
  if (spec.update_size == 0) throw SpecError("generate: update_size must be >= 1");
  if (!(spec.update_csf > 0.0) || spec.update_csf > 1.0)
    throw SpecError("generate: update_csf must be in (0,1]");
  if (spec.query_csf < 0.0 || spec.query_csf > 1.0)
    throw SpecError("generate: query_csf must be in [0,1]");
  if (queries && !queries->empty() && queries->dim() != dim)
    throw SpecError("generate: query dim mismatch");

  std::size_t s0 = spec.s0_count != 0
                       ? spec.s0_count
                       : static_cast<std::size_t>(
                             std::llround(spec.s0_fraction * static_cast<double>(n)));
  s0 = std::clamp<std::size_t>(s0, 1, n);

  std::size_t n_clusters =
      spec.n_gen_clusters != 0 ? spec.n_gen_clusters : std::max<std::size_t>(10, n / 10000);
  n_clusters = std::min(n_clusters, n);

  const bool insert_only = std::isinf(spec.insert_delete_ratio);
  const double search_share = spec.read_write_ratio / (1.0 + spec.read_write_ratio);
  const double insert_share =
      insert_only ? 1.0 : spec.insert_delete_ratio / (1.0 + spec.insert_delete_ratio);

  // Dry-run the deterministic schedule to count planned insert slots.
  {
    const double qbs = static_cast<double>(std::max<std::size_t>(1, spec.query_batch_size));
    double sc = 0.0, ic = 0.0;
    std::size_t insert_slots = 0;
    for (std::size_t t = 0; t < spec.total_ops; ++t) {
      if (spec.rw_ratio_by_vectors) {
        if (sc >= qbs) {
          sc -= qbs;
          continue;
        }
      } else {
        sc += search_share;
        if (sc >= 1.0) {
          sc -= 1.0;
          continue;
        }
      }
      ic += insert_share;
      if (ic >= 1.0) {
        ic -= 1.0;
        ++insert_slots;
      }
      if (spec.rw_ratio_by_vectors)
        sc += static_cast<double>(spec.update_size) * spec.read_write_ratio;
    }
    if (insert_only && s0 + insert_slots * spec.update_size > n)
      throw SpecError("generate: insert-only spec needs " +
                      std::to_string(s0 + insert_slots * spec.update_size) + " vectors, dataset has " +
                      std::to_string(n));
  }

  std::mt19937_64 rng(spec.seed);
  const std::vector<std::uint32_t> labels = cluster_dataset(dataset, n_clusters, spec.seed);

  // Initial set: uniform sample of s0 rows (partial Fisher-Yates).
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  for (std::size_t i = 0; i < s0; ++i) {
    const std::size_t j = i + rng_index(rng, n - i);
    std::swap(rows[i], rows[j]);
  }

  ClusterPools pools;
  pools.available.resize(n_clusters);
  pools.live.resize(n_clusters);
  for (std::size_t i = s0; i < n; ++i) pools.available[labels[rows[i]]].push_back(rows[i]);
  // Shuffle each pool so takes are random but deterministic.
  for (auto& pool : pools.available) {
    for (std::size_t i = pool.size(); i > 1; --i) {
      const std::size_t j = rng_index(rng, i);
      std::swap(pool[i - 1], pool[j]);
    }
    // Popping from the back of a sorted-by-shuffle list keeps locality intact.
  }

  Trace trace;
  trace.dim = dim;
  trace.seed = spec.seed;
  trace.spec = spec;

  // Initial insert: ids are the dataset rows.
  {
    TraceOp init;
    init.kind = TraceOpKind::kInsert;
    init.ids.reserve(s0);
    init.vectors.reserve(s0 * dim);
    std::vector<std::size_t> initial(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(s0));
    std::sort(initial.begin(), initial.end());
    for (std::size_t row : initial) {
      init.ids.push_back(static_cast<VectorId>(row));
      auto v = dataset.row(row);
      init.vectors.insert(init.vectors.end(), v.begin(), v.end());
      pools.add_live(static_cast<VectorId>(row), labels[row], row);
    }
    trace.ops.push_back(std::move(init));
  }

  std::vector<bool> row_used(n, false);
  for (std::size_t i = 0; i < s0; ++i) row_used[rows[i]] = true;
  VectorId next_fresh_id = static_cast<VectorId>(n);
  const std::size_t min_live = std::max<std::size_t>(1, spec.k);

  // Query cluster pool: a fixed random subset of clusters.
  std::vector<std::uint32_t> query_clusters;
  {
    std::vector<std::uint32_t> all(n_clusters);
    for (std::uint32_t c = 0; c < n_clusters; ++c) all[c] = c;
    for (std::size_t i = all.size(); i > 1; --i) {
      const std::size_t j = rng_index(rng, i);
      std::swap(all[i - 1], all[j]);
    }
    std::size_t take = n_clusters;
    if (spec.query_cluster_pool_fraction < 1.0)
      take = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::llround(spec.query_cluster_pool_fraction * static_cast<double>(n_clusters))));
    query_clusters.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(query_clusters.begin(), query_clusters.end());
  }
  std::vector<std::vector<std::size_t>> cluster_rows(n_clusters);
  for (std::size_t i = 0; i < n; ++i) cluster_rows[labels[i]].push_back(i);

  auto build_insert = [&](TraceOp& op) -> bool {
    std::vector<std::uint32_t> nonempty;
    for (std::uint32_t c = 0; c < n_clusters; ++c)
      if (!pools.available[c].empty()) nonempty.push_back(c);
    std::size_t gathered = 0;
    while (gathered < spec.update_size && !nonempty.empty()) {
      const std::size_t pick = rng_index(rng, nonempty.size());
      const std::uint32_t c = nonempty[pick];
      auto& pool = pools.available[c];
      std::size_t want = round_fraction(spec.update_csf, pool.size());
      want = std::min({want, pool.size(), spec.update_size - gathered});
      for (std::size_t i = 0; i < want; ++i) {
        const std::size_t row = pool.back();
        pool.pop_back();
        VectorId id;
        if (!row_used[row]) {
          row_used[row] = true;
          id = static_cast<VectorId>(row);
        } else {
          id = next_fresh_id++;
          trace.reinsertion = true;
        }
        op.ids.push_back(id);
        auto v = dataset.row(row);
        op.vectors.insert(op.vectors.end(), v.begin(), v.end());
        pools.add_live(id, c, row);
      }
      gathered += want;
      if (pool.empty()) nonempty.erase(nonempty.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    op.kind = TraceOpKind::kInsert;
    return gathered > 0;
  };

  auto build_delete = [&](TraceOp& op) -> bool {
    if (pools.live_total <= min_live) return false;
    const std::size_t budget =
        std::min<std::size_t>(spec.update_size, pools.live_total - min_live);
    std::vector<std::uint32_t> nonempty;
    for (std::uint32_t c = 0; c < n_clusters; ++c)
      if (!pools.live[c].empty()) nonempty.push_back(c);
    std::size_t gathered = 0;
    while (gathered < budget && !nonempty.empty()) {
      const std::size_t pick = rng_index(rng, nonempty.size());
      const std::uint32_t c = nonempty[pick];
      auto& list = pools.live[c];
      std::size_t want = round_fraction(spec.update_csf, list.size());
      want = std::min({want, list.size(), budget - gathered});
      for (std::size_t i = 0; i < want; ++i) {
        const VectorId id = list.back();
        op.ids.push_back(id);
        const std::size_t row = pools.remove_live(id);
        if (!insert_only) pools.available[labels[row]].push_back(row);
      }
      gathered += want;
      if (list.empty()) nonempty.erase(nonempty.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    op.kind = TraceOpKind::kDelete;
    return gathered > 0;
  };

  std::size_t query_cursor = 0;
  auto build_search = [&](TraceOp& op) {
    op.kind = TraceOpKind::kSearch;
    op.k = spec.k;
    const std::size_t q = std::max<std::size_t>(1, spec.query_batch_size);
    op.vectors.reserve(q * dim);
    if (queries && !queries->empty()) {
      for (std::size_t i = 0; i < q; ++i) {
        auto v = queries->row(query_cursor);
        query_cursor = (query_cursor + 1) % queries->size();
        op.vectors.insert(op.vectors.end(), v.begin(), v.end());
      }
    } else if (spec.query_csf > 0.0) {
      std::size_t gathered = 0;
      while (gathered < q) {
        const std::uint32_t c = query_clusters[rng_index(rng, query_clusters.size())];
        const auto& members = cluster_rows[c];
        if (members.empty()) continue;
        std::size_t want = round_fraction(spec.query_csf, members.size());
        want = std::min(want, q - gathered);
        for (std::size_t i = 0; i < want; ++i) {
          auto v = dataset.row(members[rng_index(rng, members.size())]);
          op.vectors.insert(op.vectors.end(), v.begin(), v.end());
        }
        gathered += want;
      }
    } else {
      for (std::size_t i = 0; i < q; ++i) {
        auto v = dataset.row(rng_index(rng, n));
        op.vectors.insert(op.vectors.end(), v.begin(), v.end());
      }
    }
    op.query_count = op.vectors.size() / dim;
  };

  double search_credit = 0.0;
  double insert_credit = 0.0;
  for (std::size_t t = 0; t < spec.total_ops; ++t) {
    if (spec.rw_ratio_by_vectors) {
      // Credit accrues per updated vector; a search batch is emitted once the
      // credit covers a full query batch.
      if (search_credit >= static_cast<double>(std::max<std::size_t>(1, spec.query_batch_size))) {
        search_credit -= static_cast<double>(std::max<std::size_t>(1, spec.query_batch_size));
        TraceOp op;
        build_search(op);
        trace.ops.push_back(std::move(op));
        continue;
      }
    } else {
      search_credit += search_share;
      if (search_credit >= 1.0) {
        search_credit -= 1.0;
        TraceOp op;
        build_search(op);
        trace.ops.push_back(std::move(op));
        continue;
      }
    }
    insert_credit += insert_share;
    TraceOp op;
    bool ok;
    if (insert_credit >= 1.0) {
      insert_credit -= 1.0;
      ok = build_insert(op);
      if (!ok) ok = build_delete(op);  // fresh pool exhausted
    } else {
      ok = build_delete(op);
      if (!ok) ok = build_insert(op);  // live floor reached
    }
    if (ok) {
      if (spec.rw_ratio_by_vectors)
        search_credit += static_cast<double>(op.ids.size()) * spec.read_write_ratio;
      trace.ops.push_back(std::move(op));
    }
  }

  validate_trace(trace);
  return trace;
}

void validate_trace(const Trace& trace) {
  std::unordered_set<VectorId> live;
  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    const TraceOp& op = trace.ops[i];
    switch (op.kind) {
      case TraceOpKind::kInsert:
        if (op.ids.empty()) throw SpecError("trace op " + std::to_string(i) + ": empty insert");
        if (op.vectors.size() != op.ids.size() * trace.dim)
          throw SpecError("trace op " + std::to_string(i) + ": insert payload size mismatch");
        for (VectorId id : op.ids)
          if (!live.insert(id).second)
            throw SpecError("trace op " + std::to_string(i) + ": duplicate insert of id " +
                            std::to_string(id));
        break;
      case TraceOpKind::kDelete:
        if (op.ids.empty()) throw SpecError("trace op " + std::to_string(i) + ": empty delete");
        for (VectorId id : op.ids)
          if (live.erase(id) == 0)
            throw SpecError("trace op " + std::to_string(i) + ": delete of absent id " +
                            std::to_string(id));
        if (live.empty()) throw SpecError("trace op " + std::to_string(i) + ": deleted last vector");
        break;
      case TraceOpKind::kSearch:
        if (live.empty())
          throw SpecError("trace op " + std::to_string(i) + ": search on empty live set");
        if (op.query_count == 0 || op.vectors.size() != op.query_count * trace.dim)
          throw SpecError("trace op " + std::to_string(i) + ": search payload size mismatch");
        break;
    }
  }
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  const std::filesystem::path sidecar_path = path.string() + ".fvecs";
  std::ofstream out(path);
  if (!out.is_open()) throw FormatError("save_trace: cannot open " + path.string());
  FvecsWriter sidecar(sidecar_path, trace.dim);

  json header;
  header["type"] = "header";
  header["version"] = 1;
  header["dim"] = trace.dim;
  header["seed"] = trace.seed;
  header["dataset"] = trace.dataset_ref;
  header["sidecar"] = sidecar_path.filename().string();
  header["reinsertion"] = trace.reinsertion;
  header["spec"] = spec_to_json(trace.spec);
  out << header.dump() << "\n";

  for (const TraceOp& op : trace.ops) {
    json line;
    switch (op.kind) {
      case TraceOpKind::kInsert: {
        line["op"] = "insert";
        line["ids"] = op.ids;
        line["off"] = sidecar.append(op.vectors.data(), op.ids.size());
        break;
      }
      case TraceOpKind::kDelete: {
        line["op"] = "delete";
        line["ids"] = op.ids;
        break;
      }
      case TraceOpKind::kSearch: {
        line["op"] = "search";
        line["k"] = op.k;
        line["count"] = op.query_count;
        line["off"] = sidecar.append(op.vectors.data(), op.query_count);
        break;
      }
    }
    out << line.dump() << "\n";
  }
  if (!out.good()) throw FormatError("save_trace: write failed");
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw FormatError("load_trace: cannot open " + path.string());

  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  std::size_t last_complete = 0;
  FvecsReader* sidecar = nullptr;
  std::unique_ptr<FvecsReader> sidecar_holder;

  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(path.string() + ": " + what + " (last complete line " +
                       std::to_string(last_complete) + ")");
  };

  while (std::getline(in, line)) {
    ++line_no;
    // getline leaves eofbit set only when the final line lacks its newline.
    if (in.eof()) throw fail("truncated final line " + std::to_string(line_no));
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail("malformed line " + std::to_string(line_no) + ": " + e.what());
    }
    if (line_no == 1) {
      if (j.value("type", "") != "header") throw fail("missing header line");
      trace.dim = j.at("dim").get<std::size_t>();
      trace.seed = j.value("seed", 0ULL);
      trace.dataset_ref = j.value("dataset", "");
      trace.reinsertion = j.value("reinsertion", false);
      if (j.contains("spec")) trace.spec = spec_from_json(j["spec"]);
      const std::string sidecar_name = j.at("sidecar").get<std::string>();
      sidecar_holder = std::make_unique<FvecsReader>(path.parent_path() / sidecar_name);
      sidecar = sidecar_holder.get();
      if (sidecar->count() > 0 && sidecar->dim() != trace.dim)
        throw fail("sidecar dim mismatch");
      last_complete = line_no;
      continue;
    }
    if (!sidecar) throw fail("operations before header");

    TraceOp op;
    const std::string kind = j.at("op").get<std::string>();
    if (kind == "insert") {
      op.kind = TraceOpKind::kInsert;
      op.ids = j.at("ids").get<std::vector<VectorId>>();
      sidecar->read(j.at("off").get<std::size_t>(), op.ids.size(), op.vectors);
    } else if (kind == "delete") {
      op.kind = TraceOpKind::kDelete;
      op.ids = j.at("ids").get<std::vector<VectorId>>();
    } else if (kind == "search") {
      op.kind = TraceOpKind::kSearch;
      op.k = j.at("k").get<std::size_t>();
      op.query_count = j.at("count").get<std::size_t>();
      sidecar->read(j.at("off").get<std::size_t>(), op.query_count, op.vectors);
    } else {
      throw fail("unknown op '" + kind + "' on line " + std::to_string(line_no));
    }
    trace.ops.push_back(std::move(op));
    last_complete = line_no;
  }
  if (line_no == 0) throw FormatError(path.string() + ": empty trace file");
  validate_trace(trace);
  return trace;
}

}  // namespace dynivf
