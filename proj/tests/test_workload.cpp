#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "dynivf/io.hpp"
#include "dynivf/workload.hpp"
#include "test_support.hpp"

using namespace dynivf;

namespace {

std::size_t count_ops(const Trace& trace, TraceOpKind kind, std::size_t from = 0) {
  std::size_t n = 0;
  for (std::size_t i = from; i < trace.ops.size(); ++i)
    if (trace.ops[i].kind == kind) ++n;
  return n;
}

}  // namespace

TEST_CASE("generate: insert-only traces contain zero delete batches") {
  auto mix = testsup::gaussian_mixture(5000, 8, 10, 201);
  WorkloadSpec spec;
  spec.s0_count = 1000;
  spec.update_size = 100;
  spec.total_ops = 30;
  spec.n_gen_clusters = 10;
  spec.query_batch_size = 20;
  spec.seed = 5;
  Trace trace = generate(mix.dataset, spec);
  CHECK(count_ops(trace, TraceOpKind::kDelete) == 0);
  CHECK(trace.ops[0].kind == TraceOpKind::kInsert);
  CHECK(trace.ops[0].ids.size() == 1000);
}

TEST_CASE("generate: full-cluster sampling keeps each update batch inside one generator cluster") {
  auto mix = testsup::gaussian_mixture(4000, 8, 8, 202);
  WorkloadSpec spec;
  spec.s0_count = 400;
  spec.update_size = 60;  // below the smallest cluster's remainder
  spec.update_csf = 1.0;
  spec.total_ops = 12;
  spec.read_write_ratio = 0.0;
  spec.n_gen_clusters = 8;
  spec.seed = 9;
  Trace trace = generate(mix.dataset, spec);

  const auto labels = cluster_dataset(mix.dataset, 8, spec.seed);
  for (std::size_t i = 1; i < trace.ops.size(); ++i) {
    const TraceOp& op = trace.ops[i];
    if (op.kind != TraceOpKind::kInsert) continue;
    std::unordered_set<std::uint32_t> batch_labels;
    for (VectorId id : op.ids) {
      REQUIRE(id < 4000);  // insert-only: ids are dataset rows
      batch_labels.insert(labels[id]);
    }
    CHECK(batch_labels.size() == 1);
  }
}

TEST_CASE("generate: read/write operation ratio tracks the target") {
  auto mix = testsup::gaussian_mixture(30000, 8, 10, 203);
  WorkloadSpec spec;
  spec.s0_count = 2000;
  spec.update_size = 200;
  spec.read_write_ratio = 0.1;
  spec.total_ops = 110;
  spec.n_gen_clusters = 10;
  spec.query_batch_size = 10;
  spec.seed = 77;
  Trace trace = generate(mix.dataset, spec);
  const double searches = static_cast<double>(count_ops(trace, TraceOpKind::kSearch));
  const double updates = static_cast<double>(count_ops(trace, TraceOpKind::kInsert, 1) +
                                             count_ops(trace, TraceOpKind::kDelete));
  const double realized = searches / updates;
  CHECK(std::abs(realized - 0.1) / 0.1 <= 0.10);
}

TEST_CASE("generate: vector-denominated read/write ratio tracks queries per vector") {
  auto mix = testsup::gaussian_mixture(30000, 8, 10, 215);
  WorkloadSpec spec;
  spec.s0_count = 2000;
  spec.update_size = 200;
  spec.read_write_ratio = 0.1;  // one query per ten updated vectors
  spec.rw_ratio_by_vectors = true;
  spec.total_ops = 120;
  spec.n_gen_clusters = 10;
  spec.query_batch_size = 20;
  spec.seed = 78;
  Trace trace = generate(mix.dataset, spec);
  std::size_t queries = 0, vectors = 0;
  for (std::size_t i = 1; i < trace.ops.size(); ++i) {
    const TraceOp& op = trace.ops[i];
    if (op.kind == TraceOpKind::kSearch)
      queries += op.query_count;
    else
      vectors += op.ids.size();
  }
  REQUIRE(vectors > 0);
  const double realized = static_cast<double>(queries) / static_cast<double>(vectors);
  CHECK(std::abs(realized - 0.1) / 0.1 <= 0.10);
}

TEST_CASE("generate: finite insert/delete ratio emits deletes that track the target") {
  auto mix = testsup::gaussian_mixture(20000, 8, 10, 204);
  WorkloadSpec spec;
  spec.s0_count = 5000;
  spec.update_size = 100;
  spec.insert_delete_ratio = 2.0;
  spec.read_write_ratio = 0.1;
  spec.total_ops = 120;
  spec.n_gen_clusters = 10;
  spec.query_batch_size = 10;
  spec.seed = 31;
  Trace trace = generate(mix.dataset, spec);
  const double inserts = static_cast<double>(count_ops(trace, TraceOpKind::kInsert, 1));
  const double deletes = static_cast<double>(count_ops(trace, TraceOpKind::kDelete));
  REQUIRE(deletes > 0);
  CHECK(std::abs(inserts / deletes - 2.0) / 2.0 <= 0.15);
  validate_trace(trace);
}

TEST_CASE("generate: infeasible insert-only spec is rejected") {
  auto mix = testsup::gaussian_mixture(1000, 4, 4, 205);
  WorkloadSpec spec;
  spec.s0_count = 900;
  spec.update_size = 100;
  spec.total_ops = 20;
  spec.read_write_ratio = 0.0;
  spec.n_gen_clusters = 4;
  CHECK_THROWS_AS(generate(mix.dataset, spec), SpecError);
}

TEST_CASE("generate: locality audit, clustered batches are tighter than uniform ones") {
  auto mix = testsup::gaussian_mixture(30000, 8, 10, 206, /*spread=*/2.0, /*sigma=*/0.3);
  WorkloadSpec spec;
  spec.s0_count = 1000;
  spec.update_size = 100;
  spec.update_csf = 1.0;
  spec.read_write_ratio = 0.0;
  spec.total_ops = 100;
  spec.n_gen_clusters = 10;
  spec.seed = 11;
  Trace trace = generate(mix.dataset, spec);

  auto mean_pairwise = [&](const std::vector<float>& flat, std::size_t count) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t b = a + 1; b < count; ++b) {
        sum += distance(flat.data() + a * 8, flat.data() + b * 8, 8,
                        DistanceMetric::kSquaredL2);
        ++pairs;
      }
    return sum / static_cast<double>(pairs);
  };

  std::vector<double> localized;
  for (std::size_t i = 1; i < trace.ops.size() && localized.size() < 100; ++i) {
    const TraceOp& op = trace.ops[i];
    if (op.kind != TraceOpKind::kInsert || op.ids.size() < 2) continue;
    localized.push_back(mean_pairwise(op.vectors, op.ids.size()));
  }
  REQUIRE(localized.size() >= 50);

  std::mt19937_64 rng(207);
  std::vector<double> uniform;
  for (std::size_t trial = 0; trial < localized.size(); ++trial) {
    std::vector<float> flat;
    for (int i = 0; i < 100; ++i) {
      auto v = mix.dataset.row(rng_index(rng, mix.dataset.size()));
      flat.insert(flat.end(), v.begin(), v.end());
    }
    uniform.push_back(mean_pairwise(flat, 100));
  }
  std::sort(localized.begin(), localized.end());
  std::sort(uniform.begin(), uniform.end());
  const double localized_p95 = localized[localized.size() * 95 / 100];
  const double uniform_p05 = uniform[uniform.size() * 5 / 100];
  CHECK(localized_p95 < uniform_p05);
}

TEST_CASE("trace: save/load round-trip is structurally identical") {
  testsup::TempDir tmp;
  auto mix = testsup::gaussian_mixture(3000, 8, 6, 208);
  WorkloadSpec spec;
  spec.s0_count = 500;
  spec.update_size = 50;
  spec.insert_delete_ratio = 3.0;
  spec.total_ops = 40;
  spec.n_gen_clusters = 6;
  spec.query_batch_size = 10;
  spec.seed = 13;
  Trace trace = generate(mix.dataset, spec);
  trace.dataset_ref = "mixture";

  const auto path = tmp.file("trace.jsonl");
  save_trace(trace, path);
  Trace back = load_trace(path);

  CHECK(back.dim == trace.dim);
  CHECK(back.seed == trace.seed);
  CHECK(back.dataset_ref == trace.dataset_ref);
  REQUIRE(back.ops.size() == trace.ops.size());
  for (std::size_t i = 0; i < trace.ops.size(); ++i) {
    CHECK(back.ops[i].kind == trace.ops[i].kind);
    CHECK(back.ops[i].ids == trace.ops[i].ids);
    CHECK(back.ops[i].vectors == trace.ops[i].vectors);
    CHECK(back.ops[i].k == trace.ops[i].k);
  }
}

TEST_CASE("trace: generation and serialization are byte-deterministic") {
  testsup::TempDir tmp;
  auto mix = testsup::gaussian_mixture(3000, 8, 6, 209);
  WorkloadSpec spec;
  spec.s0_count = 400;
  spec.update_size = 50;
  spec.total_ops = 30;
  spec.n_gen_clusters = 6;
  spec.seed = 21;

  // Same file name in two directories so the header's sidecar reference
  // matches byte for byte.
  std::filesystem::create_directories(tmp.file("a"));
  std::filesystem::create_directories(tmp.file("b"));
  const auto path_a = tmp.file("a") / "trace.jsonl";
  const auto path_b = tmp.file("b") / "trace.jsonl";
  Trace a = generate(mix.dataset, spec);
  Trace b = generate(mix.dataset, spec);
  save_trace(a, path_a);
  save_trace(b, path_b);
  CHECK(testsup::read_file_bytes(path_a) == testsup::read_file_bytes(path_b));
  CHECK(testsup::read_file_bytes(std::filesystem::path(path_a.string() + ".fvecs")) ==
        testsup::read_file_bytes(std::filesystem::path(path_b.string() + ".fvecs")));
}

TEST_CASE("trace: truncated final line names the last complete line") {
  testsup::TempDir tmp;
  auto mix = testsup::gaussian_mixture(2000, 8, 4, 210);
  WorkloadSpec spec;
  spec.s0_count = 300;
  spec.update_size = 50;
  spec.total_ops = 10;
  spec.n_gen_clusters = 4;
  Trace trace = generate(mix.dataset, spec);
  const auto path = tmp.file("trunc.jsonl");
  save_trace(trace, path);

  auto bytes = testsup::read_file_bytes(path);
  bytes.resize(bytes.size() - 10);  // chop the newline and part of the last op
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_trace(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("last complete line") != std::string::npos);
  }
}

TEST_CASE("trace: hand-written three-operation fixture parses") {
  testsup::TempDir tmp;
  const auto side = tmp.file("mini.jsonl.fvecs");
  {
    // Three records, dim 2: two insert vectors then one query.
    FvecsWriter w(side, 2);
    const float rows[6] = {1.0f, 2.0f, 3.0f, 4.0f, 0.5f, 0.5f};
    w.append(rows, 3);
  }
  const auto path = tmp.file("mini.jsonl");
  {
    std::ofstream out(path);
    out << R"({"type":"header","version":1,"dim":2,"seed":9,"sidecar":"mini.jsonl.fvecs"})" << "\n";
    out << R"({"op":"insert","ids":[10,11],"off":0})" << "\n";
    out << R"({"op":"search","k":1,"count":1,"off":2})" << "\n";
    out << R"({"op":"delete","ids":[11]})" << "\n";
  }
  Trace trace = load_trace(path);
  REQUIRE(trace.ops.size() == 3);
  CHECK(trace.ops[0].kind == TraceOpKind::kInsert);
  CHECK(trace.ops[0].ids == std::vector<VectorId>{10, 11});
  CHECK(trace.ops[0].vectors == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(trace.ops[1].kind == TraceOpKind::kSearch);
  CHECK(trace.ops[1].k == 1);
  CHECK(trace.ops[1].vectors == std::vector<float>{0.5f, 0.5f});
  CHECK(trace.ops[2].kind == TraceOpKind::kDelete);
  CHECK(trace.ops[2].ids == std::vector<VectorId>{11});
}

TEST_CASE("trace: malformed line reports its number") {
  testsup::TempDir tmp;
  const auto side = tmp.file("bad.jsonl.fvecs");
  { FvecsWriter w(side, 2); }
  const auto path = tmp.file("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"type":"header","version":1,"dim":2,"seed":1,"sidecar":"bad.jsonl.fvecs"})" << "\n";
    out << "not json at all\n";
  }
  try {
    load_trace(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("validate_trace: rejects replay-invalid sequences") {
  Trace trace;
  trace.dim = 1;
  TraceOp ins;
  ins.kind = TraceOpKind::kInsert;
  ins.ids = {1};
  ins.vectors = {0.5f};
  trace.ops.push_back(ins);

  TraceOp bad_delete;
  bad_delete.kind = TraceOpKind::kDelete;
  bad_delete.ids = {7};
  auto broken = trace;
  broken.ops.push_back(bad_delete);
  CHECK_THROWS_AS(validate_trace(broken), SpecError);

  auto dup = trace;
  dup.ops.push_back(ins);
  CHECK_THROWS_AS(validate_trace(dup), SpecError);

  // Deleting the last vector then searching is invalid.
  auto empty_search = trace;
  TraceOp del;
  del.kind = TraceOpKind::kDelete;
  del.ids = {1};
  empty_search.ops.push_back(del);
  CHECK_THROWS_AS(validate_trace(empty_search), SpecError);
}

TEST_CASE("generate: query cluster pool confines queries to a cluster subset") {
  auto mix = testsup::gaussian_mixture(12000, 8, 10, 211, /*spread=*/3.0, /*sigma=*/0.25);
  WorkloadSpec spec;
  spec.s0_count = 2000;
  spec.update_size = 100;
  spec.update_csf = 0.05;
  spec.read_write_ratio = 0.5;
  spec.query_csf = 1.0;
  spec.query_cluster_pool_fraction = 0.2;  // 2 of 10 clusters
  spec.query_batch_size = 25;
  spec.total_ops = 60;
  spec.n_gen_clusters = 10;
  spec.seed = 99;
  Trace trace = generate(mix.dataset, spec);

  // Queries are dataset vectors; recover their generator label by nearest
  // cluster membership (exact match since queries are copied rows).
  const auto labels = cluster_dataset(mix.dataset, 10, spec.seed);
  std::unordered_set<std::uint32_t> seen;
  for (const TraceOp& op : trace.ops) {
    if (op.kind != TraceOpKind::kSearch) continue;
    for (std::size_t q = 0; q < op.query_count; ++q) {
      const float* query = op.vectors.data() + q * 8;
      // Find the matching dataset row (vectors are bit-copied rows).
      bool found = false;
      for (std::size_t i = 0; i < mix.dataset.size() && !found; ++i) {
        if (std::equal(query, query + 8, mix.dataset.row(i).data())) {
          seen.insert(labels[i]);
          found = true;
        }
      }
      REQUIRE(found);
    }
  }
  CHECK(seen.size() <= 2);
}
