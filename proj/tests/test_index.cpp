#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "dynivf/index.hpp"
#include "test_support.hpp"

using namespace dynivf;

namespace {

// Live-set mirror used as an independent oracle against the index.
struct Shadow {
  std::vector<VectorId> ids;
  std::vector<float> data;
  std::size_t dim;

  explicit Shadow(const VectorDataset& ds) : dim(ds.dim()) {
    ids = ds.ids();
    data.assign(ds.data(), ds.data() + ds.size() * ds.dim());
  }
  void insert(VectorId id, std::span<const float> v) {
    ids.push_back(id);
    data.insert(data.end(), v.begin(), v.end());
  }
  void remove(VectorId id) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] != id) continue;
      ids[i] = ids.back();
      std::copy(data.end() - static_cast<std::ptrdiff_t>(dim), data.end(),
                data.begin() + static_cast<std::ptrdiff_t>(i * dim));
      ids.pop_back();
      data.resize(data.size() - dim);
      return;
    }
  }
};

}  // namespace

TEST_CASE("build: n_c distinct points become singleton partitions with zero error") {
  VectorDataset ds(2);
  for (int i = 0; i < 5; ++i) {
    std::vector<float> v{static_cast<float>(i * 3), static_cast<float>(-i)};
    ds.insert(static_cast<VectorId>(i), v);
  }
  IndexConfig cfg;
  cfg.n_c = 5;
  cfg.seed = 4;
  auto index = IvfIndex::build(ds, cfg);
  CHECK(index.partition_count() == 5);
  for (const auto& [pid, part] : index.partitions()) CHECK(part.size() == 1);
  CHECK(index.stats().eps0 == doctest::Approx(0.0));
  index.audit();
}

TEST_CASE("build: sizes conserve and respect the balance cap") {
  auto mix = testsup::gaussian_mixture(10000, 8, 10, 50);
  IndexConfig cfg;
  cfg.n_c = 10;
  cfg.seed = 9;
  cfg.balance_slack = 1.25;
  auto index = IvfIndex::build(mix.dataset, cfg);
  std::size_t total = 0;
  const std::size_t cap = static_cast<std::size_t>(std::ceil(1000.0 * 1.25));
  for (const auto& [pid, part] : index.partitions()) {
    total += part.size();
    CHECK(part.size() <= cap);
  }
  CHECK(total == 10000);
  index.audit();
}

TEST_CASE("build: deterministic for the same dataset and seed") {
  auto mix = testsup::gaussian_mixture(1000, 8, 5, 60);
  IndexConfig cfg;
  cfg.n_c = 5;
  cfg.seed = 42;
  auto a = IvfIndex::build(mix.dataset, cfg);
  auto b = IvfIndex::build(mix.dataset, cfg);
  REQUIRE(a.partition_count() == b.partition_count());
  auto ita = a.partitions().begin();
  auto itb = b.partitions().begin();
  for (; ita != a.partitions().end(); ++ita, ++itb) {
    CHECK(ita->second.centroid == itb->second.centroid);
    CHECK(ita->second.member_ids == itb->second.member_ids);
  }
}

TEST_CASE("build: n_c larger than the dataset throws") {
  VectorDataset ds(1);
  std::vector<float> v{0.0f};
  ds.insert(0, v);
  IndexConfig cfg;
  cfg.n_c = 2;
  CHECK_THROWS_AS(IvfIndex::build(ds, cfg), InvalidK);
}

TEST_CASE("search: probing all partitions matches the brute-force oracle exactly") {
  auto mix = testsup::gaussian_mixture(3000, 8, 12, 70);
  IndexConfig cfg;
  cfg.n_c = 12;
  cfg.seed = 10;
  auto index = IvfIndex::build(mix.dataset, cfg);
  Shadow shadow(mix.dataset);

  std::mt19937_64 rng(71);
  for (int q = 0; q < 40; ++q) {
    std::vector<float> query(8);
    for (auto& x : query) x = static_cast<float>(rng_unit(rng) * 2 - 1);
    auto got = index.search(query, 10, index.partition_count());
    auto expect = testsup::brute_force_topk(shadow.ids, shadow.data, 8, query, 10,
                                            DistanceMetric::kSquaredL2);
    REQUIRE(got.hits.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(got.hits[i].first == expect[i].first);
      CHECK(got.hits[i].second == expect[i].second);
    }
  }
}

TEST_CASE("search: a query equal to an indexed vector returns it at distance zero") {
  auto mix = testsup::gaussian_mixture(500, 6, 3, 80);
  IndexConfig cfg;
  cfg.n_c = 3;
  cfg.seed = 11;
  auto index = IvfIndex::build(mix.dataset, cfg);
  auto v = mix.dataset.vector(123);
  auto result = index.search(v, 1, index.partition_count());
  REQUIRE(result.hits.size() == 1);
  CHECK(result.hits[0].first == 123);
  CHECK(result.hits[0].second == 0.0f);
}

TEST_CASE("search: delta-only index is scannable; fully empty index throws") {
  VectorDataset ds(2);
  std::vector<float> v{1.0f, 1.0f};
  ds.insert(0, v);
  IndexConfig cfg;
  cfg.n_c = 1;
  cfg.delta_capacity = 4;
  auto index = IvfIndex::build(ds, cfg);

  std::vector<VectorId> add{7};
  std::vector<float> vec{3.0f, 3.0f};
  index.insert(add, vec.data());            // parked in delta
  std::vector<VectorId> gone{0};
  index.remove(gone);                        // empties and removes the partition
  CHECK(index.partition_count() == 0);
  CHECK(index.delta().size() == 1);

  std::vector<float> q{3.0f, 3.0f};
  auto result = index.search(q, 1, 1);
  REQUIRE(result.hits.size() == 1);
  CHECK(result.hits[0].first == 7);
  CHECK(result.hits[0].second == 0.0f);
  index.audit();

  std::vector<VectorId> last{7};
  index.remove(last);
  CHECK_THROWS_AS(index.search(q, 1, 1), EmptyIndex);
  CHECK_THROWS_AS(index.search(q, 0, 1), InvalidK);
}

TEST_CASE("insert: single vector joins the partition with the nearest centroid") {
  VectorDataset ds(1);
  for (int i = 0; i < 4; ++i) {
    std::vector<float> v{static_cast<float>(i * 10)};
    ds.insert(static_cast<VectorId>(i), v);
  }
  IndexConfig cfg;
  cfg.n_c = 4;
  cfg.seed = 3;
  auto index = IvfIndex::build(ds, cfg);

  // Nearest centroid to 21 is the partition holding 20.
  PartitionId expected = index.id_map().at(2);
  const std::size_t before = index.partition(expected).size();
  std::vector<VectorId> ids{100};
  std::vector<float> vec{21.0f};
  auto report = index.insert(ids, vec.data());
  CHECK(report.routed == 1);
  CHECK(index.partition(expected).size() == before + 1);
  CHECK(index.id_map().at(100) == expected);
  CHECK(index.meta().at(expected).size == before + 1);
  index.audit();
}

TEST_CASE("insert: batch of 100 grows the index by exactly 100") {
  auto mix = testsup::gaussian_mixture(2000, 8, 5, 90);
  IndexConfig cfg;
  cfg.n_c = 5;
  cfg.seed = 8;
  auto index = IvfIndex::build(mix.dataset, cfg);
  const std::uint64_t before = index.live_count();

  std::mt19937_64 rng(91);
  std::vector<VectorId> ids;
  std::vector<float> data;
  for (int i = 0; i < 100; ++i) {
    ids.push_back(10000 + static_cast<VectorId>(i));
    for (int j = 0; j < 8; ++j) data.push_back(static_cast<float>(rng_unit(rng)));
  }
  index.insert(ids, data.data());
  CHECK(index.live_count() == before + 100);
  index.audit();
}

TEST_CASE("insert: delta capacity of ten flushes once on the eleventh insert") {
  VectorDataset ds(1);
  for (int i = 0; i < 4; ++i) {
    std::vector<float> v{static_cast<float>(i)};
    ds.insert(static_cast<VectorId>(i), v);
  }
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 1;
  cfg.delta_capacity = 10;
  auto index = IvfIndex::build(ds, cfg);

  std::size_t flushes = 0;
  for (int i = 0; i < 11; ++i) {
    std::vector<VectorId> ids{100 + static_cast<VectorId>(i)};
    std::vector<float> vec{static_cast<float>(i) * 0.1f};
    auto report = index.insert(ids, vec.data());
    flushes += report.flushes;
  }
  CHECK(flushes == 1);
  CHECK(index.delta().size() == 1);
  CHECK(index.live_count() == 4 + 11);
  index.audit();
}

TEST_CASE("insert: duplicate ids reject the whole batch atomically") {
  auto mix = testsup::gaussian_mixture(100, 4, 2, 95);
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 6;
  auto index = IvfIndex::build(mix.dataset, cfg);
  const std::uint64_t before = index.live_count();

  std::vector<VectorId> ids{500, 42};  // 42 already present
  std::vector<float> data(8, 0.0f);
  CHECK_THROWS_AS(index.insert(ids, data.data()), DuplicateId);
  CHECK(index.live_count() == before);
  CHECK_FALSE(index.id_map().count(500));

  std::vector<VectorId> twice{600, 600};
  CHECK_THROWS_AS(index.insert(twice, data.data()), DuplicateId);
  CHECK(index.live_count() == before);
  index.audit();
}

TEST_CASE("delete: removed id no longer appears in full-probe search") {
  auto mix = testsup::gaussian_mixture(1000, 8, 4, 101);
  IndexConfig cfg;
  cfg.n_c = 4;
  cfg.seed = 2;
  auto index = IvfIndex::build(mix.dataset, cfg);

  auto target = mix.dataset.vector(55);
  std::vector<float> q(target.begin(), target.end());
  std::vector<VectorId> ids{55};
  index.remove(ids);
  auto result = index.search(q, 10, index.partition_count());
  for (const auto& [id, dist] : result.hits) CHECK(id != 55);
  CHECK(index.live_count() == 999);
  index.audit();
}

TEST_CASE("delete: emptying a partition removes it") {
  VectorDataset ds(1);
  for (int i = 0; i < 6; ++i) {
    std::vector<float> v{i < 3 ? static_cast<float>(i) : 100.0f + static_cast<float>(i)};
    ds.insert(static_cast<VectorId>(i), v);
  }
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 13;
  auto index = IvfIndex::build(ds, cfg);
  REQUIRE(index.partition_count() == 2);

  const PartitionId victim = index.id_map().at(0);
  std::vector<VectorId> members;
  for (const auto& [id, pid] : index.id_map())
    if (pid == victim) members.push_back(id);
  auto report = index.remove(members);
  CHECK(index.partition_count() == 1);
  REQUIRE(report.removed_partitions.size() == 1);
  CHECK(report.removed_partitions[0] == victim);
  index.audit();
}

TEST_CASE("delete: delta-resident ids are removed without touching partitions") {
  auto mix = testsup::gaussian_mixture(100, 4, 2, 110);
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 5;
  cfg.delta_capacity = 8;
  auto index = IvfIndex::build(mix.dataset, cfg);

  std::vector<VectorId> ids{900, 901};
  std::vector<float> data(8, 0.25f);
  index.insert(ids, data.data());
  CHECK(index.delta().size() == 2);
  const std::uint64_t partitioned = index.partitioned_count();

  std::vector<VectorId> del{900};
  auto report = index.remove(del);
  CHECK(report.from_delta == 1);
  CHECK(report.from_partitions == 0);
  CHECK(report.modified.empty());
  CHECK(index.delta().size() == 1);
  CHECK(index.partitioned_count() == partitioned);
  index.audit();
}

TEST_CASE("delete: unknown id rejects the whole batch atomically") {
  auto mix = testsup::gaussian_mixture(100, 4, 2, 120);
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 5;
  auto index = IvfIndex::build(mix.dataset, cfg);
  const std::uint64_t before = index.live_count();
  std::vector<VectorId> ids{3, 99999};
  CHECK_THROWS_AS(index.remove(ids), NotFound);
  CHECK(index.live_count() == before);
  CHECK(index.id_map().count(3));
  index.audit();
}

TEST_CASE("flush: empty delta is a no-op") {
  auto mix = testsup::gaussian_mixture(100, 4, 2, 130);
  IndexConfig cfg;
  cfg.n_c = 2;
  cfg.seed = 5;
  cfg.delta_capacity = 4;
  auto index = IvfIndex::build(mix.dataset, cfg);
  auto report = index.flush_delta();
  CHECK(report.flushed == 0);
  CHECK(index.live_count() == 100);
  index.audit();
}

TEST_CASE("flush: conserves counts and preserves the search candidate set") {
  auto mix = testsup::gaussian_mixture(1000, 8, 4, 140);
  IndexConfig cfg;
  cfg.n_c = 4;
  cfg.seed = 7;
  cfg.delta_capacity = 50;
  auto index = IvfIndex::build(mix.dataset, cfg);

  std::mt19937_64 rng(141);
  std::vector<VectorId> ids;
  std::vector<float> data;
  for (int i = 0; i < 5; ++i) {
    ids.push_back(5000 + static_cast<VectorId>(i));
    for (int j = 0; j < 8; ++j) data.push_back(static_cast<float>(rng_unit(rng) * 2 - 1));
  }
  index.insert(ids, data.data());
  CHECK(index.delta().size() == 5);

  std::vector<std::vector<float>> queries;
  for (int q = 0; q < 10; ++q) {
    std::vector<float> query(8);
    for (auto& x : query) x = static_cast<float>(rng_unit(rng) * 2 - 1);
    queries.push_back(query);
  }
  std::vector<std::vector<std::pair<VectorId, float>>> before;
  for (const auto& q : queries) before.push_back(index.search(q, 10, index.partition_count()).hits);

  const std::uint64_t partitioned = index.partitioned_count();
  auto report = index.flush_delta();
  CHECK(report.flushed == 5);
  CHECK(index.delta().size() == 0);
  CHECK(index.partitioned_count() == partitioned + 5);

  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto after = index.search(queries[q], 10, index.partition_count()).hits;
    CHECK(after == before[q]);
  }
  index.audit();
}

TEST_CASE("conservation and id_map audit over a random operation sequence") {
  auto mix = testsup::gaussian_mixture(2000, 8, 6, 150);
  IndexConfig cfg;
  cfg.n_c = 6;
  cfg.seed = 15;
  cfg.delta_capacity = 64;
  auto index = IvfIndex::build(mix.dataset, cfg);

  std::mt19937_64 rng(151);
  std::set<VectorId> live(mix.dataset.ids().begin(), mix.dataset.ids().end());
  VectorId next_id = 10000;
  std::int64_t expected = static_cast<std::int64_t>(mix.dataset.size());

  for (int step = 0; step < 300; ++step) {
    const double roll = rng_unit(rng);
    if (roll < 0.5) {
      const std::size_t batch = 1 + rng_index(rng, 32);
      std::vector<VectorId> ids;
      std::vector<float> data;
      for (std::size_t i = 0; i < batch; ++i) {
        ids.push_back(next_id);
        live.insert(next_id);
        ++next_id;
        for (int j = 0; j < 8; ++j) data.push_back(static_cast<float>(rng_unit(rng) * 2 - 1));
      }
      index.insert(ids, data.data());
      expected += static_cast<std::int64_t>(batch);
    } else if (roll < 0.85 && live.size() > 64) {
      const std::size_t batch = 1 + rng_index(rng, 16);
      std::vector<VectorId> ids;
      auto it = live.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rng_index(rng, live.size() - batch)));
      for (std::size_t i = 0; i < batch; ++i) ids.push_back(*it++);
      for (VectorId id : ids) live.erase(id);
      index.remove(ids);
      expected -= static_cast<std::int64_t>(batch);
    } else {
      index.flush_delta();
    }
    CHECK(index.live_count() == static_cast<std::uint64_t>(expected));
    if (step % 25 == 0) index.audit();
  }
  index.audit();
}

TEST_CASE("recall is non-decreasing in the probe count") {
  auto mix = testsup::gaussian_mixture(4000, 8, 16, 160);
  IndexConfig cfg;
  cfg.n_c = 16;
  cfg.seed = 20;
  auto index = IvfIndex::build(mix.dataset, cfg);
  Shadow shadow(mix.dataset);

  std::mt19937_64 rng(161);
  std::vector<std::vector<float>> queries;
  for (int q = 0; q < 20; ++q) {
    std::vector<float> query(8);
    for (auto& x : query) x = static_cast<float>(rng_unit(rng) * 2 - 1);
    queries.push_back(query);
  }

  double prev = -1.0;
  for (std::size_t n_p = 1; n_p <= 16; ++n_p) {
    double recall_sum = 0.0;
    for (const auto& q : queries) {
      auto expect =
          testsup::brute_force_topk(shadow.ids, shadow.data, 8, q, 10, DistanceMetric::kSquaredL2);
      std::set<VectorId> truth;
      for (const auto& [id, d] : expect) truth.insert(id);
      auto got = index.search(q, 10, n_p);
      std::size_t hit = 0;
      for (const auto& [id, d] : got.hits) hit += truth.count(id);
      recall_sum += static_cast<double>(hit) / 10.0;
    }
    const double mean = recall_sum / static_cast<double>(queries.size());
    CHECK(mean >= prev - 1e-12);
    prev = mean;
  }
  CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("search: inner-product metric ranks by negated dot product") {
  VectorDataset ds(2);
  std::vector<float> v{1.0f, 0.0f};
  ds.insert(0, v);
  v = {10.0f, 0.0f};
  ds.insert(1, v);
  v = {0.0f, -5.0f};
  ds.insert(2, v);
  IndexConfig cfg;
  cfg.n_c = 1;
  cfg.metric = DistanceMetric::kInnerProduct;
  auto index = IvfIndex::build(ds, cfg);
  std::vector<float> q{1.0f, 0.0f};
  auto result = index.search(q, 3, 1);
  REQUIRE(result.hits.size() == 3);
  CHECK(result.hits[0].first == 1);  // dot 10
  CHECK(result.hits[1].first == 0);  // dot 1
  CHECK(result.hits[2].first == 2);  // dot 0
}
