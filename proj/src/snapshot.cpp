#include "dynivf/snapshot.hpp"

#include <cstdio>
#include <cstring>

namespace dynivf {

namespace {

constexpr char kMagic[4] = {'D', 'I', 'V', 'F'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  FILE* f;
  void bytes(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw FormatError("snapshot: write failed");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void floats(const std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
};

struct Reader {
  FILE* f;
  void bytes(void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw FormatError("snapshot: truncated file");
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void floats(std::vector<float>& v, std::size_t n) {
    v.resize(n);
    bytes(v.data(), n * 4);
  }
};

}  // namespace

class SnapshotCodec {
 public:
  static void save(const IvfIndex& index, const std::filesystem::path& path) {
    FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw FormatError("snapshot: cannot open " + path.string());
    Writer w{f};
    try {
      w.bytes(kMagic, 4);
      w.u32(kVersion);
      w.u64(index.dim_);
      w.u8(index.config_.metric == DistanceMetric::kSquaredL2 ? 0 : 1);
      w.u8(index.centroid_tracking_ ? 1 : 0);
      w.u64(index.config_.n_c);
      w.u64(index.config_.n_p);
      w.u64(index.config_.target_partition_size);
      w.u64(index.config_.delta_capacity);
      w.u64(index.config_.seed);
      w.u32(index.config_.build_iterations);
      w.f64(index.config_.balance_slack);
      w.u32(index.next_partition_id_);
      w.f64(index.sigma0_);
      w.f64(index.eps0_);
      w.u64(index.n0_);

      w.u64(index.partitions_.size());
      for (const auto& [pid, part] : index.partitions_) {
        const PartitionMeta& meta = index.meta_.at(pid);
        w.u32(pid);
        w.u64(part.size());
        w.floats(part.centroid);
        w.floats(meta.mu0);
        w.f64(meta.temperature);
        w.f64(meta.score);
        w.bytes(part.member_ids.data(), part.member_ids.size() * 8);
        w.floats(part.member_data);
        w.floats(part.member_assign_dist);
        w.f64(part.assign_dist_sum);
      }
      w.u64(index.delta_.size());
      w.bytes(index.delta_.ids.data(), index.delta_.ids.size() * 8);
      w.floats(index.delta_.data);
    } catch (...) {
      std::fclose(f);
      throw;
    }
    if (std::fclose(f) != 0) throw FormatError("snapshot: close failed");
  }

  static IvfIndex load(const std::filesystem::path& path) {
    FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw FormatError("snapshot: cannot open " + path.string());
    Reader r{f};
    IvfIndex index;
    try {
      char magic[4];
      r.bytes(magic, 4);
      if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("snapshot: bad magic in " + path.string());
      const std::uint32_t version = r.u32();
      if (version != kVersion)
        throw FormatError("snapshot: unsupported version " + std::to_string(version));
      index.dim_ = r.u64();
      index.config_.metric = r.u8() == 0 ? DistanceMetric::kSquaredL2 : DistanceMetric::kInnerProduct;
      index.centroid_tracking_ = r.u8() != 0;
      index.config_.n_c = r.u64();
      index.config_.n_p = r.u64();
      index.config_.target_partition_size = r.u64();
      index.config_.delta_capacity = r.u64();
      index.config_.seed = r.u64();
      index.config_.build_iterations = r.u32();
      index.config_.balance_slack = r.f64();
      index.next_partition_id_ = r.u32();
      index.sigma0_ = r.f64();
      index.eps0_ = r.f64();
      index.n0_ = r.u64();

      const std::uint64_t n_parts = r.u64();
      for (std::uint64_t i = 0; i < n_parts; ++i) {
        Partition part;
        PartitionMeta meta;
        part.id = r.u32();
        const std::uint64_t size = r.u64();
        meta.size = size;
        r.floats(part.centroid, index.dim_);
        r.floats(meta.mu0, index.dim_);
        meta.temperature = r.f64();
        meta.score = r.f64();
        part.member_ids.resize(size);
        r.bytes(part.member_ids.data(), size * 8);
        r.floats(part.member_data, size * index.dim_);
        r.floats(part.member_assign_dist, size);
        part.assign_dist_sum = r.f64();
        for (VectorId id : part.member_ids) index.id_map_[id] = part.id;
        index.partitioned_count_ += size;
        index.meta_.emplace(part.id, std::move(meta));
        index.partitions_.emplace(part.id, std::move(part));
      }
      index.delta_.capacity = index.config_.delta_capacity;
      const std::uint64_t delta_size = r.u64();
      index.delta_.ids.resize(delta_size);
      r.bytes(index.delta_.ids.data(), delta_size * 8);
      r.floats(index.delta_.data, delta_size * index.dim_);
      for (VectorId id : index.delta_.ids) index.id_map_[id] = kDeltaPartition;
    } catch (...) {
      std::fclose(f);
      throw;
    }
    std::fclose(f);
    index.audit();
    return index;
  }
};

void save_index(const IvfIndex& index, const std::filesystem::path& path) {
  SnapshotCodec::save(index, path);
}

IvfIndex load_index(const std::filesystem::path& path) { return SnapshotCodec::load(path); }

}  // namespace dynivf
