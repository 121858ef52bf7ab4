#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dynivf/dataset.hpp"

namespace dynivf {

// Little-endian SIFT-style formats: each record is a 4-byte int32 dimension
// followed by dim payload elements (float32 for fvecs, uint8 for bvecs,
// int32 for ivecs). Ids are assigned sequentially in file order.
VectorDataset read_fvecs(const std::filesystem::path& path);
VectorDataset read_bvecs(const std::filesystem::path& path);
std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path);

void write_fvecs(const std::filesystem::path& path, const VectorDataset& dataset);
void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<std::int32_t>>& rows);

// Streaming fvecs writer for trace sidecar files; records are addressed by
// sequential offset (record index).
class FvecsWriter {
 public:
  FvecsWriter(const std::filesystem::path& path, std::size_t dim);
  ~FvecsWriter();
  FvecsWriter(const FvecsWriter&) = delete;
  FvecsWriter& operator=(const FvecsWriter&) = delete;

  // Appends count vectors (flat, count*dim floats) and returns the offset of
  // the first one.
  std::size_t append(const float* data, std::size_t count);
  std::size_t count() const { return count_; }
  void close();

 private:
  void* file_ = nullptr;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
};

// Random-access fvecs reader used to resolve sidecar references.
class FvecsReader {
 public:
  explicit FvecsReader(const std::filesystem::path& path);
  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  // Reads records [offset, offset+count) into out (flat count*dim floats).
  void read(std::size_t offset, std::size_t count, std::vector<float>& out) const;

 private:
  std::filesystem::path path_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
};

}  // namespace dynivf
