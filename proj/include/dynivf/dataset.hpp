#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "dynivf/common.hpp"

namespace dynivf {

// Dense float vectors addressed by stable ids. Storage is a flat row-major
// array with a side map from id to row, so iteration order is insertion
// order and lookups stay O(1).
class VectorDataset {
 public:
  VectorDataset() = default;
  explicit VectorDataset(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  // True until the first record fixes the dimension (empty files).
  bool dim_defined() const { return dim_ != 0; }

  void insert(VectorId id, std::span<const float> v) {
    if (dim_ == 0) {
      if (v.empty()) throw DimensionError("VectorDataset: zero-dimensional vector");
      dim_ = v.size();
    }
    if (v.size() != dim_)
      throw DimensionError("VectorDataset: expected dim " + std::to_string(dim_) + ", got " +
                           std::to_string(v.size()));
    for (float x : v) {
      if (!std::isfinite(x)) throw FormatError("VectorDataset: non-finite component");
    }
    if (pos_.count(id)) throw DuplicateId("VectorDataset: duplicate id " + std::to_string(id));
    pos_.emplace(id, ids_.size());
    ids_.push_back(id);
    data_.insert(data_.end(), v.begin(), v.end());
  }

  bool contains(VectorId id) const { return pos_.count(id) != 0; }

  std::span<const float> vector(VectorId id) const {
    auto it = pos_.find(id);
    if (it == pos_.end()) throw NotFound("VectorDataset: id " + std::to_string(id));
    return {data_.data() + it->second * dim_, dim_};
  }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  const std::vector<VectorId>& ids() const { return ids_; }
  const float* data() const { return data_.data(); }

 private:
  std::size_t dim_ = 0;
  std::vector<VectorId> ids_;
  std::vector<float> data_;
  std::unordered_map<VectorId, std::size_t> pos_;
};

}  // namespace dynivf
