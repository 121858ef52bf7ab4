#include "dynivf/tracking.hpp"

#include <algorithm>
#include <cmath>

#include "dynivf/distance.hpp"
#include "dynivf/index.hpp"

namespace dynivf {

void update_partition_properties(PartitionMeta& meta, std::span<float> mu,
                                 const float* delta_data, std::size_t delta_count, std::size_t dim,
                                 bool is_delete, bool update_mean) {
  if (delta_count == 0) throw EmptyDelta("update_partition_properties: empty delta batch");
  if (is_delete && delta_count > meta.size)
    throw Underflow("update_partition_properties: deleting " + std::to_string(delta_count) +
                    " from partition of size " + std::to_string(meta.size));

  const double s_delta = is_delete ? -static_cast<double>(delta_count)
                                   : static_cast<double>(delta_count);
  const std::uint64_t new_size =
      is_delete ? meta.size - delta_count : meta.size + delta_count;
  if (update_mean && new_size > 0) {
    const double scale = s_delta / static_cast<double>(new_size);
    for (std::size_t j = 0; j < dim; ++j) {
      double delta_mean = 0.0;
      for (std::size_t i = 0; i < delta_count; ++i) delta_mean += delta_data[i * dim + j];
      delta_mean /= static_cast<double>(delta_count);
      mu[j] = static_cast<float>(mu[j] + scale * (delta_mean - mu[j]));
    }
  }
  meta.size = new_size;
}

void update_temperature(std::map<PartitionId, PartitionMeta>& metas,
                        std::span<const PartitionId> probed_ids,
                        std::span<const float> probed_dists, double eta, double nu) {
  if (probed_ids.empty()) throw NoProbes("update_temperature: no probed partitions");

  // Nearest-probed distance of zero (query on a centroid) or negative
  // (inner-product scores) makes the ratio meaningless; heat uniformly then.
  const double nearest = probed_dists[0];
  const bool uniform = !(nearest > 0.0);

  std::size_t cursor = 0;
  std::vector<std::pair<PartitionId, double>> heat(probed_ids.size());
  for (std::size_t i = 0; i < probed_ids.size(); ++i) {
    const double d_mu = uniform ? 1.0 : nearest / static_cast<double>(probed_dists[i]);
    heat[i] = {probed_ids[i], d_mu};
  }
  std::sort(heat.begin(), heat.end());

  for (auto& [pid, meta] : metas) {
    while (cursor < heat.size() && heat[cursor].first < pid) ++cursor;
    if (cursor < heat.size() && heat[cursor].first == pid) {
      meta.temperature = std::min(meta.temperature * (1.0 + heat[cursor].second * eta),
                                  kMaxTemperature);
    } else {
      meta.temperature = std::max(meta.temperature * (1.0 - nu), 1.0);
    }
  }
}

void update_temperature_batch(std::map<PartitionId, PartitionMeta>& metas,
                              const std::vector<std::vector<PartitionId>>& probed_ids,
                              const std::vector<std::vector<float>>& probed_dists, double eta,
                              double nu) {
  if (probed_ids.empty()) throw NoProbes("update_temperature_batch: no queries");
  std::map<PartitionId, double> heat;
  for (std::size_t q = 0; q < probed_ids.size(); ++q) {
    const auto& ids = probed_ids[q];
    const auto& dists = probed_dists[q];
    if (ids.empty()) continue;
    const double nearest = dists[0];
    const bool uniform = !(nearest > 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double d_mu = uniform ? 1.0 : nearest / static_cast<double>(dists[i]);
      auto [it, inserted] = heat.emplace(ids[i], d_mu);
      if (!inserted) it->second = std::max(it->second, d_mu);
    }
  }
  if (heat.empty()) throw NoProbes("update_temperature_batch: no probed partitions");
  for (auto& [pid, meta] : metas) {
    auto it = heat.find(pid);
    if (it != heat.end()) {
      meta.temperature = std::min(meta.temperature * (1.0 + it->second * eta), kMaxTemperature);
    } else {
      meta.temperature = std::max(meta.temperature * (1.0 - nu), 1.0);
    }
  }
}

double compute_reconstruction_error(const IvfIndex& index) {
  double sum = 0.0;
  std::uint64_t count = 0;
  for (const auto& [pid, part] : index.partitions()) {
    const std::size_t dim = index.dim();
    for (std::size_t i = 0; i < part.size(); ++i)
      sum += distance(part.member_data.data() + i * dim, part.centroid.data(), dim,
                      DistanceMetric::kSquaredL2);
    count += part.size();
  }
  if (count == 0) throw EmptyIndex("compute_reconstruction_error: no partitioned vectors");
  return sum / static_cast<double>(count);
}

double estimate_ideal_error(const GlobalStats& stats) {
  if (stats.n == 0 || stats.n0 == 0) throw Error("estimate_ideal_error: vector counts must be positive");
  if (stats.dim == 0) throw Error("estimate_ideal_error: dim must be positive");
  const double ratio = static_cast<double>(stats.n0) / static_cast<double>(stats.n);
  return stats.eps0 * std::pow(ratio, 1.0 / static_cast<double>(stats.dim));
}

double population_std(std::span<const std::size_t> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (std::size_t v : values) mean += static_cast<double>(v);
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (std::size_t v : values) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(values.size()));
}

double partition_size_std(const IvfIndex& index) {
  std::vector<std::size_t> sizes;
  sizes.reserve(index.partitions().size());
  for (const auto& [pid, part] : index.partitions()) sizes.push_back(part.size());
  return population_std(sizes);
}

}  // namespace dynivf
