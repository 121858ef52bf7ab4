#pragma once

#include <filesystem>

#include "dynivf/index.hpp"

namespace dynivf {

// Binary index snapshot: header (magic, version, dim, metric, counts) plus
// per-partition records with centroid, members and tracked metadata, then the
// delta store and global baselines. Save/load/save round-trips bit-exact.
void save_index(const IvfIndex& index, const std::filesystem::path& path);
IvfIndex load_index(const std::filesystem::path& path);

}  // namespace dynivf
