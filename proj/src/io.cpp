#include "dynivf/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace dynivf {

namespace {

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw FormatError("cannot open file: " + path.string());
  return in;
}

std::int32_t read_i32(std::ifstream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(buf[0]) |
                                   (static_cast<std::uint32_t>(buf[1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[3]) << 24));
}

template <typename Elem, typename Push>
void read_records(const std::filesystem::path& path, std::size_t elem_size, Push&& push) {
  std::ifstream in = open_binary(path);
  std::size_t record = 0;
  std::int64_t dim = -1;
  std::vector<char> buf;
  while (true) {
    unsigned char hdr[4];
    in.read(reinterpret_cast<char*>(hdr), 4);
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != 4)
      throw FormatError(path.string() + ": truncated record " + std::to_string(record));
    const std::int32_t rec_dim = static_cast<std::int32_t>(
        static_cast<std::uint32_t>(hdr[0]) | (static_cast<std::uint32_t>(hdr[1]) << 8) |
        (static_cast<std::uint32_t>(hdr[2]) << 16) | (static_cast<std::uint32_t>(hdr[3]) << 24));
    if (rec_dim <= 0)
      throw FormatError(path.string() + ": invalid dimension " + std::to_string(rec_dim) +
                        " in record " + std::to_string(record));
    if (dim < 0) {
      dim = rec_dim;
    } else if (rec_dim != dim) {
      throw FormatError(path.string() + ": inconsistent dims (" + std::to_string(dim) + " then " +
                        std::to_string(rec_dim) + ") at record " + std::to_string(record));
    }
    buf.resize(static_cast<std::size_t>(rec_dim) * elem_size);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
      throw FormatError(path.string() + ": truncated record " + std::to_string(record));
    push(reinterpret_cast<const Elem*>(buf.data()), static_cast<std::size_t>(rec_dim), record);
    ++record;
  }
}

}  // namespace

VectorDataset read_fvecs(const std::filesystem::path& path) {
  VectorDataset out;
  std::vector<float> tmp;
  read_records<float>(path, sizeof(float), [&](const float* v, std::size_t dim, std::size_t rec) {
    tmp.assign(v, v + dim);
    out.insert(static_cast<VectorId>(rec), tmp);
  });
  return out;
}

VectorDataset read_bvecs(const std::filesystem::path& path) {
  VectorDataset out;
  std::vector<float> tmp;
  read_records<std::uint8_t>(
      path, sizeof(std::uint8_t), [&](const std::uint8_t* v, std::size_t dim, std::size_t rec) {
        tmp.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = static_cast<float>(v[i]);
        out.insert(static_cast<VectorId>(rec), tmp);
      });
  return out;
}

std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path) {
  std::vector<std::vector<std::int32_t>> out;
  read_records<std::int32_t>(
      path, sizeof(std::int32_t), [&](const std::int32_t* v, std::size_t dim, std::size_t) {
        out.emplace_back(v, v + dim);
      });
  return out;
}

void write_fvecs(const std::filesystem::path& path, const VectorDataset& dataset) {
  FvecsWriter writer(path, dataset.dim());
  for (std::size_t i = 0; i < dataset.size(); ++i) writer.append(dataset.row(i).data(), 1);
}

void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<std::int32_t>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw FormatError("cannot open file for write: " + path.string());
  for (const auto& row : rows) {
    const std::int32_t dim = static_cast<std::int32_t>(row.size());
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(std::int32_t)));
  }
  if (!out.good()) throw FormatError("write failed: " + path.string());
}

FvecsWriter::FvecsWriter(const std::filesystem::path& path, std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DimensionError("FvecsWriter: dim must be positive");
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw FormatError("cannot open file for write: " + path.string());
  file_ = f;
}

FvecsWriter::~FvecsWriter() { close(); }

void FvecsWriter::close() {
  if (file_) {
    std::fclose(static_cast<FILE*>(file_));
    file_ = nullptr;
  }
}

std::size_t FvecsWriter::append(const float* data, std::size_t count) {
  FILE* f = static_cast<FILE*>(file_);
  if (!f) throw FormatError("FvecsWriter: writer closed");
  const std::size_t first = count_;
  const std::int32_t dim = static_cast<std::int32_t>(dim_);
  for (std::size_t i = 0; i < count; ++i) {
    if (std::fwrite(&dim, 4, 1, f) != 1 ||
        std::fwrite(data + i * dim_, sizeof(float), dim_, f) != dim_)
      throw FormatError("FvecsWriter: write failed");
  }
  count_ += count;
  return first;
}

FvecsReader::FvecsReader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in = open_binary(path);
  const auto file_size = std::filesystem::file_size(path);
  if (file_size == 0) {
    dim_ = 0;
    count_ = 0;
    return;
  }
  const std::int32_t dim = read_i32(in);
  if (!in.good() || dim <= 0) throw FormatError(path.string() + ": bad fvecs header record");
  dim_ = static_cast<std::size_t>(dim);
  const std::size_t record_size = 4 + dim_ * sizeof(float);
  if (file_size % record_size != 0)
    throw FormatError(path.string() + ": size is not a multiple of the record size");
  count_ = file_size / record_size;
}

void FvecsReader::read(std::size_t offset, std::size_t count, std::vector<float>& out) const {
  if (offset + count > count_)
    throw FormatError(path_.string() + ": record range [" + std::to_string(offset) + ", " +
                      std::to_string(offset + count) + ") out of bounds (" +
                      std::to_string(count_) + " records)");
  std::ifstream in = open_binary(path_);
  const std::size_t record_size = 4 + dim_ * sizeof(float);
  out.resize(count * dim_);
  in.seekg(static_cast<std::streamoff>(offset * record_size));
  for (std::size_t i = 0; i < count; ++i) {
    const std::int32_t dim = read_i32(in);
    if (!in.good() || static_cast<std::size_t>(dim) != dim_)
      throw FormatError(path_.string() + ": corrupt record " + std::to_string(offset + i));
    in.read(reinterpret_cast<char*>(out.data() + i * dim_),
            static_cast<std::streamsize>(dim_ * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != dim_ * sizeof(float))
      throw FormatError(path_.string() + ": truncated record " + std::to_string(offset + i));
  }
}

}  // namespace dynivf
