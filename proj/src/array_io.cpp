#include "nrfc/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nrfc/error.hpp"

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

namespace nrfc {
namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'C', 'A', 'R', 'R', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorCode::kFormat, "truncated array file: " + path.string());
  return v;
}

}  // namespace

void write_array(const std::filesystem::path& path, const StoredArray& array, StoredType type) {
  std::uint64_t count = 1;
  for (auto d : array.dims) count *= d;
  require(count == array.values.size(), ErrorCode::kShapeMismatch, "array dims do not match value count");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write array file: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, static_cast<std::uint32_t>(type));
  put(out, static_cast<std::uint32_t>(array.dims.size()));
  for (auto d : array.dims) put(out, d);
  for (double v : array.values) {
    if (type == StoredType::kFloat64) {
      put(out, v);
    } else {
      put(out, static_cast<float>(v));
    }
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

StoredArray read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open array file: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kFormat, "not an NRFC array file: " + path.string());
  }
  const auto type = static_cast<StoredType>(get<std::uint32_t>(in, path));
  require(type == StoredType::kFloat64 || type == StoredType::kFloat32, ErrorCode::kFormat, "unknown array dtype");
  const auto rank = get<std::uint32_t>(in, path);
  require(rank <= 16, ErrorCode::kFormat, "implausible array rank");
  StoredArray a;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    a.dims.push_back(get<std::uint64_t>(in, path));
    count *= a.dims.back();
  }
  a.values.resize(count);
  for (auto& v : a.values) {
    v = type == StoredType::kFloat64 ? get<double>(in, path) : static_cast<double>(get<float>(in, path));
  }
  return a;
}

void write_features(const std::filesystem::path& path, const std::vector<LogMelFeature>& features,
                    StoredType type) {
  require(!features.empty(), ErrorCode::kInvalidArgument, "no features to write");
  const auto rows = features.front().n_mels();
  const auto cols = features.front().n_frames();
  StoredArray a;
  a.dims = {features.size(), static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols)};
  a.values.reserve(features.size() * static_cast<std::size_t>(rows * cols));
  for (const auto& f : features) {
    require(f.n_mels() == rows && f.n_frames() == cols, ErrorCode::kShapeMismatch, "inconsistent feature shapes");
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) a.values.push_back(f.values(r, c));
    }
  }
  write_array(path, a, type);
}

std::vector<LogMelFeature> read_features(const std::filesystem::path& path) {
  const StoredArray a = read_array(path);
  require(a.dims.size() == 3, ErrorCode::kFormat, "feature cache must be rank 3");
  const auto rows = static_cast<Eigen::Index>(a.dims[1]);
  const auto cols = static_cast<Eigen::Index>(a.dims[2]);
  std::vector<LogMelFeature> out(a.dims[0]);
  std::size_t k = 0;
  for (auto& f : out) {
    f.values.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) f.values(r, c) = a.values[k++];
    }
  }
  return out;
}

}  // namespace nrfc
