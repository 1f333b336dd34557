#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "nrfc/features.hpp"

namespace nrfc {

/// N-dimensional array as stored on disk: 8-byte magic "NRFCARR1", u32
/// dtype (1 = float64, 2 = float32), u32 rank, u64 dims[rank], then the
/// values in row-major order. All integers and values are little-endian.
struct StoredArray {
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

enum class StoredType : std::uint32_t { kFloat64 = 1, kFloat32 = 2 };

void write_array(const std::filesystem::path& path, const StoredArray& array, StoredType type = StoredType::kFloat64);
StoredArray read_array(const std::filesystem::path& path);

/// Feature batch cache: shape (count, n_mels, n_frames).
void write_features(const std::filesystem::path& path, const std::vector<LogMelFeature>& features,
                    StoredType type = StoredType::kFloat32);
std::vector<LogMelFeature> read_features(const std::filesystem::path& path);

}  // namespace nrfc
