#pragma once

#include <filesystem>

#include "nrfc/classifier.hpp"
#include "nrfc/features.hpp"
#include "nrfc/techniques.hpp"
#include "nrfc/trainer.hpp"

namespace nrfc {

/// Everything needed to resume or evaluate a trained model.
///
/// File layout: 8-byte magic "NRFCCKPT", u32 format version, u64 length of a
/// UTF-8 JSON header (architecture, technique incl. eta, features, precision,
/// epoch, tensor names and shapes, optimizer scalars), then float64 payload:
/// parameters in order, per batch-norm layer running mean then variance, and
/// the Adam first and second moments when present. Little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  Model<double> model;
  AdamState<double> optimizer;
  TechniqueConfig technique;
  FeatureConfig features;
  Precision precision = Precision::kFloat32;
  int epoch = 0;
  int sample_rate = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nrfc
