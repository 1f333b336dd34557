#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nrfc/classifier.hpp"
#include "nrfc/dataset.hpp"
#include "nrfc/features.hpp"
#include "nrfc/metrics.hpp"
#include "nrfc/techniques.hpp"

namespace nrfc {

enum class Precision { kFloat32, kFloat64 };
std::string to_string(Precision p);
Precision parse_precision(const std::string& name);

struct AugmentOptions {
  bool enabled = true;
  double max_shift_s = 2.0;
  double min_gain = 0.5;
  double max_gain = 2.0;
};

struct TrainConfig {
  TechniqueConfig technique;
  FeatureConfig features;
  std::vector<int> widths{16, 32, 64};
  BatchNormOptions bn;
  LrSchedule schedule;  // schedule.epochs is the run length
  int batch_machine = 8;
  int batch_noise = 8;
  double weight_decay = 0.0;
  AugmentOptions augment;
  Precision precision = Precision::kFloat32;
  int eval_batch = 64;
  std::uint64_t seed = 1;

  /// Architecture for clips of `n_samples` samples.
  Architecture architecture(Eigen::Index n_samples) const;
};

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  std::optional<double> eta;
};

struct TrainResult {
  Model<double> model;        // best-epoch parameters (exact copy of the trained precision)
  AdamState<double> optimizer;  // optimizer state at the best epoch
  std::optional<double> eta;  // threshold calibrated at the best epoch
  int best_epoch = 0;
  double best_val_f1 = -1.0;
  std::vector<HistoryRow> history;
};

/// Per-epoch progress callback (for logging); may be empty.
using EpochCallback = std::function<void(const HistoryRow&)>;

/// Trains one model: every epoch runs floor(machine / batch) Adam steps on
/// batches of machine items plus (for exposure techniques) noise items, then
/// validates, calibrates the noise threshold and keeps the best epoch by
/// validation macro F1 (earlier epoch on ties).
TrainResult train(const DatasetSplits& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Log-Mel features of a whole split, in order.
std::vector<LogMelFeature> extract_features(const std::vector<LabeledExample>& split, const FeatureConfig& cfg);

/// Logits of a frozen model in eval mode, one row per feature.
Eigen::MatrixXd predict_logits(const Model<double>& model, Precision precision,
                               const std::vector<LogMelFeature>& features, int eval_batch = 64);

/// 14-class evaluation of a frozen model. `technique.eta` must hold the
/// calibrated threshold for score-based kinds.
EvalReport evaluate(const Model<double>& model, Precision precision, const TechniqueConfig& technique,
                    const std::vector<LabeledExample>& split, const FeatureConfig& features, int eval_batch = 64);

/// Decisions from precomputed logits; calibrates eta first when `calibrate`
/// is set (returns it through `technique.eta`).
EvalReport evaluate_logits(const Eigen::MatrixXd& logits, const std::vector<int>& truth, TechniqueConfig& technique,
                           bool calibrate);

/// epoch,loss,val_f1,eta
std::string history_csv(const std::vector<HistoryRow>& history);

}  // namespace nrfc
