#include "nrfc/techniques.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace nrfc {

std::string to_string(Technique t) {
  switch (t) {
    case Technique::kSM: return "SM";
    case Technique::kNE: return "NE";
    case Technique::kFE: return "FE";
    case Technique::kEB: return "EB";
    case Technique::kAC: return "AC";
  }
  return "?";
}

Technique parse_technique(const std::string& name) {
  for (auto t : all_techniques()) {
    if (to_string(t) == name) return t;
  }
  fail(ErrorCode::kInvalidArgument, "unknown technique (expected SM|NE|FE|EB|AC): " + name);
}

std::vector<Technique> all_techniques() {
  return {Technique::kSM, Technique::kNE, Technique::kFE, Technique::kEB, Technique::kAC};
}

double noise_score(Technique kind, const Eigen::Ref<const Eigen::VectorXd>& logits, double temperature) {
  switch (kind) {
    case Technique::kSM:
    case Technique::kNE:
      return 1.0 - softmax_score(softmax(logits, temperature));
    case Technique::kFE:
    case Technique::kEB:
      return free_energy(logits, temperature);
    case Technique::kAC:
      fail(ErrorCode::kInvalidArgument, "AC uses argmax rule");
  }
  fail(ErrorCode::kInvalidArgument, "unknown technique");
}

Decision decide(const TechniqueConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& logits) {
  require(logits.size() == output_dim(cfg.kind), ErrorCode::kShapeMismatch,
          "logit width does not match the technique");
  Decision d;
  Eigen::Index best = 0;
  if (cfg.kind == Technique::kAC) {
    logits.maxCoeff(&best);
    d.noise = best == kConditionClasses;
    d.condition = d.noise ? -1 : static_cast<int>(best);
    return d;
  }
  require(cfg.eta.has_value(), ErrorCode::kInvalidArgument, "missing calibrated threshold");
  d.noise_score = noise_score(cfg.kind, logits, cfg.temperature);
  d.noise = d.noise_score > *cfg.eta;
  if (!d.noise) {
    logits.maxCoeff(&best);
    d.condition = static_cast<int>(best);
  }
  return d;
}

Calibration calibrate_threshold(const std::vector<double>& scores, const std::vector<int>& truth,
                                const std::vector<int>& predicted_condition) {
  const std::size_t n = scores.size();
  require(n > 0 && truth.size() == n && predicted_condition.size() == n, ErrorCode::kInvalidArgument,
          "validation scores, labels and predictions must be nonempty and equally long");
  const bool has_noise = std::any_of(truth.begin(), truth.end(), [](int t) { return t == kNoiseLabel; });
  const bool has_machine = std::any_of(truth.begin(), truth.end(), [](int t) { return t != kNoiseLabel; });
  require(has_noise && has_machine, ErrorCode::kInsufficientData,
          "threshold calibration needs both noise and machine items");
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(scores[i]), ErrorCode::kNumerical, "non-finite noise score");
    require(truth[i] >= 0 && truth[i] < kEvalClasses, ErrorCode::kInvalidArgument, "label out of range");
    require(predicted_condition[i] >= 0 && predicted_condition[i] < kConditionClasses,
            ErrorCode::kInvalidArgument, "predicted condition out of range");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sweep eta upward from -inf: every item starts as "noise" and flips to its
  // predicted condition once eta reaches its score.
  std::array<long, kEvalClasses> tp{}, predicted{}, actual{};
  for (std::size_t i = 0; i < n; ++i) {
    ++actual[static_cast<std::size_t>(truth[i])];
    ++predicted[kNoiseLabel];
    if (truth[i] == kNoiseLabel) ++tp[kNoiseLabel];
  }
  auto macro = [&] {
    double sum = 0.0;
    for (int k = 0; k < kEvalClasses; ++k) {
      const long denom = predicted[static_cast<std::size_t>(k)] + actual[static_cast<std::size_t>(k)];
      sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[static_cast<std::size_t>(k)]) / static_cast<double>(denom);
    }
    return sum / kEvalClasses;
  };

  Calibration best{-std::numeric_limits<double>::infinity(), macro()};
  std::size_t i = 0;
  while (i < n) {
    const double s = scores[order[i]];
    for (; i < n && scores[order[i]] == s; ++i) {
      const auto item = order[i];
      const auto t = static_cast<std::size_t>(truth[item]);
      const auto p = static_cast<std::size_t>(predicted_condition[item]);
      --predicted[kNoiseLabel];
      if (t == kNoiseLabel) --tp[kNoiseLabel];
      ++predicted[p];
      if (t == p) ++tp[p];
    }
    const double eta = i < n ? s + (scores[order[i]] - s) / 2.0 : std::numeric_limits<double>::infinity();
    const double f1 = macro();
    if (f1 > best.macro_f1) best = {eta, f1};
  }
  return best;
}

}  // namespace nrfc
