#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nrfc/batch_norm.hpp"
#include "nrfc/error.hpp"

namespace nrfc {

/// Number of machine-condition classes and the label used for noise-only
/// clips in the joint 14-way evaluation (0-based).
inline constexpr int kConditionClasses = 13;
inline constexpr int kNoiseLabel = 13;
inline constexpr int kEvalClasses = 14;

/// SM: softmax score, no exposure. NE: noise exposure (uniform target).
/// FE: free-energy score, no exposure. EB: energy-bounded learning.
/// AC: noise as an additional output class.
enum class Technique { kSM, kNE, kFE, kEB, kAC };

std::string to_string(Technique t);
Technique parse_technique(const std::string& name);
std::vector<Technique> all_techniques();

/// Whether the technique trains on noise-only clips.
constexpr bool uses_exposure(Technique t) {
  return t == Technique::kNE || t == Technique::kEB || t == Technique::kAC;
}
constexpr int output_dim(Technique t) { return t == Technique::kAC ? kConditionClasses + 1 : kConditionClasses; }
constexpr bool score_based(Technique t) { return t != Technique::kAC; }

struct TechniqueConfig {
  Technique kind = Technique::kNE;
  double alpha = 0.5;            // noise-exposure weight
  double beta = 0.1;             // energy regularizer weight
  double temperature = 1.0;
  double margin_machine = -25.0;
  double margin_noise = -7.0;
  double log_floor = 1e-12;      // CCE log clamp
  std::optional<double> eta;     // calibrated threshold (score-based kinds)
};

// --- scores ---------------------------------------------------------------------

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const S m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

/// exp(g_k / T) / sum_j exp(g_j / T), shifted by the max logit.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits,
                                                                   double temperature = 1.0) {
  using S = typename Derived::Scalar;
  require(temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  require(logits.allFinite(), ErrorCode::kNumerical, "non-finite logits");
  const Eigen::Matrix<S, Eigen::Dynamic, 1> z = logits.reshaped() / static_cast<S>(temperature);
  const Eigen::Matrix<S, Eigen::Dynamic, 1> e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Maximum softmax probability.
template <typename Derived>
typename Derived::Scalar softmax_score(const Eigen::MatrixBase<Derived>& probs) {
  return probs.maxCoeff();
}

/// Energy score -E(x) = T * logsumexp(g / T).
template <typename Derived>
typename Derived::Scalar energy_score(const Eigen::MatrixBase<Derived>& logits, double temperature = 1.0) {
  using S = typename Derived::Scalar;
  require(temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  require(logits.allFinite(), ErrorCode::kNumerical, "non-finite logits");
  const S t = static_cast<S>(temperature);
  return t * log_sum_exp((logits / t).eval());
}

/// Free energy E(x) = -T * logsumexp(g / T).
template <typename Derived>
typename Derived::Scalar free_energy(const Eigen::MatrixBase<Derived>& logits, double temperature = 1.0) {
  return -energy_score(logits, temperature);
}

/// -sum_k target_k * max(log probs_k, log floor).
template <typename D1, typename D2>
typename D1::Scalar cce_loss(const Eigen::MatrixBase<D1>& probs, const Eigen::MatrixBase<D2>& target,
                             double log_floor = 1e-12) {
  using S = typename D1::Scalar;
  require(probs.size() == target.size(), ErrorCode::kShapeMismatch, "probability sizes differ");
  const S lf = static_cast<S>(std::log(log_floor));
  S sum = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    const S p = probs.reshaped()[k];
    const S lp = p > S(0) ? std::max(std::log(p), lf) : lf;
    sum -= target.reshaped()[k] * lp;
  }
  return sum;
}

/// Noise score, oriented so that larger means more noise-like:
/// SM/NE give 1 - max softmax probability, FE/EB give the free energy E(x).
double noise_score(Technique kind, const Eigen::Ref<const Eigen::VectorXd>& logits, double temperature = 1.0);

// --- training losses ------------------------------------------------------------

/// A batch loss and its gradient with respect to every logit.
template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Scalar classification = 0;  // mean CCE of the machine items
  Scalar auxiliary = 0;       // exposure / energy term before weighting
  Mat<Scalar> d_logits;
};

namespace detail {

/// Adds d/dg of -scale * sum_k t_k max(log p_k, lf) for one row of logits to
/// `grad` and returns the unscaled loss term.
template <typename Scalar, typename Row, typename Target, typename Grad>
Scalar cce_row(const Row& g, const Target& target, Scalar scale, double log_floor, Grad&& grad) {
  const Scalar lf = static_cast<Scalar>(std::log(log_floor));
  const Scalar m = g.maxCoeff();
  const Scalar lse = m + std::log((g.array() - m).exp().sum());
  Scalar loss = 0;
  Scalar active_mass = 0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const Scalar lp = g[k] - lse;
    if (lp > lf) {
      loss -= target[k] * lp;
      active_mass += target[k];
      grad[k] -= scale * target[k];
    } else {
      loss -= target[k] * lf;
    }
  }
  for (Eigen::Index k = 0; k < g.size(); ++k) grad[k] += scale * active_mass * std::exp(g[k] - lse);
  return loss;
}

}  // namespace detail

/// Mean one-hot CCE over rows of `logits` (B x K) with integer labels.
template <typename Scalar>
LossResult<Scalar> cce_batch(const Mat<Scalar>& logits, const std::vector<int>& labels, double log_floor = 1e-12) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), ErrorCode::kShapeMismatch,
          "label count does not match logits rows");
  LossResult<Scalar> out;
  out.d_logits = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  if (labels.empty()) return out;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(labels.size());
  Vec<Scalar> target(logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    require(y >= 0 && y < logits.cols(), ErrorCode::kInvalidArgument, "label outside output range");
    target.setZero();
    target[y] = 1;
    auto grad = out.d_logits.row(b);
    out.value += detail::cce_row<Scalar>(logits.row(b), target, scale, log_floor, grad);
  }
  out.value *= scale;
  out.classification = out.value;
  return out;
}

/// Mean CCE against the uniform distribution over the K outputs.
template <typename Scalar>
LossResult<Scalar> uniform_cce_batch(const Mat<Scalar>& logits, double log_floor = 1e-12) {
  LossResult<Scalar> out;
  out.d_logits = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(logits.rows());
  const Vec<Scalar> target = Vec<Scalar>::Constant(logits.cols(), Scalar(1) / static_cast<Scalar>(logits.cols()));
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    auto grad = out.d_logits.row(b);
    out.value += detail::cce_row<Scalar>(logits.row(b), target, scale, log_floor, grad);
  }
  out.value *= scale;
  return out;
}

/// Noise exposure: mean CCE(y, f(x_M)) + alpha * mean CCE(u, f(x_N)).
template <typename Scalar>
LossResult<Scalar> ne_loss(const Mat<Scalar>& machine_logits, const std::vector<int>& labels,
                           const Mat<Scalar>& noise_logits, double alpha, double log_floor = 1e-12) {
  require(machine_logits.rows() > 0, ErrorCode::kInvalidArgument, "empty machine batch");
  auto machine = cce_batch(machine_logits, labels, log_floor);
  auto noise = uniform_cce_batch(noise_logits, log_floor);
  LossResult<Scalar> out;
  const Scalar a = static_cast<Scalar>(alpha);
  out.classification = machine.value;
  out.auxiliary = noise.value;
  out.value = machine.value + a * noise.value;
  out.d_logits.resize(machine_logits.rows() + noise_logits.rows(), machine_logits.cols());
  out.d_logits.topRows(machine_logits.rows()) = machine.d_logits;
  out.d_logits.bottomRows(noise_logits.rows()) = a * noise.d_logits;
  return out;
}

/// Squared-hinge energy regularizer:
/// mean_M max(0, E(x_M) - m_M)^2 + mean_N max(0, m_N - E(x_N))^2.
template <typename Scalar>
LossResult<Scalar> energy_reg_loss(const Mat<Scalar>& machine_logits, const Mat<Scalar>& noise_logits,
                                   double margin_machine, double margin_noise, double temperature = 1.0) {
  LossResult<Scalar> out;
  out.d_logits = Mat<Scalar>::Zero(machine_logits.rows() + noise_logits.rows(), machine_logits.cols());
  const Scalar t = static_cast<Scalar>(temperature);
  auto term = [&](const Mat<Scalar>& logits, Eigen::Index offset, Scalar margin, Scalar sign) {
    if (logits.rows() == 0) return;
    const Scalar scale = Scalar(1) / static_cast<Scalar>(logits.rows());
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
      const Vec<Scalar> g = logits.row(b).transpose();
      const Scalar energy = -t * log_sum_exp((g / t).eval());
      // sign = +1: max(0, E - m); sign = -1: max(0, m - E)
      const Scalar hinge = std::max(Scalar(0), sign * (energy - margin));
      out.value += scale * hinge * hinge;
      if (hinge > Scalar(0)) {
        // dE/dg = -softmax(g / T)
        const Vec<Scalar> p = softmax(g, temperature);
        out.d_logits.row(offset + b) += (-Scalar(2) * scale * hinge * sign) * p.transpose();
      }
    }
  };
  term(machine_logits, 0, static_cast<Scalar>(margin_machine), Scalar(1));
  term(noise_logits, machine_logits.rows(), static_cast<Scalar>(margin_noise), Scalar(-1));
  out.auxiliary = out.value;
  return out;
}

/// Energy-bounded learning: mean CCE(y, f(x_M)) + beta * energy_reg_loss.
template <typename Scalar>
LossResult<Scalar> eb_total_loss(const Mat<Scalar>& machine_logits, const std::vector<int>& labels,
                                 const Mat<Scalar>& noise_logits, const TechniqueConfig& cfg) {
  require(machine_logits.rows() > 0, ErrorCode::kInvalidArgument, "empty machine batch");
  auto machine = cce_batch(machine_logits, labels, cfg.log_floor);
  auto reg = energy_reg_loss(machine_logits, noise_logits, cfg.margin_machine, cfg.margin_noise, cfg.temperature);
  const Scalar b = static_cast<Scalar>(cfg.beta);
  LossResult<Scalar> out;
  out.classification = machine.value;
  out.auxiliary = reg.value;
  out.value = machine.value + b * reg.value;
  out.d_logits = b * reg.d_logits;
  out.d_logits.topRows(machine_logits.rows()) += machine.d_logits;
  return out;
}

/// Additional class: mean CCE over machine and noise items together, noise
/// targets one-hot at the extra (last) output.
template <typename Scalar>
LossResult<Scalar> ac_loss(const Mat<Scalar>& machine_logits, const std::vector<int>& labels,
                           const Mat<Scalar>& noise_logits, double log_floor = 1e-12) {
  require(machine_logits.cols() == kConditionClasses + 1, ErrorCode::kShapeMismatch,
          "additional-class loss needs 14 outputs");
  require(noise_logits.rows() == 0 || noise_logits.cols() == machine_logits.cols(), ErrorCode::kShapeMismatch,
          "machine and noise logits differ in width");
  Mat<Scalar> all(machine_logits.rows() + noise_logits.rows(), machine_logits.cols());
  all.topRows(machine_logits.rows()) = machine_logits;
  all.bottomRows(noise_logits.rows()) = noise_logits;
  std::vector<int> targets = labels;
  targets.resize(static_cast<std::size_t>(all.rows()), kConditionClasses);
  auto out = cce_batch(all, targets, log_floor);
  // report the machine-only CCE for diagnostics
  out.classification = cce_batch(machine_logits, labels, log_floor).value;
  return out;
}

/// Training loss of a technique. `logits` stacks the machine items (first
/// labels.size() rows) above the noise items.
template <typename Scalar>
LossResult<Scalar> technique_loss(const TechniqueConfig& cfg, const Mat<Scalar>& logits,
                                  const std::vector<int>& labels) {
  const auto m = static_cast<Eigen::Index>(labels.size());
  require(m <= logits.rows(), ErrorCode::kShapeMismatch, "more labels than logits rows");
  require(logits.cols() == output_dim(cfg.kind), ErrorCode::kShapeMismatch,
          "logit width does not match the technique's output dimension");
  const Mat<Scalar> machine = logits.topRows(m);
  const Mat<Scalar> noise = logits.bottomRows(logits.rows() - m);
  switch (cfg.kind) {
    case Technique::kSM:
    case Technique::kFE: {
      require(noise.rows() == 0, ErrorCode::kInvalidArgument, "SM/FE train without noise exposure");
      return cce_batch(machine, labels, cfg.log_floor);
    }
    case Technique::kNE: return ne_loss(machine, labels, noise, cfg.alpha, cfg.log_floor);
    case Technique::kEB: return eb_total_loss(machine, labels, noise, cfg);
    case Technique::kAC: return ac_loss(machine, labels, noise, cfg.log_floor);
  }
  fail(ErrorCode::kInvalidArgument, "unknown technique");
}

// --- inference ---------------------------------------------------------------------

struct Decision {
  bool noise = false;
  int condition = -1;  // 0..12 when not noise
  double noise_score = std::numeric_limits<double>::quiet_NaN();

  /// 14-way label: condition index, or kNoiseLabel.
  int label() const { return noise ? kNoiseLabel : condition; }
};

/// Score-based kinds: noise iff score > eta, else argmax over the 13
/// conditions. AC: argmax over 14 outputs, noise iff the extra class wins.
Decision decide(const TechniqueConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& logits);

struct Calibration {
  double eta = 0.0;
  double macro_f1 = 0.0;
};

/// Chooses eta maximizing 14-class macro F1 on a validation set. Items with
/// score > eta are labeled noise, the others take their predicted condition.
/// Candidates are -inf, the midpoints of consecutive distinct scores and
/// +inf; ties go to the smallest eta.
Calibration calibrate_threshold(const std::vector<double>& scores, const std::vector<int>& truth,
                                const std::vector<int>& predicted_condition);

}  // namespace nrfc
