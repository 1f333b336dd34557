#pragma once

#include <Eigen/Core>
#include <vector>

#include "nrfc/error.hpp"
#include "nrfc/features.hpp"

namespace nrfc {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Mode { kTrain, kEval };

/// Running statistics of one batch-norm layer, one entry per group.
template <typename Scalar>
struct BatchNormStats {
  Vec<Scalar> running_mean;
  Vec<Scalar> running_var;

  explicit BatchNormStats(Eigen::Index groups = 0)
      : running_mean(Vec<Scalar>::Zero(groups)), running_var(Vec<Scalar>::Ones(groups)) {}
};

template <typename Scalar>
struct BatchNormCache {
  Mat<Scalar> normalized;  // x-hat
  Vec<Scalar> inv_std;
  Mode mode = Mode::kTrain;
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Batch normalization over the columns of a (groups x samples) matrix: each
/// row is one group (a channel or a mel bin) normalized with its own mean and
/// variance, then scaled and shifted by a per-group affine.
///
/// Train mode uses the batch statistics and, when `update_running` is set,
/// moves the running statistics by r <- (1 - momentum) r + momentum * batch
/// (unbiased batch variance). Eval mode reads the running statistics.
template <typename Scalar>
Mat<Scalar> batch_norm_forward(const Mat<Scalar>& x, const Eigen::Ref<const Vec<Scalar>>& gamma,
                               const Eigen::Ref<const Vec<Scalar>>& beta, BatchNormStats<Scalar>& stats,
                               Mode mode, const BatchNormOptions& opt, BatchNormCache<Scalar>* cache,
                               bool update_running) {
  require(gamma.size() == x.rows() && beta.size() == x.rows() &&
              stats.running_mean.size() == x.rows(),
          ErrorCode::kShapeMismatch, "batch norm parameter size does not match group count");
  const Scalar eps = static_cast<Scalar>(opt.eps);
  const auto n = x.cols();

  Vec<Scalar> mean, var;
  if (mode == Mode::kTrain) {
    require(n > 1, ErrorCode::kInvalidArgument, "train-mode batch norm needs more than one sample");
    mean = x.rowwise().mean();
    var = (x.colwise() - mean).array().square().rowwise().mean().matrix();
    if (update_running) {
      const Scalar m = static_cast<Scalar>(opt.momentum);
      const Scalar unbias = static_cast<Scalar>(n) / static_cast<Scalar>(n - 1);
      stats.running_mean = (Scalar(1) - m) * stats.running_mean + m * mean;
      stats.running_var = (Scalar(1) - m) * stats.running_var + (m * unbias) * var;
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }
  const Vec<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Mat<Scalar> normalized = (x.colwise() - mean).array().colwise() * inv_std.array();
  Mat<Scalar> y = (normalized.array().colwise() * gamma.array()).colwise() + beta.array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->mode = mode;
  }
  return y;
}

/// Backward pass; accumulates into d_gamma / d_beta and returns dL/dx.
template <typename Scalar>
Mat<Scalar> batch_norm_backward(const Mat<Scalar>& dy, const Eigen::Ref<const Vec<Scalar>>& gamma,
                                const BatchNormCache<Scalar>& cache, Eigen::Ref<Vec<Scalar>> d_gamma,
                                Eigen::Ref<Vec<Scalar>> d_beta) {
  const Mat<Scalar>& xhat = cache.normalized;
  d_gamma += dy.cwiseProduct(xhat).rowwise().sum();
  d_beta += dy.rowwise().sum();
  const Mat<Scalar> dxhat = dy.array().colwise() * gamma.array();
  if (cache.mode == Mode::kEval) return dxhat.array().colwise() * cache.inv_std.array();

  const Scalar n = static_cast<Scalar>(dy.cols());
  const Vec<Scalar> sum_dxhat = dxhat.rowwise().sum();
  const Vec<Scalar> sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
  Mat<Scalar> dx = (dxhat * n).colwise() - sum_dxhat;
  dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * (cache.inv_std.array() / n);
}

/// Stacks a batch of log-Mel features side by side: (n_mels, B * n_frames),
/// example b occupying columns [b * n_frames, (b + 1) * n_frames).
template <typename Scalar>
Mat<Scalar> stack_features(const std::vector<const LogMelFeature*>& batch) {
  require(!batch.empty(), ErrorCode::kInvalidArgument, "empty feature batch");
  const auto rows = batch.front()->n_mels();
  const auto cols = batch.front()->n_frames();
  Mat<Scalar> out(rows, cols * static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    require(batch[b]->n_mels() == rows && batch[b]->n_frames() == cols, ErrorCode::kShapeMismatch,
            "inconsistent feature shapes in batch");
    out.middleCols(static_cast<Eigen::Index>(b) * cols, cols) = batch[b]->values.template cast<Scalar>();
  }
  return out;
}

/// Per-mel-bin batch normalization of a feature batch (the classifier's input
/// stage). Statistics pool over examples and frames.
inline std::vector<LogMelFeature> batch_normalize(const std::vector<LogMelFeature>& batch,
                                                  BatchNormStats<double>& stats,
                                                  const Vec<double>& gamma, const Vec<double>& beta,
                                                  Mode mode, const BatchNormOptions& opt = {}) {
  std::vector<const LogMelFeature*> ptrs;
  for (const auto& f : batch) ptrs.push_back(&f);
  const Mat<double> x = stack_features<double>(ptrs);
  const Mat<double> y = batch_norm_forward<double>(x, gamma, beta, stats, mode, opt, nullptr, true);
  std::vector<LogMelFeature> out(batch.size());
  const auto cols = batch.front().n_frames();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    out[b].values = y.middleCols(static_cast<Eigen::Index>(b) * cols, cols);
  }
  return out;
}

}  // namespace nrfc
