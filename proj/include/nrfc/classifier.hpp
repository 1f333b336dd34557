#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nrfc/batch_norm.hpp"
#include "nrfc/error.hpp"
#include "nrfc/random.hpp"

namespace nrfc {

/// Shape of the convolutional classifier: per-mel-bin input normalization,
/// then blocks of {conv 3x3 -> batch norm -> ReLU -> max pool 2x2}, global
/// average pooling ("squeeze") and an affine head producing the logits.
struct Architecture {
  int n_mels = 32;
  int n_frames = 61;
  std::vector<int> widths{16, 32, 64};
  int num_outputs = 13;
  BatchNormOptions bn;

  void validate() const {
    require(n_mels > 0 && n_frames > 0, ErrorCode::kInvalidArgument, "input size must be positive");
    require(!widths.empty(), ErrorCode::kInvalidArgument, "need at least one conv block");
    require(num_outputs > 0, ErrorCode::kInvalidArgument, "need at least one output");
    int h = n_mels, w = n_frames;
    for (int c : widths) {
      require(c > 0, ErrorCode::kInvalidArgument, "conv width must be positive");
      require(h >= 2 && w >= 2, ErrorCode::kInvalidArgument,
              "too many conv blocks for the input size (each block halves both axes)");
      h /= 2;
      w /= 2;
    }
  }

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.n_mels == b.n_mels && a.n_frames == b.n_frames && a.widths == b.widths &&
           a.num_outputs == b.num_outputs && a.bn.eps == b.bn.eps && a.bn.momentum == b.bn.momentum;
  }
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Mat<Scalar> value;
};

/// Per-parameter gradients, aligned with Model::params().
template <typename Scalar>
using Gradients = std::vector<Mat<Scalar>>;

template <typename Scalar>
struct ForwardCache {
  struct Block {
    int height = 0, width = 0;
    Mat<Scalar> columns;  // im2col of the block input
    BatchNormCache<Scalar> norm;
    Mat<Scalar> activated;  // post-ReLU, pre-pool
    std::vector<Eigen::Index> pool_argmax;
  };
  Eigen::Index batch = 0;
  BatchNormCache<Scalar> input_norm;
  std::vector<Block> blocks;
  int final_height = 0, final_width = 0;
  Mat<Scalar> pooled;  // (channels, batch) after global average pooling
};

/// Model parameters plus batch-norm running statistics.
///
/// Tensor order: input_norm.gamma, input_norm.beta, then per block
/// conv<i>.weight, bn<i>.gamma, bn<i>.beta, then head.weight, head.bias.
/// Vectors are stored as (n x 1) matrices.
template <typename Scalar>
class Model {
 public:
  Model() = default;

  /// Fan-in scaled uniform initialization (He bound sqrt(6 / fan_in) for the
  /// convolutions, 1 / sqrt(fan_in) for the head), zero biases, identity
  /// batch-norm affines.
  Model(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    Rng rng{seed, 0x494E4954ULL};
    auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
      Mat<Scalar> m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      return m;
    };
    params_.push_back({"input_norm.gamma", Mat<Scalar>::Ones(arch_.n_mels, 1)});
    params_.push_back({"input_norm.beta", Mat<Scalar>::Zero(arch_.n_mels, 1)});
    stats_.emplace_back(arch_.n_mels);
    int in = 1;
    for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
      const int out = arch_.widths[i];
      const std::string tag = std::to_string(i);
      params_.push_back({"conv" + tag + ".weight", uniform(out, in * 9, std::sqrt(6.0 / (in * 9)))});
      params_.push_back({"bn" + tag + ".gamma", Mat<Scalar>::Ones(out, 1)});
      params_.push_back({"bn" + tag + ".beta", Mat<Scalar>::Zero(out, 1)});
      stats_.emplace_back(out);
      in = out;
    }
    params_.push_back({"head.weight", uniform(arch_.num_outputs, in, 1.0 / std::sqrt(in))});
    params_.push_back({"head.bias", Mat<Scalar>::Zero(arch_.num_outputs, 1)});
  }

  const Architecture& arch() const { return arch_; }
  std::vector<NamedTensor<Scalar>>& params() { return params_; }
  const std::vector<NamedTensor<Scalar>>& params() const { return params_; }
  std::vector<BatchNormStats<Scalar>>& norm_stats() { return stats_; }
  const std::vector<BatchNormStats<Scalar>>& norm_stats() const { return stats_; }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }

  Gradients<Scalar> zero_gradients() const {
    Gradients<Scalar> g;
    for (const auto& p : params_) g.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
    return g;
  }

  template <typename Other>
  Model<Other> cast() const {
    Model<Other> out;
    out.arch_ = arch_;
    for (const auto& p : params_) out.params_.push_back({p.name, p.value.template cast<Other>()});
    for (const auto& s : stats_) {
      BatchNormStats<Other> t;
      t.running_mean = s.running_mean.template cast<Other>();
      t.running_var = s.running_var.template cast<Other>();
      out.stats_.push_back(std::move(t));
    }
    return out;
  }

  /// Logits (B x num_outputs) for a stacked input (n_mels, B * n_frames).
  /// Train mode normalizes with batch statistics and updates the running ones.
  Mat<Scalar> forward(const Mat<Scalar>& input, Mode mode, ForwardCache<Scalar>* cache = nullptr) {
    return forward_impl(input, mode, cache, stats_, true);
  }

  /// Same as forward() but never touches the running statistics; safe to call
  /// concurrently on a shared model.
  Mat<Scalar> forward_frozen(const Mat<Scalar>& input, Mode mode, ForwardCache<Scalar>* cache = nullptr) const {
    auto stats = stats_;
    return forward_impl(input, mode, cache, stats, false);
  }

  /// Exact gradients of a scalar loss given dL/dlogits (B x num_outputs) and
  /// the cache of the forward pass that produced those logits.
  Gradients<Scalar> backward(const ForwardCache<Scalar>& cache, const Mat<Scalar>& d_logits) const {
    require(d_logits.rows() == cache.batch && d_logits.cols() == arch_.num_outputs,
            ErrorCode::kShapeMismatch, "dlogits shape does not match the forward batch");
    Gradients<Scalar> grads = zero_gradients();
    const std::size_t head = params_.size() - 2;

    const Mat<Scalar> dz = d_logits.transpose();  // (K, B)
    grads[head] = dz * cache.pooled.transpose();
    grads[head + 1] = dz.rowwise().sum();
    const Mat<Scalar> d_pooled = params_[head].value.transpose() * dz;  // (C, B)

    const int area = cache.final_height * cache.final_width;
    Mat<Scalar> d_act(d_pooled.rows(), cache.batch * area);
    for (Eigen::Index b = 0; b < cache.batch; ++b) {
      d_act.middleCols(b * area, area) = (d_pooled.col(b) / static_cast<Scalar>(area)).replicate(1, area);
    }

    for (std::size_t i = cache.blocks.size(); i-- > 0;) {
      const auto& blk = cache.blocks[i];
      const std::size_t pi = 2 + 3 * i;
      // max pool
      Mat<Scalar> d_relu = Mat<Scalar>::Zero(blk.activated.rows(), blk.activated.cols());
      const Eigen::Index pooled_cols = d_act.cols();
      for (Eigen::Index c = 0; c < d_act.rows(); ++c) {
        for (Eigen::Index j = 0; j < pooled_cols; ++j) {
          d_relu(c, blk.pool_argmax[static_cast<std::size_t>(c * pooled_cols + j)]) += d_act(c, j);
        }
      }
      // ReLU
      d_relu = (blk.activated.array() > Scalar(0)).select(d_relu, Scalar(0));
      // batch norm
      const Mat<Scalar> d_conv =
          batch_norm_backward<Scalar>(d_relu, vec(pi + 1), blk.norm, vec_mut(grads[pi + 1]), vec_mut(grads[pi + 2]));
      // convolution
      grads[pi] = d_conv * blk.columns.transpose();
      const Mat<Scalar> d_columns = params_[pi].value.transpose() * d_conv;
      d_act = col2im(d_columns, params_[pi].value.cols() / 9, cache.batch, blk.height, blk.width);
    }

    // input normalization: d_act is (1, B * H * W); regroup per mel bin
    const int h = arch_.n_mels, w = arch_.n_frames;
    Mat<Scalar> d_norm(h, cache.batch * w);
    for (Eigen::Index b = 0; b < cache.batch; ++b) {
      for (int r = 0; r < h; ++r) {
        d_norm.row(r).segment(b * w, w) = d_act.row(0).segment(b * h * w + r * w, w);
      }
    }
    batch_norm_backward<Scalar>(d_norm, vec(0), cache.input_norm, vec_mut(grads[0]), vec_mut(grads[1]));
    return grads;
  }

 private:
  template <typename>
  friend class Model;

  Eigen::Map<const Vec<Scalar>> vec(std::size_t i) const {
    return {params_[i].value.data(), params_[i].value.size()};
  }
  static Eigen::Map<Vec<Scalar>> vec_mut(Mat<Scalar>& m) { return {m.data(), m.size()}; }

  /// (C, B*H*W) -> (9C, B*H*W), zero padding of one on every side.
  static Mat<Scalar> im2col(const Mat<Scalar>& x, Eigen::Index batch, int h, int w) {
    const Eigen::Index channels = x.rows();
    const Eigen::Index area = static_cast<Eigen::Index>(h) * w;
    Mat<Scalar> cols = Mat<Scalar>::Zero(channels * 9, batch * area);
    for (Eigen::Index c = 0; c < channels; ++c) {
      const Scalar* src = x.row(c).data();
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          Scalar* dst = cols.row(c * 9 + kh * 3 + kw).data();
          for (Eigen::Index b = 0; b < batch; ++b) {
            for (int r = 0; r < h; ++r) {
              const int rs = r + kh - 1;
              if (rs < 0 || rs >= h) continue;
              const Scalar* s = src + b * area + static_cast<Eigen::Index>(rs) * w;
              Scalar* d = dst + b * area + static_cast<Eigen::Index>(r) * w;
              const int lo = kw == 0 ? 1 : 0;
              const int hi = kw == 2 ? w - 1 : w;
              for (int q = lo; q < hi; ++q) d[q] = s[q + kw - 1];
            }
          }
        }
      }
    }
    return cols;
  }

  static Mat<Scalar> col2im(const Mat<Scalar>& cols, Eigen::Index channels, Eigen::Index batch, int h, int w) {
    const Eigen::Index area = static_cast<Eigen::Index>(h) * w;
    Mat<Scalar> x = Mat<Scalar>::Zero(channels, batch * area);
    for (Eigen::Index c = 0; c < channels; ++c) {
      Scalar* dst = x.row(c).data();
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          const Scalar* src = cols.row(c * 9 + kh * 3 + kw).data();
          for (Eigen::Index b = 0; b < batch; ++b) {
            for (int r = 0; r < h; ++r) {
              const int rs = r + kh - 1;
              if (rs < 0 || rs >= h) continue;
              Scalar* d = dst + b * area + static_cast<Eigen::Index>(rs) * w;
              const Scalar* s = src + b * area + static_cast<Eigen::Index>(r) * w;
              const int lo = kw == 0 ? 1 : 0;
              const int hi = kw == 2 ? w - 1 : w;
              for (int q = lo; q < hi; ++q) d[q + kw - 1] += s[q];
            }
          }
        }
      }
    }
    return x;
  }

  Mat<Scalar> forward_impl(const Mat<Scalar>& input, Mode mode, ForwardCache<Scalar>* cache,
                           std::vector<BatchNormStats<Scalar>>& stats, bool update_running) const {
    const int h0 = arch_.n_mels, w0 = arch_.n_frames;
    require(input.rows() == h0 && input.cols() % w0 == 0 && input.cols() > 0, ErrorCode::kShapeMismatch,
            "input shape does not match the architecture (" + std::to_string(h0) + " mels x " +
                std::to_string(w0) + " frames)");
    const Eigen::Index batch = input.cols() / w0;
    ForwardCache<Scalar> local;
    ForwardCache<Scalar>& c = cache ? *cache : local;
    c.batch = batch;
    c.blocks.assign(arch_.widths.size(), {});

    const Mat<Scalar> normed = batch_norm_forward<Scalar>(input, vec(0), vec(1), stats[0], mode, arch_.bn,
                                                          cache ? &c.input_norm : nullptr, update_running);
    Mat<Scalar> act(1, batch * h0 * w0);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int r = 0; r < h0; ++r) {
        act.row(0).segment(b * h0 * w0 + r * w0, w0) = normed.row(r).segment(b * w0, w0);
      }
    }

    int h = h0, w = w0;
    for (std::size_t i = 0; i < arch_.widths.size(); ++i) {
      auto& blk = c.blocks[i];
      const std::size_t pi = 2 + 3 * i;
      blk.height = h;
      blk.width = w;
      Mat<Scalar> columns = im2col(act, batch, h, w);
      const Mat<Scalar> conv = params_[pi].value * columns;
      Mat<Scalar> activated = batch_norm_forward<Scalar>(conv, vec(pi + 1), vec(pi + 2), stats[i + 1], mode,
                                                         arch_.bn, cache ? &blk.norm : nullptr, update_running)
                                  .cwiseMax(Scalar(0));
      const int ho = h / 2, wo = w / 2;
      const Eigen::Index in_area = static_cast<Eigen::Index>(h) * w;
      const Eigen::Index out_area = static_cast<Eigen::Index>(ho) * wo;
      Mat<Scalar> pooled(activated.rows(), batch * out_area);
      if (cache) blk.pool_argmax.assign(static_cast<std::size_t>(pooled.size()), 0);
      for (Eigen::Index ch = 0; ch < activated.rows(); ++ch) {
        for (Eigen::Index b = 0; b < batch; ++b) {
          for (int r = 0; r < ho; ++r) {
            for (int q = 0; q < wo; ++q) {
              Eigen::Index best = b * in_area + static_cast<Eigen::Index>(2 * r) * w + 2 * q;
              for (Eigen::Index cand : {best + 1, best + w, best + w + 1}) {
                if (activated(ch, cand) > activated(ch, best)) best = cand;
              }
              const Eigen::Index j = b * out_area + static_cast<Eigen::Index>(r) * wo + q;
              pooled(ch, j) = activated(ch, best);
              if (cache) blk.pool_argmax[static_cast<std::size_t>(ch * pooled.cols() + j)] = best;
            }
          }
        }
      }
      if (cache) {
        blk.columns = std::move(columns);
        blk.activated = std::move(activated);
      }
      act = std::move(pooled);
      h = ho;
      w = wo;
    }

    const Eigen::Index area = static_cast<Eigen::Index>(h) * w;
    Mat<Scalar> squeezed(act.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) squeezed.col(b) = act.middleCols(b * area, area).rowwise().mean();
    const std::size_t head = params_.size() - 2;
    Mat<Scalar> logits = ((params_[head].value * squeezed).colwise() + vec(head + 1)).transpose();
    if (cache) {
      c.final_height = h;
      c.final_width = w;
      c.pooled = std::move(squeezed);
    }
    return logits;
  }

  Architecture arch_;
  std::vector<NamedTensor<Scalar>> params_;
  std::vector<BatchNormStats<Scalar>> stats_;
};

// --- optimization -------------------------------------------------------------

template <typename Scalar>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to the gradient; 0 = off
  long step = 0;
  std::vector<Mat<Scalar>> first_moment;
  std::vector<Mat<Scalar>> second_moment;
};

/// One bias-corrected Adam update in place.
template <typename Scalar>
void adam_step(std::vector<NamedTensor<Scalar>>& params, const Gradients<Scalar>& grads,
               AdamState<Scalar>& state, double lr) {
  require(grads.size() == params.size(), ErrorCode::kShapeMismatch, "gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].rows() == params[i].value.rows() && grads[i].cols() == params[i].value.cols(),
            ErrorCode::kShapeMismatch, "gradient shape mismatch for " + params[i].name);
    require(grads[i].allFinite(), ErrorCode::kNumerical, "non-finite gradient for " + params[i].name);
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
      state.second_moment.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  const Scalar step_size = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(state.eps);
  const Scalar decay = static_cast<Scalar>(state.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<Scalar> g = grads[i];
    if (decay != Scalar(0)) g += decay * params[i].value;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    params[i].value.array() -= step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

/// Piecewise learning rate: `base` through `hold_until`, linear down to
/// `final` at `ramp_end`, then `final` through `epochs`.
struct LrSchedule {
  double base = 1e-4;
  double final = 1e-5;
  int hold_until = 30;
  int ramp_end = 90;
  int epochs = 100;

  double at(int epoch) const {
    require(epoch >= 1 && epoch <= epochs, ErrorCode::kInvalidArgument,
            "epoch " + std::to_string(epoch) + " outside schedule [1, " + std::to_string(epochs) + "]");
    if (epoch <= hold_until) return base;
    if (epoch >= ramp_end) return final;
    const double frac = static_cast<double>(epoch - hold_until) / (ramp_end - hold_until);
    return base + (final - base) * frac;
  }
};

inline double lr_at_epoch(int epoch, const LrSchedule& schedule = {}) { return schedule.at(epoch); }

// --- gradient verification ------------------------------------------------------

/// Loss of a logits batch and its gradient with respect to the logits.
template <typename Scalar>
using LossFn = std::function<std::pair<Scalar, Mat<Scalar>>(const Mat<Scalar>& logits)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  Eigen::Index checked = 0;
};

/// Compares every analytic gradient against a central finite difference.
/// Relative error is |a - n| / max(|a|, |n|, floor); entries where both
/// gradients are below `floor` contribute their absolute difference / floor.
/// Train-mode batch norm is evaluated without touching running statistics.
template <typename Scalar>
GradCheckReport grad_check(const Model<Scalar>& model, const Mat<Scalar>& input, Mode mode,
                           const LossFn<Scalar>& loss, double eps = 1e-5, double floor = 1e-8) {
  ForwardCache<Scalar> cache;
  const Mat<Scalar> logits = model.forward_frozen(input, mode, &cache);
  const auto [value, d_logits] = loss(logits);
  require(std::isfinite(static_cast<double>(value)), ErrorCode::kNumerical, "non-finite loss in grad_check");
  const Gradients<Scalar> analytic = model.backward(cache, d_logits);

  Model<Scalar> probe = model;
  GradCheckReport report;
  for (std::size_t i = 0; i < probe.params().size(); ++i) {
    auto& tensor = probe.params()[i].value;
    for (Eigen::Index k = 0; k < tensor.size(); ++k) {
      const Scalar original = tensor.data()[k];
      tensor.data()[k] = original + static_cast<Scalar>(eps);
      const double plus = static_cast<double>(loss(probe.forward_frozen(input, mode)).first);
      tensor.data()[k] = original - static_cast<Scalar>(eps);
      const double minus = static_cast<double>(loss(probe.forward_frozen(input, mode)).first);
      tensor.data()[k] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = static_cast<double>(analytic[i].data()[k]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = probe.params()[i].name;
        report.worst_index = k;
      }
    }
  }
  return report;
}

}  // namespace nrfc
