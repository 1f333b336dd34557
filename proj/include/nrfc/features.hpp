#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "nrfc/audio.hpp"

namespace nrfc {

struct FeatureConfig {
  int n_fft = 512;
  int hop = 256;
  int n_mels = 32;
  double fmin = 0.0;
  double fmax = 4000.0;
  double log_floor = 1e-10;

  /// 8 kHz / 2 s desk-scale front end.
  static FeatureConfig desk() { return {}; }
  /// 16 kHz / 12 s front end producing (128, 374) frames.
  static FeatureConfig reference() { return {1024, 512, 128, 0.0, 8000.0, 1e-10}; }

  void validate(int sample_rate) const;
  /// floor((n_samples - n_fft) / hop) + 1.
  Eigen::Index frame_count(Eigen::Index n_samples) const;
  int n_bins() const { return n_fft / 2 + 1; }
};

/// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Periodic Hann window of length n.
Eigen::VectorXd hann_window(int n);

/// Hann-windowed, non-centered power spectrogram, shape (n_fft/2+1, n_frames).
Eigen::MatrixXd stft_power(const AudioClip& clip, const FeatureConfig& cfg);

/// Center frequencies (Hz) of the mel filters.
Eigen::VectorXd mel_centers(const FeatureConfig& cfg, int sample_rate);

/// Triangular filters, shape (n_mels, n_fft/2+1).
Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg, int sample_rate);

struct LogMelFeature {
  Eigen::MatrixXd values;  // (n_mels, n_frames)

  Eigen::Index n_mels() const { return values.rows(); }
  Eigen::Index n_frames() const { return values.cols(); }
};

/// Mel filterbank and window cached for one (config, sample rate) pair.
class LogMelExtractor {
 public:
  LogMelExtractor(const FeatureConfig& cfg, int sample_rate);

  LogMelFeature operator()(const AudioClip& clip) const;
  const FeatureConfig& config() const { return cfg_; }
  const Eigen::MatrixXd& filterbank() const { return filterbank_; }

 private:
  FeatureConfig cfg_;
  int sample_rate_;
  Eigen::MatrixXd filterbank_;
};

/// log(filterbank * power + log_floor).
LogMelFeature log_mel(const AudioClip& clip, const FeatureConfig& cfg);

}  // namespace nrfc
