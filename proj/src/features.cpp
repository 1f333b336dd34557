#include "nrfc/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/FFT>

namespace nrfc {

void FeatureConfig::validate(int sample_rate) const {
  require(n_fft > 0 && hop > 0 && n_mels > 0, ErrorCode::kConfig, "feature sizes must be positive");
  require(hop <= n_fft, ErrorCode::kConfig, "hop must not exceed n_fft");
  require(fmin >= 0.0 && fmin < fmax, ErrorCode::kConfig, "need 0 <= fmin < fmax");
  require(fmax <= sample_rate / 2.0 + 1e-9, ErrorCode::kConfig, "fmax exceeds the Nyquist frequency");
  require(log_floor > 0.0, ErrorCode::kConfig, "log floor must be positive");
}

Eigen::Index FeatureConfig::frame_count(Eigen::Index n_samples) const {
  require(n_samples >= n_fft, ErrorCode::kInvalidArgument, "clip is shorter than one frame");
  return (n_samples - n_fft) / hop + 1;
}

Eigen::VectorXd hann_window(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

Eigen::MatrixXd stft_power(const AudioClip& clip, const FeatureConfig& cfg) {
  const Eigen::Index frames = cfg.frame_count(clip.size());
  const Eigen::VectorXd window = hann_window(cfg.n_fft);
  Eigen::MatrixXd power(cfg.n_bins(), frames);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Eigen::VectorXd frame(cfg.n_fft);
  Eigen::VectorXcd spectrum;
  for (Eigen::Index t = 0; t < frames; ++t) {
    frame = clip.samples().segment(t * cfg.hop, cfg.n_fft).cwiseProduct(window);
    fft.fwd(spectrum, frame);
    power.col(t) = spectrum.head(cfg.n_bins()).cwiseAbs2();
  }
  return power;
}

Eigen::VectorXd mel_centers(const FeatureConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  Eigen::VectorXd centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) centers[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (cfg.n_mels + 1));
  return centers;
}

Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.fmax);
  Eigen::VectorXd edges(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m) edges[m] = mel_to_hz(lo + (hi - lo) * m / (cfg.n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, cfg.n_bins());
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < cfg.n_bins(); ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.n_fft;
      if (f > left && f < right) {
        fb(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      }
    }
    if (fb.row(m).maxCoeff() <= 0.0) {
      fail(ErrorCode::kConfig, "mel filter " + std::to_string(m) +
                                   " covers no FFT bin; reduce n_mels or raise n_fft");
    }
  }
  return fb;
}

LogMelExtractor::LogMelExtractor(const FeatureConfig& cfg, int sample_rate)
    : cfg_(cfg), sample_rate_(sample_rate), filterbank_(mel_filterbank(cfg, sample_rate)) {}

LogMelFeature LogMelExtractor::operator()(const AudioClip& clip) const {
  require(clip.sample_rate() == sample_rate_, ErrorCode::kInvalidArgument,
          "clip sample rate does not match the feature extractor");
  const Eigen::MatrixXd power = stft_power(clip, cfg_);
  LogMelFeature out;
  out.values = ((filterbank_ * power).array() + cfg_.log_floor).log().matrix();
  return out;
}

LogMelFeature log_mel(const AudioClip& clip, const FeatureConfig& cfg) {
  return LogMelExtractor(cfg, clip.sample_rate())(clip);
}

}  // namespace nrfc
