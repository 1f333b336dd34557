#pragma once

#include <Eigen/Core>
#include <filesystem>

#include "nrfc/error.hpp"

namespace nrfc {

/// Mono audio clip. Samples are double precision and nominally in [-1, 1];
/// values outside that range are allowed in memory and clamped on write.
class AudioClip {
 public:
  AudioClip() = default;
  AudioClip(Eigen::VectorXd samples, int sample_rate);

  /// Clip of `round(duration_s * sample_rate)` zero samples.
  static AudioClip zeros(double duration_s, int sample_rate);

  const Eigen::VectorXd& samples() const { return samples_; }
  int sample_rate() const { return sample_rate_; }
  Eigen::Index size() const { return samples_.size(); }
  bool empty() const { return samples_.size() == 0; }
  double duration() const { return static_cast<double>(size()) / sample_rate_; }

 private:
  Eigen::VectorXd samples_;
  int sample_rate_ = 0;
};

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Root-mean-square amplitude.
double rms(const AudioClip& clip);

/// Largest absolute sample value.
double peak(const AudioClip& clip);

/// Circular shift to the right by round(shift_seconds * sample_rate) samples.
AudioClip time_shift(const AudioClip& clip, double shift_seconds);

/// Every sample multiplied by `gain`.
AudioClip scale(const AudioClip& clip, double gain);

/// Number of samples in a generated clip of the given duration.
Eigen::Index sample_count(double duration_s, int sample_rate);

}  // namespace nrfc
