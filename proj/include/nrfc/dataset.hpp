#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nrfc/audio.hpp"
#include "nrfc/synth.hpp"
#include "nrfc/techniques.hpp"

namespace nrfc {

enum class SplitName { kTrain = 0, kValidation = 1, kTest = 2 };
std::string to_string(SplitName s);
SplitName parse_split(const std::string& name);

/// 14-way label names: condition names, then "noise".
std::string label_name(int label);
int parse_label(const std::string& name);

struct LabeledExample {
  AudioClip clip;
  int label = 0;  // 0..12 machine condition, kNoiseLabel for noise-only clips
  NoiseEnvironment env = NoiseEnvironment::kN1;
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // machine examples only
  std::string id;  // clip identity, unique across all splits of a dataset

  bool is_noise() const { return label == kNoiseLabel; }
};

/// Per-split class counts. Normal = 4 x per-fault-class count and noise =
/// normal + all fault classes, as in the reference data tables.
struct SplitCounts {
  int per_fault = 0;
  int normal() const { return 4 * per_fault; }
  int fault_total() const { return 12 * per_fault; }
  int machine_total() const { return normal() + fault_total(); }
  int noise() const { return machine_total(); }
};

struct SplitSpec {
  std::array<int, 3> base_per_fault{50, 25, 25};  // train, validation, test
  double scale = 1.0;

  /// Toy car: 50 / 25 / 25 per fault class.
  static SplitSpec table1(double scale = 1.0) { return {{50, 25, 25}, scale}; }
  /// Toy train: 120 / 40 / 40 per fault class.
  static SplitSpec table2(double scale = 1.0) { return {{120, 40, 40}, scale}; }
  static SplitSpec for_machine(MachineType m, double scale = 1.0) {
    return m == MachineType::kCar ? table1(scale) : table2(scale);
  }

  /// Per-fault count = max(1, round(base * scale)).
  SplitCounts counts(SplitName split) const;
};

struct MixResult {
  AudioClip mixture;
  AudioClip signal_part;  // clean signal as present in the mixture
  AudioClip noise_part;   // scaled noise as present in the mixture
  double noise_gain = 1.0;
  double rescale = 1.0;   // < 1 when the mixture was normalized to peak 1
};

/// signal + g * noise with g = rms(signal) / (rms(noise) 10^(snr/20)); if the
/// result peaks above 1 the whole mixture is scaled down (SNR unchanged).
/// snr_db = +inf returns the signal unchanged.
MixResult mix_components(const AudioClip& signal, const AudioClip& noise, double snr_db);
AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, double snr_db);

/// 20 log10(rms(signal_part) / rms(noise_part)).
double measured_snr_db(const MixResult& mix);

/// Circular time shift (seconds, in [0, 2]) followed by a gain in [0.5, 2].
AudioClip augment_noise(const AudioClip& clip, double shift_s, double gain);

/// Noise environment of every split and family. Machine examples are clean
/// sounds mixed with noise from the machine_* environment; noise-only
/// examples come from the noise_* environment.
struct EnvAssignment {
  NoiseEnvironment machine_train, machine_validation, machine_test;
  NoiseEnvironment noise_train, noise_validation, noise_test;

  /// Same environment everywhere (clips still disjoint).
  static EnvAssignment same(NoiseEnvironment env);
  /// Train and validation in one environment, test in another.
  static EnvAssignment unseen(NoiseEnvironment train, NoiseEnvironment test);
  /// Machine sounds in every split mixed with `test` noise; noise-only
  /// exposure clips for training and validation from `exposure`.
  static EnvAssignment exposure(NoiseEnvironment exposure, NoiseEnvironment test);

  NoiseEnvironment machine(SplitName s) const;
  NoiseEnvironment noise(SplitName s) const;
  /// "N1/N1/N2"-style label: train / validation / test noise.
  std::string label() const;

  friend bool operator==(const EnvAssignment&, const EnvAssignment&) = default;
};

/// Supplier of clean machine clips and noise clips by index.
class ClipSource {
 public:
  virtual ~ClipSource() = default;
  virtual AudioClip machine(MachineType m, MachineCondition c, std::uint64_t index) const = 0;
  virtual AudioClip noise(NoiseEnvironment env, std::uint64_t index) const = 0;
  /// Number of available clips; nullopt = unbounded.
  virtual std::optional<std::uint64_t> machine_capacity(MachineType, MachineCondition) const { return std::nullopt; }
  virtual std::optional<std::uint64_t> noise_capacity(NoiseEnvironment) const { return std::nullopt; }
};

/// Clips from the synthetic generator, memoized per index.
class SyntheticSource : public ClipSource {
 public:
  SyntheticSource(SynthConfig cfg, double duration_s, int sample_rate, std::uint64_t corpus_seed);

  AudioClip machine(MachineType m, MachineCondition c, std::uint64_t index) const override;
  AudioClip noise(NoiseEnvironment env, std::uint64_t index) const override;

 private:
  SynthConfig cfg_;
  double duration_s_;
  int sample_rate_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  mutable std::map<std::array<std::uint64_t, 4>, AudioClip> cache_;
};

/// Clips listed in a source manifest CSV with header `path,kind,class` where
/// kind is machine|noise and class a condition name or N1..N4. Relative
/// paths resolve against the manifest's directory. Machine clips are not
/// distinguished by machine type; one pool per manifest.
class WavPoolSource : public ClipSource {
 public:
  explicit WavPoolSource(const std::filesystem::path& manifest);

  AudioClip machine(MachineType m, MachineCondition c, std::uint64_t index) const override;
  AudioClip noise(NoiseEnvironment env, std::uint64_t index) const override;
  std::optional<std::uint64_t> machine_capacity(MachineType, MachineCondition c) const override;
  std::optional<std::uint64_t> noise_capacity(NoiseEnvironment env) const override;

 private:
  std::array<std::vector<std::filesystem::path>, MachineCondition::kCount> machine_;
  std::array<std::vector<std::filesystem::path>, kNoiseEnvironmentCount> noise_;
};

struct DatasetSplits {
  std::vector<LabeledExample> train, validation, test;

  const std::vector<LabeledExample>& split(SplitName s) const;
  std::vector<LabeledExample>& split(SplitName s);
};

struct DatasetOptions {
  SplitSpec spec;
  MachineType machine = MachineType::kCar;
  EnvAssignment envs = EnvAssignment::same(NoiseEnvironment::kN1);
  double snr_lo = -10.0;
  double snr_hi = 0.0;
  std::uint64_t seed = 0;
};

/// Builds disjoint train / validation / test sets. Each machine example
/// mixes a distinct clean clip with a distinct noise clip at an SNR drawn
/// uniformly from [snr_lo, snr_hi] (keyed by seed, split and index).
DatasetSplits build_splits(const DatasetOptions& opt, const ClipSource& source);
DatasetSplits build_splits(const SplitSpec& spec, MachineType machine, NoiseEnvironment env_train,
                           NoiseEnvironment env_test, double snr_lo, double snr_hi, std::uint64_t seed,
                           const ClipSource& source);

struct BatchIndices {
  std::vector<std::size_t> machine;
  std::vector<std::size_t> noise;
};

/// Full batches of `batch_machine` per epoch: floor(machine_count / batch_machine).
std::size_t steps_per_epoch(std::size_t machine_count, std::size_t batch_machine);

/// Indices of one training step. Machine items follow a per-epoch
/// permutation without replacement; noise items follow their own per-epoch
/// permutation and wrap around when the noise family runs out.
BatchIndices sample_batch(std::size_t machine_count, std::size_t noise_count, std::size_t batch_machine,
                          std::size_t batch_noise, std::uint64_t seed, int epoch, std::size_t step);

/// Machine examples first, then noise, for the given split.
std::vector<std::size_t> family_indices(const std::vector<LabeledExample>& split, bool noise);

/// Writes every clip as WAV under `dir/<split>/` and a manifest CSV with
/// columns path,label,env,snr_db,split,id (paths relative to `dir`).
void write_dataset(const DatasetSplits& data, const std::filesystem::path& dir);
/// Reads a manifest written by write_dataset.
DatasetSplits read_dataset(const std::filesystem::path& manifest);

}  // namespace nrfc
