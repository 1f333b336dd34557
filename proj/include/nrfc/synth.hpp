#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nrfc/audio.hpp"

namespace nrfc {

enum class MachineType { kCar, kTrain };

/// Machine condition: normal, or one of four fault types at one of three
/// damage levels. Class index 0 is normal; faults follow as
/// 1 + 3 * fault_type + level (fault_type a..d = 0..3, level low..high = 0..2).
struct MachineCondition {
  static constexpr int kCount = 13;

  bool fault = false;
  int fault_type = 0;
  int level = 0;

  static MachineCondition normal() { return {}; }
  static MachineCondition faulty(int type, int level);
  static MachineCondition from_index(int index);
  static MachineCondition parse(const std::string& name);
  static std::array<MachineCondition, kCount> all();

  int index() const { return fault ? 1 + 3 * fault_type + level : 0; }
  /// "normal", "a_low", "a_middle", ..., "d_high".
  std::string name() const;

  friend bool operator==(const MachineCondition&, const MachineCondition&) = default;
};

enum class NoiseEnvironment { kN1 = 0, kN2 = 1, kN3 = 2, kN4 = 3 };
inline constexpr int kNoiseEnvironmentCount = 4;

std::string to_string(MachineType m);
std::string to_string(NoiseEnvironment env);
MachineType parse_machine(const std::string& name);
NoiseEnvironment parse_environment(const std::string& name);
std::array<NoiseEnvironment, kNoiseEnvironmentCount> all_environments();

struct HarmonicProfile {
  double f0_hz = 120.0;
  int harmonics = 16;
  double rolloff = 0.8;          // partial h has amplitude h^-rolloff
  double formant_hz = 800.0;     // Gaussian emphasis of the partials
  double formant_width_hz = 500.0;
  double formant_gain = 1.5;
  double f0_jitter = 0.01;       // relative std-dev of the seeded f0 offset
  double pulse_rate_hz = 0.0;    // periodic amplitude pulsing (e.g. rail joints); 0 = off
  double pulse_depth = 0.0;
};

/// Fault signature parameters. Frequencies are ratios to the machine f0 so the
/// same fault shows up in a machine-appropriate band.
struct FaultProfile {
  // a: bearing whine, inharmonic partials
  std::vector<double> whine_ratios{17.3, 19.7, 23.1};
  // b: loose-part rattle, half-order partials with flutter
  int rattle_partials = 6;
  double rattle_first_order = 2.5;
  double flutter_hz = 11.0;
  // c: friction, band-limited noise bursts
  double friction_center_ratio = 12.0;
  double friction_rel_bandwidth = 0.15;
  double friction_burst_hz = 6.0;
  // d: impacts, decaying resonant clicks
  double impact_rate_hz = 7.0;
  double impact_resonance_ratio = 28.0;
  double impact_decay_s = 0.012;
  /// Fault-component rms relative to the harmonic stack, per damage level.
  std::array<double, 3> level_depth{0.4, 1.0, 2.5};
};

struct NoiseProfile {
  /// Piecewise-linear spectral envelope: (frequency Hz, gain dB) knots.
  std::vector<std::pair<double, double>> envelope_db;
  double am_rate_hz = 0.0;
  double am_depth = 0.0;
};

/// Generator constants. The shipped `config/synth_v1.json` holds the same
/// values as `SynthConfig{}`.
struct SynthConfig {
  int version = 1;
  HarmonicProfile car;
  HarmonicProfile train;
  FaultProfile faults;
  double machine_rms = 0.1;
  double stochastic_level = 0.03;  // white component, relative to harmonic rms
  std::array<NoiseProfile, kNoiseEnvironmentCount> noise;
  double noise_rms = 0.15;
  double noise_rms_spread = 0.2;   // seeded relative rms variation per clip

  SynthConfig();
  static SynthConfig load(const std::filesystem::path& path);
  static SynthConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  const HarmonicProfile& profile(MachineType m) const { return m == MachineType::kCar ? car : train; }
};

AudioClip gen_machine_sound(const SynthConfig& cfg, MachineType machine, MachineCondition condition,
                            double duration_s, int sample_rate, std::uint64_t seed);

AudioClip gen_noise(const SynthConfig& cfg, NoiseEnvironment env, double duration_s,
                    int sample_rate, std::uint64_t seed);

/// Writes `machine/<condition>/<i>.wav` and `noise/<env>/<i>.wav` under `root`.
void write_corpus(const SynthConfig& cfg, MachineType machine, const std::filesystem::path& root,
                  int clips_per_class, double duration_s, int sample_rate, std::uint64_t seed);

}  // namespace nrfc

namespace nrfc {

/// Seed of the index-th clean clip of a condition in a seeded corpus.
std::uint64_t machine_clip_seed(std::uint64_t corpus_seed, MachineType machine,
                                MachineCondition condition, std::uint64_t index);
/// Seed of the index-th noise clip of an environment in a seeded corpus.
std::uint64_t noise_clip_seed(std::uint64_t corpus_seed, NoiseEnvironment env, std::uint64_t index);

}  // namespace nrfc
