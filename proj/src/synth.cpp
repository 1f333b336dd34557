#include "nrfc/synth.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "nrfc/random.hpp"

namespace nrfc {
namespace {

using Json = nlohmann::json;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr const char* kFaultNames = "abcd";
constexpr std::array<const char*, 3> kLevelNames{"low", "middle", "high"};

Eigen::ArrayXd time_axis(Eigen::Index n, int sample_rate) {
  return Eigen::ArrayXd::LinSpaced(n, 0.0, static_cast<double>(n - 1)) / sample_rate;
}

Eigen::ArrayXd white(Eigen::Index n, Rng& rng) {
  Eigen::ArrayXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
  return x;
}

Eigen::ArrayXd unit_rms(Eigen::ArrayXd x) {
  const double r = std::sqrt(x.square().mean());
  return r > 0.0 ? Eigen::ArrayXd(x / r) : x;
}

/// Filters `x` by a zero-phase magnitude response given as a function of Hz.
template <typename Gain>
Eigen::ArrayXd shape_spectrum(const Eigen::ArrayXd& x, int sample_rate, Gain gain) {
  const Eigen::Index n = x.size();
  Eigen::FFT<double> fft;
  std::vector<double> time(x.data(), x.data() + n);
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, time);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index mirrored = k <= n / 2 ? k : n - k;
    freq[static_cast<std::size_t>(k)] *= gain(static_cast<double>(mirrored) * sample_rate / n);
  }
  fft.inv(time, freq);
  return Eigen::Map<Eigen::ArrayXd>(time.data(), n);
}

double envelope_gain(const std::vector<std::pair<double, double>>& knots, double f) {
  if (knots.empty()) return 1.0;
  double db = knots.back().second;
  if (f <= knots.front().first) {
    db = knots.front().second;
  } else {
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (f <= knots[i].first) {
        const auto [f0, d0] = knots[i - 1];
        const auto [f1, d1] = knots[i];
        db = d0 + (d1 - d0) * (f - f0) / (f1 - f0);
        break;
      }
    }
  }
  return std::pow(10.0, db / 20.0);
}

Eigen::ArrayXd fault_component(const FaultProfile& fp, int type, double f0, const Eigen::ArrayXd& t,
                               int sample_rate, Rng& rng) {
  const double nyquist_guard = 0.45 * sample_rate;
  const Eigen::Index n = t.size();
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(n);
  switch (type) {
    case 0:  // whine
      for (double ratio : fp.whine_ratios) {
        const double f = ratio * f0;
        if (f >= nyquist_guard) continue;
        out += (kTwoPi * f * t + rng.uniform(0.0, kTwoPi)).sin();
      }
      break;
    case 1: {  // rattle
      for (int j = 0; j < fp.rattle_partials; ++j) {
        const double f = (fp.rattle_first_order + j) * f0;
        if (f >= nyquist_guard) continue;
        out += (kTwoPi * f * t + rng.uniform(0.0, kTwoPi)).sin() / (j + 1.0);
      }
      const Eigen::ArrayXd flutter =
          0.5 + 0.5 * (kTwoPi * fp.flutter_hz * t + rng.uniform(0.0, kTwoPi)).sin();
      out *= flutter.square();
      break;
    }
    case 2: {  // friction
      const double center = std::min(fp.friction_center_ratio * f0, nyquist_guard);
      const double width = fp.friction_rel_bandwidth * center;
      out = shape_spectrum(white(n, rng), sample_rate, [&](double f) {
        const double z = (f - center) / width;
        return std::exp(-0.5 * z * z);
      });
      const Eigen::ArrayXd bursts =
          0.5 + 0.5 * (kTwoPi * fp.friction_burst_hz * t + rng.uniform(0.0, kTwoPi)).cos();
      out *= bursts.square();
      break;
    }
    case 3: {  // impacts
      const double fr = std::min(fp.impact_resonance_ratio * f0, nyquist_guard);
      const double period = 1.0 / fp.impact_rate_hz;
      const auto ring = static_cast<Eigen::Index>(std::ceil(6.0 * fp.impact_decay_s * sample_rate));
      for (double start = rng.uniform(0.0, period); start < t[n - 1];
           start += period * rng.uniform(0.9, 1.1)) {
        const auto i0 = static_cast<Eigen::Index>(std::llround(start * sample_rate));
        const double amp = rng.uniform(0.8, 1.2);
        for (Eigen::Index i = i0; i < std::min(n, i0 + ring); ++i) {
          const double dt = static_cast<double>(i - i0) / sample_rate;
          out[i] += amp * std::exp(-dt / fp.impact_decay_s) * std::sin(kTwoPi * fr * dt);
        }
      }
      break;
    }
    default:
      fail(ErrorCode::kInvalidArgument, "unknown fault type");
  }
  return unit_rms(std::move(out));
}

// --- JSON mapping -----------------------------------------------------------

Json to_json(const HarmonicProfile& p) {
  return Json{{"f0_hz", p.f0_hz},
              {"harmonics", p.harmonics},
              {"rolloff", p.rolloff},
              {"formant_hz", p.formant_hz},
              {"formant_width_hz", p.formant_width_hz},
              {"formant_gain", p.formant_gain},
              {"f0_jitter", p.f0_jitter},
              {"pulse_rate_hz", p.pulse_rate_hz},
              {"pulse_depth", p.pulse_depth}};
}

void from_json(const Json& j, HarmonicProfile& p) {
  p.f0_hz = j.value("f0_hz", p.f0_hz);
  p.harmonics = j.value("harmonics", p.harmonics);
  p.rolloff = j.value("rolloff", p.rolloff);
  p.formant_hz = j.value("formant_hz", p.formant_hz);
  p.formant_width_hz = j.value("formant_width_hz", p.formant_width_hz);
  p.formant_gain = j.value("formant_gain", p.formant_gain);
  p.f0_jitter = j.value("f0_jitter", p.f0_jitter);
  p.pulse_rate_hz = j.value("pulse_rate_hz", p.pulse_rate_hz);
  p.pulse_depth = j.value("pulse_depth", p.pulse_depth);
}

Json to_json(const FaultProfile& f) {
  return Json{{"whine_ratios", f.whine_ratios},
              {"rattle_partials", f.rattle_partials},
              {"rattle_first_order", f.rattle_first_order},
              {"flutter_hz", f.flutter_hz},
              {"friction_center_ratio", f.friction_center_ratio},
              {"friction_rel_bandwidth", f.friction_rel_bandwidth},
              {"friction_burst_hz", f.friction_burst_hz},
              {"impact_rate_hz", f.impact_rate_hz},
              {"impact_resonance_ratio", f.impact_resonance_ratio},
              {"impact_decay_s", f.impact_decay_s},
              {"level_depth", f.level_depth}};
}

void from_json(const Json& j, FaultProfile& f) {
  f.whine_ratios = j.value("whine_ratios", f.whine_ratios);
  f.rattle_partials = j.value("rattle_partials", f.rattle_partials);
  f.rattle_first_order = j.value("rattle_first_order", f.rattle_first_order);
  f.flutter_hz = j.value("flutter_hz", f.flutter_hz);
  f.friction_center_ratio = j.value("friction_center_ratio", f.friction_center_ratio);
  f.friction_rel_bandwidth = j.value("friction_rel_bandwidth", f.friction_rel_bandwidth);
  f.friction_burst_hz = j.value("friction_burst_hz", f.friction_burst_hz);
  f.impact_rate_hz = j.value("impact_rate_hz", f.impact_rate_hz);
  f.impact_resonance_ratio = j.value("impact_resonance_ratio", f.impact_resonance_ratio);
  f.impact_decay_s = j.value("impact_decay_s", f.impact_decay_s);
  f.level_depth = j.value("level_depth", f.level_depth);
}

}  // namespace

// --- conditions and environments ---------------------------------------------

MachineCondition MachineCondition::faulty(int type, int level) {
  require(type >= 0 && type < 4, ErrorCode::kInvalidArgument, "fault type must be a..d");
  require(level >= 0 && level < 3, ErrorCode::kInvalidArgument, "damage level must be low..high");
  return {true, type, level};
}

MachineCondition MachineCondition::from_index(int index) {
  require(index >= 0 && index < kCount, ErrorCode::kInvalidArgument, "condition index out of range");
  if (index == 0) return normal();
  return faulty((index - 1) / 3, (index - 1) % 3);
}

std::array<MachineCondition, MachineCondition::kCount> MachineCondition::all() {
  std::array<MachineCondition, kCount> out;
  for (int i = 0; i < kCount; ++i) out[static_cast<std::size_t>(i)] = from_index(i);
  return out;
}

std::string MachineCondition::name() const {
  if (!fault) return "normal";
  return std::string(1, kFaultNames[fault_type]) + "_" + kLevelNames[static_cast<std::size_t>(level)];
}

MachineCondition MachineCondition::parse(const std::string& name) {
  for (const auto& c : all()) {
    if (c.name() == name) return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown machine condition: " + name);
}

std::string to_string(MachineType m) { return m == MachineType::kCar ? "car" : "train"; }

std::string to_string(NoiseEnvironment env) {
  return "N" + std::to_string(static_cast<int>(env) + 1);
}

MachineType parse_machine(const std::string& name) {
  if (name == "car") return MachineType::kCar;
  if (name == "train") return MachineType::kTrain;
  fail(ErrorCode::kInvalidArgument, "unknown machine (expected car|train): " + name);
}

NoiseEnvironment parse_environment(const std::string& name) {
  for (auto env : all_environments()) {
    if (to_string(env) == name) return env;
  }
  fail(ErrorCode::kInvalidArgument, "unknown noise environment (expected N1..N4): " + name);
}

std::array<NoiseEnvironment, kNoiseEnvironmentCount> all_environments() {
  return {NoiseEnvironment::kN1, NoiseEnvironment::kN2, NoiseEnvironment::kN3, NoiseEnvironment::kN4};
}

// --- config -----------------------------------------------------------------------

SynthConfig::SynthConfig() {
  train.f0_hz = 85.0;
  train.harmonics = 24;
  train.rolloff = 0.6;
  train.formant_hz = 1200.0;
  train.formant_width_hz = 600.0;
  train.formant_gain = 2.0;
  train.pulse_rate_hz = 3.0;
  train.pulse_depth = 0.4;

  // N1 low rumble, N2 mid-band hum, N3 high hiss, N4 flat with a low bump and slow swell.
  noise[0].envelope_db = {{0, 0}, {200, 0}, {800, -12}, {2000, -24}, {4000, -30}, {8000, -36}};
  noise[1].envelope_db = {{0, -24}, {500, -12}, {1000, 0}, {1600, 0}, {2500, -15}, {4000, -30}, {8000, -36}};
  noise[2].envelope_db = {{0, -30}, {1000, -18}, {2500, 0}, {8000, 0}};
  noise[3].envelope_db = {{0, -10}, {250, 0}, {400, -10}, {8000, -10}};
  noise[3].am_rate_hz = 2.0;
  noise[3].am_depth = 0.5;
}

SynthConfig SynthConfig::from_json_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("synth config is not valid JSON: ") + e.what());
  }
  SynthConfig cfg;
  try {
    cfg.version = j.value("version", cfg.version);
    if (cfg.version != 1) fail(ErrorCode::kConfig, "unsupported synth config version");
    if (j.contains("car")) from_json(j["car"], cfg.car);
    if (j.contains("train")) from_json(j["train"], cfg.train);
    if (j.contains("faults")) from_json(j["faults"], cfg.faults);
    cfg.machine_rms = j.value("machine_rms", cfg.machine_rms);
    cfg.stochastic_level = j.value("stochastic_level", cfg.stochastic_level);
    cfg.noise_rms = j.value("noise_rms", cfg.noise_rms);
    cfg.noise_rms_spread = j.value("noise_rms_spread", cfg.noise_rms_spread);
    if (j.contains("noise")) {
      for (auto env : all_environments()) {
        const auto key = to_string(env);
        if (!j["noise"].contains(key)) continue;
        const Json& e = j["noise"][key];
        auto& np = cfg.noise[static_cast<std::size_t>(env)];
        np.envelope_db = e.value("envelope_db", np.envelope_db);
        np.am_rate_hz = e.value("am_rate_hz", np.am_rate_hz);
        np.am_depth = e.value("am_depth", np.am_depth);
      }
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad synth config field: ") + e.what());
  }
  return cfg;
}

SynthConfig SynthConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open synth config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string SynthConfig::to_json_text() const {
  Json noise_j;
  for (auto env : all_environments()) {
    const auto& np = noise[static_cast<std::size_t>(env)];
    noise_j[to_string(env)] = Json{{"envelope_db", np.envelope_db},
                                   {"am_rate_hz", np.am_rate_hz},
                                   {"am_depth", np.am_depth}};
  }
  Json j{{"version", version},
         {"car", to_json(car)},
         {"train", to_json(train)},
         {"faults", to_json(faults)},
         {"machine_rms", machine_rms},
         {"stochastic_level", stochastic_level},
         {"noise", noise_j},
         {"noise_rms", noise_rms},
         {"noise_rms_spread", noise_rms_spread}};
  return j.dump(2);
}

// --- generators ------------------------------------------------------------------

AudioClip gen_machine_sound(const SynthConfig& cfg, MachineType machine, MachineCondition condition,
                            double duration_s, int sample_rate, std::uint64_t seed) {
  const Eigen::Index n = sample_count(duration_s, sample_rate);
  const HarmonicProfile& hp = cfg.profile(machine);
  Rng rng{seed, static_cast<std::uint64_t>(machine), static_cast<std::uint64_t>(condition.index())};
  const Eigen::ArrayXd t = time_axis(n, sample_rate);

  const double f0 = hp.f0_hz * (1.0 + hp.f0_jitter * rng.normal());
  Eigen::ArrayXd stack = Eigen::ArrayXd::Zero(n);
  for (int h = 1; h <= hp.harmonics; ++h) {
    const double f = h * f0;
    if (f >= 0.45 * sample_rate) break;
    const double z = (f - hp.formant_hz) / hp.formant_width_hz;
    const double amp = std::pow(h, -hp.rolloff) * (1.0 + hp.formant_gain * std::exp(-0.5 * z * z));
    stack += amp * (kTwoPi * f * t + rng.uniform(0.0, kTwoPi)).sin();
  }
  if (hp.pulse_rate_hz > 0.0) {
    stack *= 1.0 + hp.pulse_depth * (kTwoPi * hp.pulse_rate_hz * t + rng.uniform(0.0, kTwoPi)).cos();
  }
  const double base = std::sqrt(stack.square().mean());

  Eigen::ArrayXd signal = stack;
  if (condition.fault) {
    const double depth = cfg.faults.level_depth[static_cast<std::size_t>(condition.level)];
    signal += depth * base * fault_component(cfg.faults, condition.fault_type, f0, t, sample_rate, rng);
  }
  signal += cfg.stochastic_level * base * white(n, rng);
  signal *= cfg.machine_rms / std::sqrt(signal.square().mean());
  return AudioClip(signal.matrix(), sample_rate);
}

AudioClip gen_noise(const SynthConfig& cfg, NoiseEnvironment env, double duration_s,
                    int sample_rate, std::uint64_t seed) {
  const Eigen::Index n = sample_count(duration_s, sample_rate);
  const NoiseProfile& np = cfg.noise[static_cast<std::size_t>(env)];
  Rng rng{seed, 0x4E4F495345ULL, static_cast<std::uint64_t>(env)};
  Eigen::ArrayXd x = shape_spectrum(white(n, rng), sample_rate,
                                    [&](double f) { return envelope_gain(np.envelope_db, f); });
  if (np.am_rate_hz > 0.0) {
    const Eigen::ArrayXd t = time_axis(n, sample_rate);
    x *= 1.0 + np.am_depth * (kTwoPi * np.am_rate_hz * t + rng.uniform(0.0, kTwoPi)).sin();
  }
  const double target = cfg.noise_rms * (1.0 + cfg.noise_rms_spread * rng.uniform(-1.0, 1.0));
  x = unit_rms(std::move(x)) * target;
  return AudioClip(x.matrix(), sample_rate);
}

std::uint64_t machine_clip_seed(std::uint64_t corpus_seed, MachineType machine,
                                MachineCondition condition, std::uint64_t index) {
  return derive_seed({corpus_seed, 0x4D41ULL, static_cast<std::uint64_t>(machine),
                      static_cast<std::uint64_t>(condition.index()), index});
}

std::uint64_t noise_clip_seed(std::uint64_t corpus_seed, NoiseEnvironment env, std::uint64_t index) {
  return derive_seed({corpus_seed, 0x4E4FULL, static_cast<std::uint64_t>(env), index});
}

void write_corpus(const SynthConfig& cfg, MachineType machine, const std::filesystem::path& root,
                  int clips_per_class, double duration_s, int sample_rate, std::uint64_t seed) {
  namespace fs = std::filesystem;
  for (const auto& c : MachineCondition::all()) {
    const fs::path dir = root / "machine" / c.name();
    fs::create_directories(dir);
    for (int i = 0; i < clips_per_class; ++i) {
      const auto s = machine_clip_seed(seed, machine, c, static_cast<std::uint64_t>(i));
      write_wav(gen_machine_sound(cfg, machine, c, duration_s, sample_rate, s),
                dir / (std::to_string(i) + ".wav"));
    }
  }
  for (auto env : all_environments()) {
    const fs::path dir = root / "noise" / to_string(env);
    fs::create_directories(dir);
    for (int i = 0; i < clips_per_class; ++i) {
      const auto s = noise_clip_seed(seed, env, static_cast<std::uint64_t>(i));
      write_wav(gen_noise(cfg, env, duration_s, sample_rate, s), dir / (std::to_string(i) + ".wav"));
    }
  }
}

}  // namespace nrfc
