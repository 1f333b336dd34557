#include "nrfc/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "nrfc/random.hpp"

namespace nrfc {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  return s;
}

}  // namespace

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kValidation: return "validation";
    case SplitName::kTest: return "test";
  }
  return "?";
}

SplitName parse_split(const std::string& name) {
  for (auto s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    if (to_string(s) == name) return s;
  }
  fail(ErrorCode::kInvalidArgument, "unknown split (expected train|validation|test): " + name);
}

std::string label_name(int label) {
  if (label == kNoiseLabel) return "noise";
  return MachineCondition::from_index(label).name();
}

int parse_label(const std::string& name) {
  if (name == "noise") return kNoiseLabel;
  return MachineCondition::parse(name).index();
}

SplitCounts SplitSpec::counts(SplitName split) const {
  require(scale > 0.0, ErrorCode::kInvalidArgument, "split scale must be positive");
  const double base = base_per_fault[static_cast<std::size_t>(split)];
  return {std::max(1, static_cast<int>(std::llround(base * scale)))};
}

// --- mixing ---------------------------------------------------------------------

MixResult mix_components(const AudioClip& signal, const AudioClip& noise, double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) {
    return {signal, signal, AudioClip(Eigen::VectorXd::Zero(signal.size()), signal.sample_rate()), 0.0, 1.0};
  }
  require(signal.size() == noise.size(), ErrorCode::kInvalidArgument, "signal and noise lengths differ");
  require(signal.sample_rate() == noise.sample_rate(), ErrorCode::kInvalidArgument,
          "signal and noise sample rates differ");
  require(std::isfinite(snr_db), ErrorCode::kInvalidArgument, "SNR must be finite or +inf");
  const double rs = rms(signal);
  const double rn = rms(noise);
  require(rs > 0.0 && rn > 0.0, ErrorCode::kInvalidArgument, "silent input to SNR mixing");

  const double gain = rs / (rn * std::pow(10.0, snr_db / 20.0));
  Eigen::VectorXd s = signal.samples();
  Eigen::VectorXd n = gain * noise.samples();
  Eigen::VectorXd mix = s + n;
  const double pk = mix.cwiseAbs().maxCoeff();
  double rescale = 1.0;
  if (pk > 1.0) {
    rescale = 1.0 / pk;
    s *= rescale;
    n *= rescale;
    mix *= rescale;
  }
  const int sr = signal.sample_rate();
  return {AudioClip(std::move(mix), sr), AudioClip(std::move(s), sr), AudioClip(std::move(n), sr), gain, rescale};
}

AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, double snr_db) {
  return mix_components(signal, noise, snr_db).mixture;
}

double measured_snr_db(const MixResult& mix) {
  return 20.0 * std::log10(rms(mix.signal_part) / rms(mix.noise_part));
}

AudioClip augment_noise(const AudioClip& clip, double shift_s, double gain) {
  require(shift_s >= 0.0 && shift_s <= 2.0, ErrorCode::kInvalidArgument, "noise shift must lie in [0, 2] s");
  require(gain >= 0.5 && gain <= 2.0, ErrorCode::kInvalidArgument, "noise gain must lie in [0.5, 2]");
  return scale(time_shift(clip, std::fmod(shift_s, clip.duration())), gain);
}

// --- environments ------------------------------------------------------------------

EnvAssignment EnvAssignment::same(NoiseEnvironment env) { return {env, env, env, env, env, env}; }

EnvAssignment EnvAssignment::unseen(NoiseEnvironment train, NoiseEnvironment test) {
  return {train, train, test, train, train, test};
}

EnvAssignment EnvAssignment::exposure(NoiseEnvironment exposure, NoiseEnvironment test) {
  return {test, test, test, exposure, exposure, test};
}

NoiseEnvironment EnvAssignment::machine(SplitName s) const {
  switch (s) {
    case SplitName::kTrain: return machine_train;
    case SplitName::kValidation: return machine_validation;
    case SplitName::kTest: return machine_test;
  }
  return machine_train;
}

NoiseEnvironment EnvAssignment::noise(SplitName s) const {
  switch (s) {
    case SplitName::kTrain: return noise_train;
    case SplitName::kValidation: return noise_validation;
    case SplitName::kTest: return noise_test;
  }
  return noise_train;
}

std::string EnvAssignment::label() const {
  if (machine_train == machine_test && noise_train != machine_train) {
    return to_string(noise_train) + " exposure / " + to_string(machine_test) + " test";
  }
  return to_string(noise_train) + "/" + to_string(noise_validation) + "/" + to_string(machine_test);
}

// --- sources ----------------------------------------------------------------------

SyntheticSource::SyntheticSource(SynthConfig cfg, double duration_s, int sample_rate, std::uint64_t corpus_seed)
    : cfg_(std::move(cfg)), duration_s_(duration_s), sample_rate_(sample_rate), seed_(corpus_seed) {}

AudioClip SyntheticSource::machine(MachineType m, MachineCondition c, std::uint64_t index) const {
  const std::array<std::uint64_t, 4> key{0, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(c.index()), index};
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  AudioClip clip = gen_machine_sound(cfg_, m, c, duration_s_, sample_rate_, machine_clip_seed(seed_, m, c, index));
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(clip)).first->second;
}

AudioClip SyntheticSource::noise(NoiseEnvironment env, std::uint64_t index) const {
  const std::array<std::uint64_t, 4> key{1, static_cast<std::uint64_t>(env), 0, index};
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  AudioClip clip = gen_noise(cfg_, env, duration_s_, sample_rate_, noise_clip_seed(seed_, env, index));
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(clip)).first->second;
}

WavPoolSource::WavPoolSource(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::kIo, "cannot open source manifest: " + manifest.string());
  const auto base = manifest.parent_path();
  std::string line;
  std::getline(in, line);
  if (trim(line) != "path,kind,class") fail(ErrorCode::kFormat, "source manifest header must be path,kind,class");
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) fail(ErrorCode::kFormat, "source manifest row " + std::to_string(row) + " needs 3 cells");
    std::filesystem::path p = trim(cells[0]);
    if (p.is_relative()) p = base / p;
    const auto kind = trim(cells[1]);
    if (kind == "machine") {
      machine_[static_cast<std::size_t>(MachineCondition::parse(trim(cells[2])).index())].push_back(p);
    } else if (kind == "noise") {
      noise_[static_cast<std::size_t>(parse_environment(trim(cells[2])))].push_back(p);
    } else {
      fail(ErrorCode::kFormat, "source manifest kind must be machine|noise, got " + kind);
    }
  }
}

AudioClip WavPoolSource::machine(MachineType, MachineCondition c, std::uint64_t index) const {
  const auto& pool = machine_[static_cast<std::size_t>(c.index())];
  require(index < pool.size(), ErrorCode::kInsufficientData, "not enough clips for condition " + c.name());
  return read_wav(pool[index]);
}

AudioClip WavPoolSource::noise(NoiseEnvironment env, std::uint64_t index) const {
  const auto& pool = noise_[static_cast<std::size_t>(env)];
  require(index < pool.size(), ErrorCode::kInsufficientData, "not enough noise clips for " + to_string(env));
  return read_wav(pool[index]);
}

std::optional<std::uint64_t> WavPoolSource::machine_capacity(MachineType, MachineCondition c) const {
  return machine_[static_cast<std::size_t>(c.index())].size();
}

std::optional<std::uint64_t> WavPoolSource::noise_capacity(NoiseEnvironment env) const {
  return noise_[static_cast<std::size_t>(env)].size();
}

// --- splits -------------------------------------------------------------------------

const std::vector<LabeledExample>& DatasetSplits::split(SplitName s) const {
  switch (s) {
    case SplitName::kTrain: return train;
    case SplitName::kValidation: return validation;
    case SplitName::kTest: return test;
  }
  return train;
}

std::vector<LabeledExample>& DatasetSplits::split(SplitName s) {
  return const_cast<std::vector<LabeledExample>&>(std::as_const(*this).split(s));
}

DatasetSplits build_splits(const DatasetOptions& opt, const ClipSource& source) {
  require(opt.snr_lo <= opt.snr_hi, ErrorCode::kInvalidArgument, "SNR range must satisfy lo <= hi");
  const auto conditions = MachineCondition::all();

  // Check capacity up front so a short pool fails before any work.
  std::array<std::uint64_t, kNoiseEnvironmentCount> noise_needed{};
  std::uint64_t per_condition_needed_fault = 0, normal_needed = 0;
  for (auto s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    const SplitCounts c = opt.spec.counts(s);
    noise_needed[static_cast<std::size_t>(opt.envs.machine(s))] += static_cast<std::uint64_t>(c.machine_total());
    noise_needed[static_cast<std::size_t>(opt.envs.noise(s))] += static_cast<std::uint64_t>(c.noise());
    per_condition_needed_fault += static_cast<std::uint64_t>(c.per_fault);
    normal_needed += static_cast<std::uint64_t>(c.normal());
  }
  for (const auto& cond : conditions) {
    const auto cap = source.machine_capacity(opt.machine, cond);
    const auto need = cond.fault ? per_condition_needed_fault : normal_needed;
    if (cap && *cap < need) {
      fail(ErrorCode::kInsufficientData, "need " + std::to_string(need) + " distinct clips of " + cond.name() +
                                             ", source has " + std::to_string(*cap));
    }
  }
  for (auto env : all_environments()) {
    const auto cap = source.noise_capacity(env);
    const auto need = noise_needed[static_cast<std::size_t>(env)];
    if (cap && *cap < need) {
      fail(ErrorCode::kInsufficientData, "need " + std::to_string(need) + " distinct noise clips of " +
                                             to_string(env) + ", source has " + std::to_string(*cap));
    }
  }

  std::array<std::uint64_t, MachineCondition::kCount> next_clean{};
  std::array<std::uint64_t, kNoiseEnvironmentCount> next_noise{};
  const std::string machine_tag = to_string(opt.machine);
  DatasetSplits out;
  for (auto s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    const SplitCounts counts = opt.spec.counts(s);
    auto& split = out.split(s);
    const NoiseEnvironment menv = opt.envs.machine(s);
    const NoiseEnvironment nenv = opt.envs.noise(s);
    std::uint64_t item = 0;
    for (const auto& cond : conditions) {
      const int n = cond.fault ? counts.per_fault : counts.normal();
      for (int i = 0; i < n; ++i, ++item) {
        const auto ci = next_clean[static_cast<std::size_t>(cond.index())]++;
        const auto ni = next_noise[static_cast<std::size_t>(menv)]++;
        Rng rng{opt.seed, 0x534E52ULL, static_cast<std::uint64_t>(s), item};
        const double snr = opt.snr_lo == opt.snr_hi ? opt.snr_lo : rng.uniform(opt.snr_lo, opt.snr_hi);
        LabeledExample ex;
        ex.clip = mix_at_snr(source.machine(opt.machine, cond, ci), source.noise(menv, ni), snr);
        ex.label = cond.index();
        ex.env = menv;
        ex.snr_db = snr;
        ex.id = machine_tag + "/" + cond.name() + "/" + std::to_string(ci) + "+" + to_string(menv) + "/" +
                std::to_string(ni);
        split.push_back(std::move(ex));
      }
    }
    for (int i = 0; i < counts.noise(); ++i) {
      const auto ni = next_noise[static_cast<std::size_t>(nenv)]++;
      LabeledExample ex;
      ex.clip = source.noise(nenv, ni);
      ex.label = kNoiseLabel;
      ex.env = nenv;
      ex.id = to_string(nenv) + "/" + std::to_string(ni);
      split.push_back(std::move(ex));
    }
  }
  return out;
}

DatasetSplits build_splits(const SplitSpec& spec, MachineType machine, NoiseEnvironment env_train,
                           NoiseEnvironment env_test, double snr_lo, double snr_hi, std::uint64_t seed,
                           const ClipSource& source) {
  return build_splits(DatasetOptions{spec, machine, EnvAssignment::unseen(env_train, env_test), snr_lo, snr_hi, seed},
                      source);
}

// --- batches ---------------------------------------------------------------------------

std::size_t steps_per_epoch(std::size_t machine_count, std::size_t batch_machine) {
  require(batch_machine > 0, ErrorCode::kInvalidArgument, "machine batch size must be positive");
  require(machine_count >= batch_machine, ErrorCode::kInsufficientData,
          "machine batch larger than the machine family");
  return machine_count / batch_machine;
}

BatchIndices sample_batch(std::size_t machine_count, std::size_t noise_count, std::size_t batch_machine,
                          std::size_t batch_noise, std::uint64_t seed, int epoch, std::size_t step) {
  require(batch_machine <= machine_count, ErrorCode::kInsufficientData, "machine batch larger than its family");
  require(batch_noise <= noise_count, ErrorCode::kInsufficientData, "noise batch larger than its family");
  const std::size_t steps = steps_per_epoch(machine_count, batch_machine);
  require(step < steps, ErrorCode::kInvalidArgument, "step beyond the end of the epoch");

  auto permutation = [&](std::size_t n, std::uint64_t family) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng{seed, 0x42415443ULL, family, static_cast<std::uint64_t>(epoch)};
    rng.shuffle(p.begin(), p.end());
    return p;
  };
  BatchIndices out;
  const auto mp = permutation(machine_count, 0);
  out.machine.assign(mp.begin() + static_cast<std::ptrdiff_t>(step * batch_machine),
                     mp.begin() + static_cast<std::ptrdiff_t>((step + 1) * batch_machine));
  if (batch_noise > 0) {
    const auto np = permutation(noise_count, 1);
    for (std::size_t j = 0; j < batch_noise; ++j) out.noise.push_back(np[(step * batch_noise + j) % noise_count]);
  }
  return out;
}

std::vector<std::size_t> family_indices(const std::vector<LabeledExample>& split, bool noise) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i].is_noise() == noise) out.push_back(i);
  }
  return out;
}

// --- manifests ---------------------------------------------------------------------------

void write_dataset(const DatasetSplits& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) fail(ErrorCode::kIo, "cannot write manifest in " + dir.string());
  manifest << "path,label,env,snr_db,split,id\n";
  manifest << std::setprecision(17);
  for (auto s : {SplitName::kTrain, SplitName::kValidation, SplitName::kTest}) {
    const auto name = to_string(s);
    fs::create_directories(dir / name);
    const auto& split = data.split(s);
    for (std::size_t i = 0; i < split.size(); ++i) {
      const auto& ex = split[i];
      const std::string rel = name + "/" + std::to_string(i) + ".wav";
      write_wav(ex.clip, dir / rel);
      manifest << rel << ',' << label_name(ex.label) << ',' << to_string(ex.env) << ',';
      if (!ex.is_noise()) manifest << ex.snr_db;
      manifest << ',' << name << ',' << ex.id << '\n';
    }
  }
}

DatasetSplits read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::kIo, "cannot open dataset manifest: " + manifest.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "path,label,env,snr_db,split,id") {
    fail(ErrorCode::kFormat, "dataset manifest header must be path,label,env,snr_db,split,id");
  }
  DatasetSplits out;
  const auto base = manifest.parent_path();
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) fail(ErrorCode::kFormat, "dataset manifest rows need 6 cells: " + line);
    std::filesystem::path p = cells[0];
    if (p.is_relative()) p = base / p;
    LabeledExample ex;
    ex.clip = read_wav(p);
    ex.label = parse_label(cells[1]);
    ex.env = parse_environment(cells[2]);
    if (!cells[3].empty()) ex.snr_db = std::stod(cells[3]);
    ex.id = cells[5];
    out.split(parse_split(cells[4])).push_back(std::move(ex));
  }
  return out;
}

}  // namespace nrfc
