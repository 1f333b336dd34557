#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nrfc/dataset.hpp"
#include "nrfc/synth.hpp"
#include "nrfc/techniques.hpp"
#include "nrfc/trainer.hpp"

namespace nrfc {

/// same-env: train, validation and test noise from one environment.
/// unseen-env: train/validation in one environment, test in another.
/// exposure-grid: machine sounds under the test environment everywhere,
/// noise-exposure clips for training/validation from each environment.
enum class Protocol { kSameEnv, kUnseenEnv, kExposureGrid };
std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& name);

struct ExperimentSpec {
  Protocol protocol = Protocol::kSameEnv;
  MachineType machine = MachineType::kCar;
  std::vector<EnvAssignment> assignments;  // empty = every assignment of the protocol
  std::vector<Technique> techniques;       // empty = protocol default
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double scale = 0.1;
  double snr_lo = -10.0;
  double snr_hi = 0.0;
  double duration_s = 2.0;
  int sample_rate = 8000;
  std::uint64_t data_seed = 2022;
  std::string synth_config;     // empty = built-in generator constants
  std::string source_manifest;  // WAV pool manifest; replaces the generator when set
  TrainConfig train = desk_train_config();

  /// Desk-scale training defaults (small CNN, shortened schedule).
  static TrainConfig desk_train_config();

  static ExperimentSpec from_json_text(const std::string& text);
  static ExperimentSpec load(const std::filesystem::path& path);
  std::string to_json_text() const;

  /// Assignments and techniques with protocol defaults filled in.
  std::vector<EnvAssignment> resolved_assignments() const;
  std::vector<Technique> resolved_techniques() const;

  /// Enforces the protocol's environment rules.
  void validate() const;
};

struct ResultRow {
  EnvAssignment assignment;
  Technique technique = Technique::kNE;
  std::uint64_t seed = 0;
  double macro_f1 = 0.0;
  double noise_f1 = 0.0;
  int best_epoch = 0;
  std::optional<double> eta;
};

struct ResultTable {
  Protocol protocol = Protocol::kSameEnv;
  MachineType machine = MachineType::kCar;
  std::vector<EnvAssignment> assignments;
  std::vector<Technique> techniques;
  std::vector<std::uint64_t> seeds;
  std::vector<ResultRow> rows;

  std::size_t expected_cells() const { return assignments.size() * techniques.size() * seeds.size(); }
  bool complete() const;
  std::vector<const ResultRow*> cell(const EnvAssignment& a, Technique t) const;
  /// Mean over seeds of the 14-class macro F1.
  double mean(const EnvAssignment& a, Technique t) const;
  /// Mean over seeds of the noise-class F1.
  double mean_noise_f1(const EnvAssignment& a, Technique t) const;
};

using LogFn = std::function<void(const std::string&)>;

/// Trains and evaluates every (assignment, technique, seed) cell. Runs are
/// spread over `workers` threads; the table does not depend on the count.
ResultTable run_experiment(const ExperimentSpec& spec, int workers = 1, const LogFn& log = {});

/// Worker count from the NRFC_WORKERS environment variable (default 1).
int workers_from_env();

enum class TableFormat { kCsv, kMarkdown };
TableFormat parse_table_format(const std::string& name);

/// Mean macro F1 per cell, best cell of each row flagged ('*' in CSV, bold in
/// Markdown; ties all flagged). Exposure grids are laid out as exposure
/// environment x test environment per technique.
std::string emit_table(const ResultTable& table, TableFormat format);

/// One line per run: protocol,machine,train_env,validation_env,test_env,
/// exposure_env,technique,seed,macro_f1,noise_f1,best_epoch,eta.
std::string results_csv(const ResultTable& table);
ResultTable parse_results_csv(const std::string& text);

/// Writes runs.csv, table.csv and table.md into `dir`.
void write_experiment_outputs(const ResultTable& table, const std::filesystem::path& dir);

/// Clip source described by the spec (generator or WAV pool).
std::unique_ptr<ClipSource> make_source(const ExperimentSpec& spec);

}  // namespace nrfc
