// nrfc: command-line front end for the noise-robust fault classification library.

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nrfc/array_io.hpp"
#include "nrfc/audio.hpp"
#include "nrfc/checkpoint.hpp"
#include "nrfc/config.hpp"
#include "nrfc/dataset.hpp"
#include "nrfc/error.hpp"
#include "nrfc/experiment.hpp"
#include "nrfc/synth.hpp"
#include "nrfc/trainer.hpp"

using namespace nrfc;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

SynthConfig synth_config(const std::string& path) { return path.empty() ? SynthConfig{} : SynthConfig::load(path); }

void print_report(const EvalReport& r) {
  std::cout << "macro_f1 " << r.macro_f1 << '\n';
  for (Eigen::Index k = 0; k < r.per_class_f1.size(); ++k) {
    std::cout << "f1 " << label_name(static_cast<int>(k)) << ' ' << r.per_class_f1[k] << '\n';
  }
  if (r.eta) std::cout << "eta " << *r.eta << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust machine fault classification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic WAV corpus");
  std::string synth_cfg, synth_out, synth_machine = "car";
  int synth_clips = 10, synth_sr = 8000;
  double synth_dur = 2.0;
  std::uint64_t synth_seed = 2022;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--config", synth_cfg, "Generator config (JSON)");
  synth->add_option("--machine", synth_machine, "car|train");
  synth->add_option("--clips", synth_clips, "Clips per condition and per environment");
  synth->add_option("--duration", synth_dur, "Clip length in seconds");
  synth->add_option("--sample-rate", synth_sr, "Sample rate in Hz");
  synth->add_option("--seed", synth_seed, "Corpus seed");

  // mix
  auto* mix = app.add_subcommand("mix", "Mix a signal with noise at a target SNR");
  std::string mix_signal, mix_noise, mix_out;
  double mix_snr = 0.0;
  mix->add_option("--signal", mix_signal, "Clean signal WAV")->required();
  mix->add_option("--noise", mix_noise, "Noise WAV")->required();
  mix->add_option("--snr", mix_snr, "Target SNR in dB")->required();
  mix->add_option("--out", mix_out, "Output WAV")->required();

  // dataset
  auto* dataset = app.add_subcommand("dataset", "Build train/validation/test splits and a manifest");
  std::string ds_out, ds_machine = "car", ds_train = "N1", ds_val, ds_test, ds_exposure, ds_synth, ds_source;
  double ds_scale = 0.1, ds_dur = 2.0;
  std::vector<double> ds_snr{-10.0, 0.0};
  int ds_sr = 8000;
  std::uint64_t ds_seed = 2022;
  dataset->add_option("--out", ds_out, "Output directory")->required();
  dataset->add_option("--machine", ds_machine, "car|train");
  dataset->add_option("--train-env", ds_train, "Train environment (N1..N4)");
  dataset->add_option("--validation-env", ds_val, "Validation environment (default: train)");
  dataset->add_option("--test-env", ds_test, "Test environment (default: train)");
  dataset->add_option("--exposure-env", ds_exposure,
                      "Noise-only train/validation environment; machine sounds then use the test environment");
  dataset->add_option("--scale", ds_scale, "Fraction of the reference split counts");
  dataset->add_option("--snr", ds_snr, "SNR range lo hi in dB")->expected(2);
  dataset->add_option("--duration", ds_dur, "Clip length in seconds");
  dataset->add_option("--sample-rate", ds_sr, "Sample rate in Hz");
  dataset->add_option("--seed", ds_seed, "Data seed");
  dataset->add_option("--synth-config", ds_synth, "Generator config (JSON)");
  dataset->add_option("--source-manifest", ds_source, "WAV pool manifest (path,kind,class) replacing the generator");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model on a dataset manifest");
  std::string tr_manifest, tr_config, tr_technique, tr_out, tr_history;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 0;
  train_cmd->add_option("--manifest", tr_manifest, "Dataset manifest CSV")->required();
  train_cmd->add_option("--config", tr_config, "Training config (JSON)");
  train_cmd->add_option("--technique", tr_technique, "SM|NE|FE|EB|AC (overrides the config)");
  train_cmd->add_option("--seed", tr_seed, "Run seed (overrides the config)");
  train_cmd->add_option("--epochs", tr_epochs, "Number of epochs (overrides the config)");
  train_cmd->add_option("--out", tr_out, "Checkpoint path")->required();
  train_cmd->add_option("--history", tr_history, "Write per-epoch history CSV here");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string ev_ckpt, ev_manifest, ev_split = "test";
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--manifest", ev_manifest, "Dataset manifest CSV")->required();
  eval_cmd->add_option("--split", ev_split, "train|validation|test");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a full experiment protocol");
  std::string ex_spec, ex_out;
  int ex_workers = 0;
  bool ex_quiet = false;
  exp_cmd->add_option("--spec", ex_spec, "Experiment spec (JSON)")->required();
  exp_cmd->add_option("--out", ex_out, "Output directory for runs.csv, table.csv, table.md")->required();
  exp_cmd->add_option("--workers", ex_workers, "Parallel runs (default: NRFC_WORKERS or 1)");
  exp_cmd->add_flag("--quiet", ex_quiet, "No progress output");

  // report
  auto* rep_cmd = app.add_subcommand("report", "Render a comparison table from runs.csv");
  std::string rp_runs, rp_format = "markdown", rp_out;
  rep_cmd->add_option("--runs", rp_runs, "runs.csv from an experiment")->required();
  rep_cmd->add_option("--format", rp_format, "csv|markdown");
  rep_cmd->add_option("--out", rp_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      write_corpus(synth_config(synth_cfg), parse_machine(synth_machine), synth_out, synth_clips, synth_dur, synth_sr,
                   synth_seed);
    } else if (*mix) {
      const MixResult r = mix_components(read_wav(mix_signal), read_wav(mix_noise), mix_snr);
      write_wav(r.mixture, mix_out);
      std::cout << "noise_gain " << r.noise_gain << "\nrescale " << r.rescale << "\nsnr_db " << measured_snr_db(r)
                << '\n';
    } else if (*dataset) {
      const NoiseEnvironment train_env = parse_environment(ds_train);
      const NoiseEnvironment val_env = ds_val.empty() ? train_env : parse_environment(ds_val);
      const NoiseEnvironment test_env = ds_test.empty() ? train_env : parse_environment(ds_test);
      DatasetOptions opt;
      opt.machine = parse_machine(ds_machine);
      opt.spec = SplitSpec::for_machine(opt.machine, ds_scale);
      if (ds_exposure.empty()) {
        opt.envs = {train_env, val_env, test_env, train_env, val_env, test_env};
      } else {
        opt.envs = EnvAssignment::exposure(parse_environment(ds_exposure), test_env);
      }
      opt.snr_lo = ds_snr[0];
      opt.snr_hi = ds_snr[1];
      opt.seed = ds_seed;
      std::unique_ptr<ClipSource> source;
      if (!ds_source.empty()) {
        source = std::make_unique<WavPoolSource>(ds_source);
      } else {
        source = std::make_unique<SyntheticSource>(synth_config(ds_synth), ds_dur, ds_sr, ds_seed);
      }
      const DatasetSplits data = build_splits(opt, *source);
      write_dataset(data, ds_out);
      std::cout << "train " << data.train.size() << "\nvalidation " << data.validation.size() << "\ntest "
                << data.test.size() << '\n';
    } else if (*train_cmd) {
      TrainConfig cfg = ExperimentSpec::desk_train_config();
      if (!tr_config.empty()) from_json(parse_json_file(tr_config), cfg);
      if (!tr_technique.empty()) cfg.technique.kind = parse_technique(tr_technique);
      if (tr_seed != 0) cfg.seed = tr_seed;
      if (tr_epochs > 0) cfg.schedule.epochs = tr_epochs;
      cfg.technique.eta.reset();
      const DatasetSplits data = read_dataset(tr_manifest);
      require(!data.train.empty(), ErrorCode::kInsufficientData, "manifest has no training examples");
      TrainResult r = train(data, cfg, [](const HistoryRow& h) {
        std::cerr << "epoch " << h.epoch << " loss " << h.train_loss << " val_f1 " << h.val_f1 << '\n';
      });
      Checkpoint ck;
      ck.model = std::move(r.model);
      ck.optimizer = std::move(r.optimizer);
      ck.technique = cfg.technique;
      ck.technique.eta = r.eta;
      ck.features = cfg.features;
      ck.precision = cfg.precision;
      ck.epoch = r.best_epoch;
      ck.sample_rate = data.train.front().clip.sample_rate();
      save_checkpoint(tr_out, ck);
      if (!tr_history.empty()) write_text(tr_history, history_csv(r.history));
      std::cout << "best_epoch " << r.best_epoch << "\nbest_val_f1 " << r.best_val_f1 << '\n';
    } else if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const DatasetSplits data = read_dataset(ev_manifest);
      const auto& split = data.split(parse_split(ev_split));
      require(!split.empty(), ErrorCode::kInsufficientData, "split " + ev_split + " is empty");
      require(split.front().clip.sample_rate() == ck.sample_rate, ErrorCode::kShapeMismatch,
              "dataset sample rate differs from the checkpoint's");
      print_report(evaluate(ck.model, ck.precision, ck.technique, split, ck.features));
    } else if (*exp_cmd) {
      const ExperimentSpec spec = ExperimentSpec::load(ex_spec);
      const int workers = ex_workers > 0 ? ex_workers : workers_from_env();
      LogFn log;
      if (!ex_quiet) log = [](const std::string& msg) { std::cerr << msg << '\n'; };
      const ResultTable table = run_experiment(spec, workers, log);
      write_experiment_outputs(table, ex_out);
      std::cout << emit_table(table, TableFormat::kMarkdown);
    } else if (*rep_cmd) {
      const ResultTable table = parse_results_csv(read_text(rp_runs));
      write_text(rp_out, emit_table(table, parse_table_format(rp_format)));
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
