#include "nrfc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "nrfc/config.hpp"
#include "nrfc/error.hpp"

namespace nrfc {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

Json assignment_json(Protocol p, const EnvAssignment& a) {
  if (p == Protocol::kExposureGrid) {
    return Json{{"exposure", to_string(a.noise_train)}, {"test", to_string(a.machine_test)}};
  }
  return Json{{"train", to_string(a.noise_train)},
              {"validation", to_string(a.noise_validation)},
              {"test", to_string(a.machine_test)}};
}

EnvAssignment assignment_from_json(Protocol p, const Json& j) {
  try {
    if (p == Protocol::kExposureGrid) {
      return EnvAssignment::exposure(parse_environment(j.at("exposure").get<std::string>()),
                                     parse_environment(j.at("test").get<std::string>()));
    }
    const NoiseEnvironment train = parse_environment(j.at("train").get<std::string>());
    const NoiseEnvironment val =
        j.contains("validation") ? parse_environment(j.at("validation").get<std::string>()) : train;
    const NoiseEnvironment test = parse_environment(j.at("test").get<std::string>());
    return {train, val, test, train, val, test};
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad env assignment: ") + e.what());
  }
}

bool flagged(double v, double best) { return v == best; }

}  // namespace

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kSameEnv: return "same-env";
    case Protocol::kUnseenEnv: return "unseen-env";
    case Protocol::kExposureGrid: return "exposure-grid";
  }
  return "?";
}

Protocol parse_protocol(const std::string& name) {
  if (name == "same-env") return Protocol::kSameEnv;
  if (name == "unseen-env") return Protocol::kUnseenEnv;
  if (name == "exposure-grid") return Protocol::kExposureGrid;
  fail(ErrorCode::kConfig, "unknown protocol (expected same-env|unseen-env|exposure-grid): " + name);
}

// --- spec -----------------------------------------------------------------------

TrainConfig ExperimentSpec::desk_train_config() {
  TrainConfig c;
  c.features = FeatureConfig::desk();
  c.widths = {16, 32, 64};
  c.schedule.base = 3e-3;
  c.schedule.final = 3e-4;
  c.precision = Precision::kFloat32;
  return c;
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("experiment spec is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kConfig, "experiment spec must be a JSON object");
  ExperimentSpec s;
  try {
    if (j.contains("protocol")) s.protocol = parse_protocol(j.at("protocol").get<std::string>());
    if (j.contains("machine")) s.machine = parse_machine(j.at("machine").get<std::string>());
    if (j.contains("assignments")) {
      for (const auto& a : j.at("assignments")) s.assignments.push_back(assignment_from_json(s.protocol, a));
    }
    if (j.contains("techniques")) {
      for (const auto& t : j.at("techniques")) s.techniques.push_back(parse_technique(t.get<std::string>()));
    }
    s.seeds = j.value("seeds", s.seeds);
    s.scale = j.value("scale", s.scale);
    if (j.contains("snr_db")) {
      const auto& r = j.at("snr_db");
      if (r.is_number()) {
        s.snr_lo = s.snr_hi = r.get<double>();
      } else {
        require(r.is_array() && r.size() == 2, ErrorCode::kConfig, "snr_db must be a number or [lo, hi]");
        s.snr_lo = r.at(0).get<double>();
        s.snr_hi = r.at(1).get<double>();
      }
    }
    s.duration_s = j.value("duration_s", s.duration_s);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.data_seed = j.value("data_seed", s.data_seed);
    s.synth_config = j.value("synth_config", s.synth_config);
    s.source_manifest = j.value("source_manifest", s.source_manifest);
    if (j.contains("train")) from_json(j.at("train"), s.train);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open experiment spec: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentSpec s = from_json_text(text.str());
  // Relative paths inside the spec resolve against its directory.
  const auto base = path.parent_path();
  for (std::string* p : {&s.synth_config, &s.source_manifest}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  }
  return s;
}

std::string ExperimentSpec::to_json_text() const {
  Json j;
  j["protocol"] = to_string(protocol);
  j["machine"] = to_string(machine);
  j["assignments"] = Json::array();
  for (const auto& a : resolved_assignments()) j["assignments"].push_back(assignment_json(protocol, a));
  j["techniques"] = Json::array();
  for (auto t : resolved_techniques()) j["techniques"].push_back(to_string(t));
  j["seeds"] = seeds;
  j["scale"] = scale;
  j["snr_db"] = {snr_lo, snr_hi};
  j["duration_s"] = duration_s;
  j["sample_rate"] = sample_rate;
  j["data_seed"] = data_seed;
  j["synth_config"] = synth_config;
  j["source_manifest"] = source_manifest;
  j["train"] = train;
  return j.dump(2) + "\n";
}

std::vector<EnvAssignment> ExperimentSpec::resolved_assignments() const {
  if (!assignments.empty()) return assignments;
  std::vector<EnvAssignment> out;
  const auto envs = all_environments();
  switch (protocol) {
    case Protocol::kSameEnv:
      for (auto e : envs) out.push_back(EnvAssignment::same(e));
      break;
    case Protocol::kUnseenEnv:
      for (auto train : envs) {
        for (auto test : envs) {
          if (train != test) out.push_back(EnvAssignment::unseen(train, test));
        }
      }
      break;
    case Protocol::kExposureGrid:
      for (auto exposure : envs) {
        for (auto test : envs) out.push_back(EnvAssignment::exposure(exposure, test));
      }
      break;
  }
  return out;
}

std::vector<Technique> ExperimentSpec::resolved_techniques() const {
  if (!techniques.empty()) return techniques;
  if (protocol == Protocol::kExposureGrid) return {Technique::kNE};
  return all_techniques();
}

void ExperimentSpec::validate() const {
  require(!seeds.empty(), ErrorCode::kConfig, "experiment needs at least one seed");
  require(scale > 0.0, ErrorCode::kConfig, "scale must be positive");
  require(duration_s > 0.0 && sample_rate > 0, ErrorCode::kConfig, "duration and sample rate must be positive");
  require(std::isfinite(snr_lo) && std::isfinite(snr_hi) && snr_lo <= snr_hi, ErrorCode::kConfig,
          "snr_db range must be finite with lo <= hi");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t k = i + 1; k < seeds.size(); ++k) {
      require(seeds[i] != seeds[k], ErrorCode::kConfig, "duplicate seed in experiment spec");
    }
  }
  const auto techs = resolved_techniques();
  for (std::size_t i = 0; i < techs.size(); ++i) {
    for (std::size_t k = i + 1; k < techs.size(); ++k) {
      require(techs[i] != techs[k], ErrorCode::kConfig, "duplicate technique in experiment spec");
    }
  }
  const auto list = resolved_assignments();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const EnvAssignment& a = list[i];
    for (std::size_t k = i + 1; k < list.size(); ++k) {
      require(!(list[k] == a), ErrorCode::kConfig, "duplicate env assignment: " + a.label());
    }
    const std::string what = to_string(protocol) + " assignment " + a.label() + ": ";
    // Noise-only test clips always come from the machine test environment.
    require(a.noise_test == a.machine_test, ErrorCode::kConfig,
            what + "noise-only test environment must match the machine test environment");
    switch (protocol) {
      case Protocol::kSameEnv:
        require(a.machine_train == a.machine_test && a.machine_validation == a.machine_test &&
                    a.noise_train == a.machine_test && a.noise_validation == a.machine_test,
                ErrorCode::kConfig, what + "train, validation and test environments must be equal");
        break;
      case Protocol::kUnseenEnv:
        require(a.machine_train != a.machine_test && a.machine_validation != a.machine_test,
                ErrorCode::kConfig, what + "train/validation environment must differ from the test environment");
        require(a.noise_train == a.machine_train && a.noise_validation == a.machine_validation, ErrorCode::kConfig,
                what + "noise-only and machine training environments must match");
        break;
      case Protocol::kExposureGrid:
        require(a.machine_train == a.machine_test && a.machine_validation == a.machine_test, ErrorCode::kConfig,
                what + "machine sounds must use the test environment in every split");
        require(a.noise_train == a.noise_validation, ErrorCode::kConfig,
                what + "exposure noise must be the same for training and validation");
        break;
    }
  }
}

std::unique_ptr<ClipSource> make_source(const ExperimentSpec& spec) {
  if (!spec.source_manifest.empty()) return std::make_unique<WavPoolSource>(spec.source_manifest);
  SynthConfig cfg = spec.synth_config.empty() ? SynthConfig{} : SynthConfig::load(spec.synth_config);
  return std::make_unique<SyntheticSource>(std::move(cfg), spec.duration_s, spec.sample_rate, spec.data_seed);
}

// --- runs -----------------------------------------------------------------------

int workers_from_env() {
  const char* v = std::getenv("NRFC_WORKERS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  require(end != nullptr && *end == '\0' && n >= 1 && n <= 1024, ErrorCode::kConfig,
          std::string("NRFC_WORKERS must be a positive integer, got: ") + v);
  return static_cast<int>(n);
}

ResultTable run_experiment(const ExperimentSpec& spec, int workers, const LogFn& log) {
  spec.validate();
  require(workers >= 1, ErrorCode::kInvalidArgument, "worker count must be positive");
  ResultTable table;
  table.protocol = spec.protocol;
  table.machine = spec.machine;
  table.assignments = spec.resolved_assignments();
  table.techniques = spec.resolved_techniques();
  table.seeds = spec.seeds;

  const auto source = make_source(spec);
  const std::size_t runs_per_assignment = table.techniques.size() * table.seeds.size();
  table.rows.resize(table.expected_cells());

  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    log(msg);
  };

  for (std::size_t ai = 0; ai < table.assignments.size(); ++ai) {
    const EnvAssignment& a = table.assignments[ai];
    DatasetOptions opt;
    opt.spec = SplitSpec::for_machine(spec.machine, spec.scale);
    opt.machine = spec.machine;
    opt.envs = a;
    opt.snr_lo = spec.snr_lo;
    opt.snr_hi = spec.snr_hi;
    opt.seed = spec.data_seed;
    const DatasetSplits data = build_splits(opt, *source);
    say("assignment " + a.label() + ": " + std::to_string(data.train.size()) + " train / " +
        std::to_string(data.validation.size()) + " validation / " + std::to_string(data.test.size()) + " test");

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t r = next.fetch_add(1);
        if (r >= runs_per_assignment) return;
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (error) return;
        }
        const Technique t = table.techniques[r / table.seeds.size()];
        const std::uint64_t seed = table.seeds[r % table.seeds.size()];
        try {
          TrainConfig cfg = spec.train;
          cfg.technique.kind = t;
          cfg.technique.eta.reset();
          cfg.seed = seed;
          const TrainResult trained = train(data, cfg);
          TechniqueConfig tech = cfg.technique;
          tech.eta = trained.eta;
          const EvalReport report =
              evaluate(trained.model, cfg.precision, tech, data.test, cfg.features, cfg.eval_batch);
          ResultRow& row = table.rows[ai * runs_per_assignment + r];
          row.assignment = a;
          row.technique = t;
          row.seed = seed;
          row.macro_f1 = report.macro_f1;
          row.noise_f1 = report.per_class_f1[kNoiseLabel];
          row.best_epoch = trained.best_epoch;
          row.eta = trained.eta;
          say("  " + to_string(t) + " seed " + std::to_string(seed) + ": macro F1 " + fixed(report.macro_f1, 4) +
              ", noise F1 " + fixed(row.noise_f1, 4) + " (best epoch " + std::to_string(trained.best_epoch) + ")");
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    const int n = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), runs_per_assignment));
    if (n <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);
  }
  return table;
}

// --- table ----------------------------------------------------------------------

bool ResultTable::complete() const {
  if (rows.size() != expected_cells()) return false;
  for (const auto& a : assignments) {
    for (auto t : techniques) {
      if (cell(a, t).size() != seeds.size()) return false;
    }
  }
  return true;
}

std::vector<const ResultRow*> ResultTable::cell(const EnvAssignment& a, Technique t) const {
  std::vector<const ResultRow*> out;
  for (const auto& s : seeds) {
    for (const auto& r : rows) {
      if (r.assignment == a && r.technique == t && r.seed == s) {
        out.push_back(&r);
        break;
      }
    }
  }
  return out;
}

double ResultTable::mean(const EnvAssignment& a, Technique t) const {
  const auto c = cell(a, t);
  require(!c.empty(), ErrorCode::kInsufficientData, "no results for " + a.label() + " " + to_string(t));
  double sum = 0.0;
  for (const auto* r : c) sum += r->macro_f1;
  return sum / static_cast<double>(c.size());
}

double ResultTable::mean_noise_f1(const EnvAssignment& a, Technique t) const {
  const auto c = cell(a, t);
  require(!c.empty(), ErrorCode::kInsufficientData, "no results for " + a.label() + " " + to_string(t));
  double sum = 0.0;
  for (const auto* r : c) sum += r->noise_f1;
  return sum / static_cast<double>(c.size());
}

TableFormat parse_table_format(const std::string& name) {
  if (name == "csv") return TableFormat::kCsv;
  if (name == "markdown" || name == "md") return TableFormat::kMarkdown;
  fail(ErrorCode::kInvalidArgument, "unknown table format (expected csv|markdown): " + name);
}

namespace {

struct Grid {
  std::vector<std::string> header;  // first entry names the row-label column
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> values;
};

std::string render(const Grid& g, TableFormat format, const std::string& title) {
  std::ostringstream out;
  if (format == TableFormat::kMarkdown) {
    if (!title.empty()) out << "### " << title << "\n\n";
    out << '|';
    for (const auto& h : g.header) out << ' ' << h << " |";
    out << "\n|";
    for (std::size_t i = 0; i < g.header.size(); ++i) out << (i == 0 ? "---|" : "---:|");
    out << '\n';
  } else {
    if (!title.empty()) out << "# " << title << '\n';
    for (std::size_t i = 0; i < g.header.size(); ++i) out << (i ? "," : "") << g.header[i];
    out << '\n';
  }
  for (std::size_t r = 0; r < g.row_labels.size(); ++r) {
    const auto& vals = g.values[r];
    const double best = *std::max_element(vals.begin(), vals.end());
    if (format == TableFormat::kMarkdown) {
      out << "| " << g.row_labels[r] << " |";
      for (double v : vals) {
        const std::string cell = fixed(v, 4);
        out << ' ' << (flagged(v, best) ? "**" + cell + "**" : cell) << " |";
      }
    } else {
      out << g.row_labels[r];
      for (double v : vals) out << ',' << fixed(v, 4) << (flagged(v, best) ? "*" : "");
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

std::string emit_table(const ResultTable& table, TableFormat format) {
  require(!table.assignments.empty() && !table.techniques.empty() && !table.seeds.empty(),
          ErrorCode::kInsufficientData, "empty result table");
  require(table.complete(), ErrorCode::kInsufficientData,
          "incomplete result table: " + std::to_string(table.rows.size()) + " of " +
              std::to_string(table.expected_cells()) + " runs");
  std::ostringstream out;
  const std::string heading = to_string(table.machine) + ", " + to_string(table.protocol) + ", mean macro F1 over " +
                              std::to_string(table.seeds.size()) + " seeds";
  if (table.protocol == Protocol::kExposureGrid) {
    // Rows: exposure environment; columns: test environment.
    std::vector<NoiseEnvironment> exposures, tests;
    for (const auto& a : table.assignments) {
      if (std::find(exposures.begin(), exposures.end(), a.noise_train) == exposures.end())
        exposures.push_back(a.noise_train);
      if (std::find(tests.begin(), tests.end(), a.machine_test) == tests.end()) tests.push_back(a.machine_test);
    }
    std::sort(exposures.begin(), exposures.end());
    std::sort(tests.begin(), tests.end());
    for (std::size_t ti = 0; ti < table.techniques.size(); ++ti) {
      const Technique t = table.techniques[ti];
      Grid g;
      g.header.push_back("exposure \\ test");
      for (auto e : tests) g.header.push_back(to_string(e));
      for (auto x : exposures) {
        std::vector<double> vals;
        for (auto e : tests) {
          const EnvAssignment a = EnvAssignment::exposure(x, e);
          require(std::find(table.assignments.begin(), table.assignments.end(), a) != table.assignments.end(),
                  ErrorCode::kInsufficientData, "exposure grid is missing cell " + a.label());
          vals.push_back(table.mean(a, t));
        }
        g.row_labels.push_back(to_string(x));
        g.values.push_back(std::move(vals));
      }
      if (ti) out << '\n';
      out << render(g, format, heading + ", " + to_string(t));
    }
    return out.str();
  }
  Grid g;
  g.header.push_back("train/validation/test");
  for (auto t : table.techniques) g.header.push_back(to_string(t));
  for (const auto& a : table.assignments) {
    std::vector<double> vals;
    for (auto t : table.techniques) vals.push_back(table.mean(a, t));
    g.row_labels.push_back(a.label());
    g.values.push_back(std::move(vals));
  }
  out << render(g, format, heading);
  return out.str();
}

std::string results_csv(const ResultTable& table) {
  std::ostringstream out;
  out << "protocol,machine,train_env,validation_env,test_env,exposure_env,technique,seed,macro_f1,noise_f1,"
         "best_epoch,eta\n";
  out << std::setprecision(17);
  for (const auto& r : table.rows) {
    const EnvAssignment& a = r.assignment;
    out << to_string(table.protocol) << ',' << to_string(table.machine) << ',' << to_string(a.machine_train) << ','
        << to_string(a.machine_validation) << ',' << to_string(a.machine_test) << ',' << to_string(a.noise_train)
        << ',' << to_string(r.technique) << ',' << r.seed << ',' << r.macro_f1 << ',' << r.noise_f1 << ','
        << r.best_epoch << ',';
    if (r.eta) {
      if (std::isinf(*r.eta)) {
        out << (*r.eta > 0 ? "inf" : "-inf");
      } else {
        out << *r.eta;
      }
    }
    out << '\n';
  }
  return out.str();
}

ResultTable parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat, "empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("protocol,machine,train_env,validation_env,test_env,exposure_env,technique,seed,", 0) == 0,
          ErrorCode::kFormat, "not a results file (unexpected header)");
  ResultTable table;
  bool first = true;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = "results line " + std::to_string(line_no) + ": ";
    require(f.size() == 12, ErrorCode::kFormat, where + "expected 12 fields");
    try {
      const Protocol p = parse_protocol(f[0]);
      const MachineType m = parse_machine(f[1]);
      if (first) {
        table.protocol = p;
        table.machine = m;
        first = false;
      }
      require(p == table.protocol && m == table.machine, ErrorCode::kFormat,
              where + "mixed protocols or machines in one results file");
      ResultRow r;
      const NoiseEnvironment test = parse_environment(f[4]);
      const NoiseEnvironment exposure = parse_environment(f[5]);
      r.assignment = {parse_environment(f[2]), parse_environment(f[3]), test, exposure,
                      p == Protocol::kExposureGrid ? exposure : parse_environment(f[3]), test};
      r.technique = parse_technique(f[6]);
      r.seed = std::stoull(f[7]);
      r.macro_f1 = std::stod(f[8]);
      r.noise_f1 = std::stod(f[9]);
      r.best_epoch = std::stoi(f[10]);
      if (!f[11].empty()) {
        r.eta = f[11] == "inf" ? HUGE_VAL : f[11] == "-inf" ? -HUGE_VAL : std::stod(f[11]);
      }
      if (std::find(table.assignments.begin(), table.assignments.end(), r.assignment) == table.assignments.end())
        table.assignments.push_back(r.assignment);
      if (std::find(table.techniques.begin(), table.techniques.end(), r.technique) == table.techniques.end())
        table.techniques.push_back(r.technique);
      if (std::find(table.seeds.begin(), table.seeds.end(), r.seed) == table.seeds.end())
        table.seeds.push_back(r.seed);
      table.rows.push_back(r);
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::kFormat, where + "malformed number");
    } catch (const std::out_of_range&) {
      fail(ErrorCode::kFormat, where + "number out of range");
    }
  }
  return table;
}

void write_experiment_outputs(const ResultTable& table, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create output directory " + dir.string());
  const std::pair<const char*, std::string> files[] = {
      {"runs.csv", results_csv(table)},
      {"table.csv", emit_table(table, TableFormat::kCsv)},
      {"table.md", emit_table(table, TableFormat::kMarkdown)},
  };
  for (const auto& [name, text] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + (dir / name).string());
    out << text;
  }
}

}  // namespace nrfc
