#include <doctest.h>

#include <fstream>
#include <set>

#include "nrfc/experiment.hpp"
#include "test_util.hpp"

using namespace nrfc;

namespace {

ResultRow row(const EnvAssignment& a, Technique t, std::uint64_t seed, double f1) {
  ResultRow r;
  r.assignment = a;
  r.technique = t;
  r.seed = seed;
  r.macro_f1 = f1;
  r.noise_f1 = f1 / 2.0;
  r.best_epoch = 3;
  if (t != Technique::kAC) r.eta = 0.25 * static_cast<double>(seed);
  return r;
}

ResultTable one_row_table(double sm, double ne, double fe) {
  ResultTable t;
  const auto a = EnvAssignment::same(NoiseEnvironment::kN2);
  t.assignments = {a};
  t.techniques = {Technique::kSM, Technique::kNE, Technique::kFE};
  t.seeds = {1};
  t.rows = {row(a, Technique::kSM, 1, sm), row(a, Technique::kNE, 1, ne), row(a, Technique::kFE, 1, fe)};
  return t;
}

}  // namespace

TEST_CASE("protocol assignments") {
  ExperimentSpec same;
  CHECK(same.resolved_assignments().size() == 4);
  CHECK(same.resolved_techniques().size() == 5);
  // 4 environments x 5 techniques x 3 seeds
  CHECK(same.resolved_assignments().size() * same.resolved_techniques().size() * same.seeds.size() == 60);
  for (const auto& a : same.resolved_assignments()) CHECK(a == EnvAssignment::same(a.machine_train));

  ExperimentSpec unseen;
  unseen.protocol = Protocol::kUnseenEnv;
  const auto ua = unseen.resolved_assignments();
  CHECK(ua.size() == 12);
  for (const auto& a : ua) CHECK(a.machine_train != a.machine_test);

  ExperimentSpec grid;
  grid.protocol = Protocol::kExposureGrid;
  const auto ga = grid.resolved_assignments();
  CHECK(ga.size() == 16);
  CHECK(grid.resolved_techniques() == std::vector<Technique>{Technique::kNE});
  std::set<std::pair<int, int>> cells;
  for (const auto& a : ga) {
    CHECK(a.machine_train == a.machine_test);
    CHECK(a.machine_validation == a.machine_test);
    CHECK(a.noise_test == a.machine_test);
    cells.insert({static_cast<int>(a.noise_train), static_cast<int>(a.machine_test)});
  }
  CHECK(cells.size() == 16);
  for (auto p : {Protocol::kSameEnv, Protocol::kUnseenEnv, Protocol::kExposureGrid}) {
    CHECK(parse_protocol(to_string(p)) == p);
  }
}

TEST_CASE("spec validation") {
  auto code_of = [](const std::string& text) {
    try {
      ExperimentSpec::from_json_text(text).validate();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kIo;  // sentinel: no error
  };
  CHECK(code_of(R"({"protocol": "unseen-env", "assignments": [{"train": "N1", "test": "N1"}]})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"protocol": "same-env", "assignments": [{"train": "N1", "test": "N2"}]})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"protocol": "unseen-env", "assignments": [{"train": "N1", "test": "N2"}]})") == ErrorCode::kIo);
  CHECK(code_of(R"({"seeds": [1, 1]})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"techniques": ["NE", "NE"]})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"snr_db": [0, -10]})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"protocol": "sideways"})") == ErrorCode::kConfig);
  CHECK(code_of(R"({"protocol": "exposure-grid", "assignments": [{"exposure": "N3", "test": "N1"}]})") == ErrorCode::kIo);

  const ExperimentSpec s = ExperimentSpec::from_json_text(
      R"({"protocol": "unseen-env", "machine": "train", "snr_db": -5, "seeds": [4], "techniques": ["AC"],
          "train": {"schedule": {"epochs": 3}}})");
  CHECK(s.machine == MachineType::kTrain);
  CHECK(s.snr_lo == -5.0);
  CHECK(s.snr_hi == -5.0);
  CHECK(s.train.schedule.epochs == 3);
  const ExperimentSpec again = ExperimentSpec::from_json_text(s.to_json_text());
  CHECK(again.to_json_text() == s.to_json_text());
}

TEST_CASE("table means and best-in-row flags") {
  const ResultTable t = one_row_table(0.3, 0.7, 0.5);
  CHECK(t.complete());
  const std::string csv = emit_table(t, TableFormat::kCsv);
  CHECK(csv.find("0.7000*") != std::string::npos);
  CHECK(csv.find("0.3000*") == std::string::npos);
  CHECK(csv.find("0.5000*") == std::string::npos);
  const std::string md = emit_table(t, TableFormat::kMarkdown);
  CHECK(md.find("**0.7000**") != std::string::npos);

  const ResultTable tie = one_row_table(0.6, 0.6, 0.5);
  const std::string tcsv = emit_table(tie, TableFormat::kCsv);
  std::size_t stars = 0;
  for (char c : tcsv) stars += c == '*';
  CHECK(stars == 2);

  ResultTable partial = one_row_table(0.3, 0.7, 0.5);
  partial.rows.pop_back();
  CHECK_FALSE(partial.complete());
  CHECK_THROWS_AS(emit_table(partial, TableFormat::kCsv), Error);

  ResultTable seeds;
  const auto a = EnvAssignment::same(NoiseEnvironment::kN1);
  seeds.assignments = {a};
  seeds.techniques = {Technique::kNE};
  seeds.seeds = {1, 2, 3};
  seeds.rows = {row(a, Technique::kNE, 1, 0.2), row(a, Technique::kNE, 2, 0.5), row(a, Technique::kNE, 3, 0.65)};
  CHECK(seeds.mean(a, Technique::kNE) == doctest::Approx((0.2 + 0.5 + 0.65) / 3.0).epsilon(1e-15));
  CHECK(seeds.mean_noise_f1(a, Technique::kNE) == doctest::Approx((0.1 + 0.25 + 0.325) / 3.0).epsilon(1e-15));
  CHECK(seeds.cell(a, Technique::kNE).size() == 3);
  CHECK_THROWS_AS(parse_table_format("xml"), Error);
}

TEST_CASE("exposure grid layout") {
  ResultTable t;
  t.protocol = Protocol::kExposureGrid;
  t.techniques = {Technique::kNE};
  t.seeds = {1};
  for (auto x : all_environments()) {
    for (auto test : all_environments()) {
      const auto a = EnvAssignment::exposure(x, test);
      t.assignments.push_back(a);
      t.rows.push_back(row(a, Technique::kNE, 1, 0.1 * (1 + static_cast<int>(x)) + 0.01 * static_cast<int>(test)));
    }
  }
  const std::string csv = emit_table(t, TableFormat::kCsv);
  // exposure N3 row, test N2 column
  CHECK(csv.find("0.3100") != std::string::npos);
  CHECK(csv.find("exposure") != std::string::npos);
  // each test column has one best exposure row
  std::size_t stars = 0;
  for (char c : csv) stars += c == '*';
  CHECK(stars == 4);
}

TEST_CASE("runs.csv roundtrip") {
  ResultTable t = one_row_table(0.3, 0.7, 0.5);
  t.rows[0].eta = -std::numeric_limits<double>::infinity();
  t.rows[1].eta = 0.1234567890123456789;
  t.rows[2].eta.reset();
  const ResultTable back = parse_results_csv(results_csv(t));
  REQUIRE(back.rows.size() == 3);
  CHECK(back.protocol == t.protocol);
  CHECK(back.assignments == t.assignments);
  CHECK(back.techniques == t.techniques);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.rows[i].macro_f1 == t.rows[i].macro_f1);
    CHECK(back.rows[i].eta == t.rows[i].eta);
    CHECK(back.rows[i].technique == t.rows[i].technique);
    CHECK(back.rows[i].best_epoch == 3);
  }
  CHECK(emit_table(back, TableFormat::kMarkdown) == emit_table(t, TableFormat::kMarkdown));
  CHECK_THROWS_AS(parse_results_csv("nope\n"), Error);
}

TEST_CASE("tiny experiment is reproducible and independent of worker count") {
  ExperimentSpec spec;
  spec.assignments = {EnvAssignment::same(NoiseEnvironment::kN2)};
  spec.techniques = {Technique::kSM, Technique::kAC};
  spec.seeds = {1, 2};
  spec.scale = 0.02;
  spec.duration_s = 0.5;
  spec.train.widths = {4, 8};
  spec.train.schedule.hold_until = 1;
  spec.train.schedule.ramp_end = 2;
  spec.train.schedule.epochs = 2;
  const ResultTable a = run_experiment(spec, 1);
  const ResultTable b = run_experiment(spec, 3);
  CHECK(a.complete());
  CHECK(a.rows.size() == 4);
  CHECK(results_csv(a) == results_csv(b));

  test::TempDir dir("exp");
  write_experiment_outputs(a, dir.path());
  for (const char* f : {"runs.csv", "table.csv", "table.md"}) CHECK(std::filesystem::exists(dir / f));
  std::ifstream in(dir / "runs.csv");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == results_csv(a));
}
