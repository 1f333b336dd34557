#include <doctest.h>

#include "nrfc/checkpoint.hpp"
#include "nrfc/config.hpp"
#include "nrfc/trainer.hpp"
#include "test_util.hpp"

using namespace nrfc;

namespace {

const DatasetSplits& tiny_data() {
  static const DatasetSplits data = [] {
    const SyntheticSource source(SynthConfig{}, 0.5, 8000, 3);
    DatasetOptions opt;
    opt.spec = SplitSpec{{2, 1, 1}, 1.0};
    opt.snr_lo = opt.snr_hi = 0.0;
    opt.seed = 8;
    return build_splits(opt, source);
  }();
  return data;
}

TrainConfig tiny_config(Technique t, int epochs) {
  TrainConfig c;
  c.technique.kind = t;
  c.features = FeatureConfig::desk();
  c.widths = {4, 8};
  c.schedule.base = 3e-3;
  c.schedule.final = 3e-4;
  c.schedule.hold_until = 1;
  c.schedule.ramp_end = epochs;
  c.schedule.epochs = epochs;
  c.precision = Precision::kFloat64;
  return c;
}

}  // namespace

TEST_CASE("training runs for every technique and keeps the best epoch") {
  for (auto t : all_techniques()) {
    INFO(to_string(t));
    std::vector<int> seen;
    const TrainResult r = train(tiny_data(), tiny_config(t, 2), [&](const HistoryRow& h) { seen.push_back(h.epoch); });
    CHECK(r.history.size() == 2);
    CHECK(seen == std::vector<int>{1, 2});
    CHECK(r.best_epoch >= 1);
    CHECK(r.best_val_f1 == r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_f1);
    for (const auto& h : r.history) CHECK(h.val_f1 <= r.best_val_f1);
    CHECK(r.model.arch().num_outputs == output_dim(t));
    CHECK(r.eta.has_value() == score_based(t));
    CHECK(r.model.all_finite());
  }
}

TEST_CASE("training is deterministic per seed") {
  const TrainResult a = train(tiny_data(), tiny_config(Technique::kNE, 2));
  const TrainResult b = train(tiny_data(), tiny_config(Technique::kNE, 2));
  for (std::size_t i = 0; i < a.model.params().size(); ++i) CHECK(a.model.params()[i].value == b.model.params()[i].value);
  CHECK(a.history[1].train_loss == b.history[1].train_loss);
  TrainConfig other = tiny_config(Technique::kNE, 2);
  other.seed = 2;
  CHECK(train(tiny_data(), other).history[0].train_loss != a.history[0].train_loss);
}

TEST_CASE("training loss goes down on a fixed small set") {
  TrainConfig c = tiny_config(Technique::kSM, 15);
  c.schedule.base = c.schedule.final = 3e-3;
  const TrainResult r = train(tiny_data(), c);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 3; ++i) {
    first += r.history[static_cast<std::size_t>(i)].train_loss;
    last += r.history[r.history.size() - 1 - static_cast<std::size_t>(i)].train_loss;
  }
  CHECK(last < first);
}

TEST_CASE("float32 training") {
  TrainConfig c = tiny_config(Technique::kEB, 1);
  c.precision = Precision::kFloat32;
  const TrainResult r = train(tiny_data(), c);
  CHECK(r.history.size() == 1);
  CHECK(r.model.all_finite());
}

TEST_CASE("evaluation is invariant to item order") {
  const TrainConfig c = tiny_config(Technique::kFE, 1);
  const TrainResult r = train(tiny_data(), c);
  TechniqueConfig tech = c.technique;
  tech.eta = r.eta;
  const EvalReport a = evaluate(r.model, c.precision, tech, tiny_data().test, c.features);
  auto reversed = tiny_data().test;
  std::reverse(reversed.begin(), reversed.end());
  const EvalReport b = evaluate(r.model, c.precision, tech, reversed, c.features);
  CHECK(a.macro_f1 == b.macro_f1);
  CHECK(a.confusion == b.confusion);
  CHECK(a.confusion.sum() == static_cast<int>(tiny_data().test.size()));
  // batching does not change the logits
  const auto feats = extract_features(tiny_data().test, c.features);
  const Eigen::MatrixXd l1 = predict_logits(r.model, c.precision, feats, 1);
  const Eigen::MatrixXd l64 = predict_logits(r.model, c.precision, feats, 64);
  CHECK((l1 - l64).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("training rejects unusable inputs") {
  DatasetSplits d = tiny_data();
  d.validation.clear();
  CHECK_THROWS_AS(train(d, tiny_config(Technique::kNE, 1)), Error);
  DatasetSplits no_noise = tiny_data();
  std::erase_if(no_noise.train, [](const LabeledExample& e) { return e.is_noise(); });
  CHECK_THROWS_AS(train(no_noise, tiny_config(Technique::kNE, 1)), Error);
  CHECK_NOTHROW(train(no_noise, tiny_config(Technique::kSM, 1)));
}

TEST_CASE("checkpoint roundtrip") {
  test::TempDir dir("ckpt");
  const TrainConfig c = tiny_config(Technique::kNE, 1);
  const TrainResult r = train(tiny_data(), c);
  Checkpoint ck;
  ck.model = r.model;
  ck.optimizer = r.optimizer;
  ck.technique = c.technique;
  ck.technique.eta = r.eta;
  ck.features = c.features;
  ck.precision = c.precision;
  ck.epoch = r.best_epoch;
  ck.sample_rate = 8000;
  save_checkpoint(dir / "m.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.model.arch() == ck.model.arch());
  for (std::size_t i = 0; i < ck.model.params().size(); ++i) {
    CHECK(back.model.params()[i].name == ck.model.params()[i].name);
    CHECK(back.model.params()[i].value == ck.model.params()[i].value);
  }
  for (std::size_t i = 0; i < ck.model.norm_stats().size(); ++i) {
    CHECK(back.model.norm_stats()[i].running_mean == ck.model.norm_stats()[i].running_mean);
  }
  CHECK(back.optimizer.step == ck.optimizer.step);
  CHECK(back.optimizer.second_moment.back() == ck.optimizer.second_moment.back());
  CHECK(back.technique.eta == ck.technique.eta);
  CHECK(back.technique.kind == Technique::kNE);
  CHECK(back.epoch == ck.epoch);
  CHECK(back.sample_rate == 8000);
  // evaluating the reloaded model reproduces the original
  const EvalReport a = evaluate(ck.model, ck.precision, ck.technique, tiny_data().test, ck.features);
  const EvalReport b = evaluate(back.model, back.precision, back.technique, tiny_data().test, back.features);
  CHECK(a.macro_f1 == b.macro_f1);

  std::ofstream(dir / "junk.ckpt") << "NRFCCKPT but not really";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST_CASE("train config JSON") {
  TrainConfig c = tiny_config(Technique::kEB, 7);
  c.technique.beta = 0.25;
  c.weight_decay = 1e-4;
  c.augment.enabled = false;
  Json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.technique.kind == Technique::kEB);
  CHECK(back.technique.beta == 0.25);
  CHECK(back.schedule.epochs == 7);
  CHECK(back.widths == c.widths);
  CHECK(back.weight_decay == 1e-4);
  CHECK_FALSE(back.augment.enabled);
  CHECK(back.precision == Precision::kFloat64);
  CHECK(Json(back) == j);

  // missing keys keep defaults
  const TrainConfig partial = Json::parse(R"({"technique": {"kind": "AC"}})").get<TrainConfig>();
  CHECK(partial.technique.kind == Technique::kAC);
  CHECK(partial.batch_machine == TrainConfig{}.batch_machine);
  CHECK_THROWS(Json::parse(R"({"technique": {"kind": "ZZ"}})").get<TrainConfig>());
  CHECK(history_csv({{1, 0.5, 0.25, std::nullopt}}) == "epoch,loss,val_f1,eta\n1,0.5,0.25,\n");
}
