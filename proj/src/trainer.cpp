#include "nrfc/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "nrfc/random.hpp"

namespace nrfc {
namespace {

template <typename Scalar>
Eigen::MatrixXd logits_of(const Model<Scalar>& model, const std::vector<LogMelFeature>& features, int eval_batch) {
  require(eval_batch > 0, ErrorCode::kInvalidArgument, "eval batch must be positive");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(features.size()), model.arch().num_outputs);
  for (std::size_t start = 0; start < features.size(); start += static_cast<std::size_t>(eval_batch)) {
    const std::size_t end = std::min(features.size(), start + static_cast<std::size_t>(eval_batch));
    std::vector<const LogMelFeature*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&features[i]);
    const Mat<Scalar> logits = model.forward_frozen(stack_features<Scalar>(ptrs), Mode::kEval);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        logits.template cast<double>();
  }
  return out;
}

std::vector<int> labels_of(const std::vector<LabeledExample>& split) {
  std::vector<int> out;
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back(ex.label);
  return out;
}

template <typename Scalar>
AdamState<double> adam_to_double(const AdamState<Scalar>& s) {
  AdamState<double> out;
  out.beta1 = s.beta1;
  out.beta2 = s.beta2;
  out.eps = s.eps;
  out.weight_decay = s.weight_decay;
  out.step = s.step;
  for (const auto& m : s.first_moment) out.first_moment.push_back(m.template cast<double>());
  for (const auto& v : s.second_moment) out.second_moment.push_back(v.template cast<double>());
  return out;
}

template <typename Scalar>
TrainResult train_impl(const DatasetSplits& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const TechniqueConfig& tech = cfg.technique;
  const bool exposure = uses_exposure(tech.kind);
  const auto machine_idx = family_indices(data.train, false);
  const auto noise_idx = family_indices(data.train, true);
  require(!machine_idx.empty(), ErrorCode::kInsufficientData, "training split has no machine examples");
  require(!exposure || !noise_idx.empty(), ErrorCode::kInsufficientData,
          "exposure technique needs noise-only training examples");
  require(!data.validation.empty(), ErrorCode::kInsufficientData, "empty validation split");

  const AudioClip& first = data.train[machine_idx.front()].clip;
  const LogMelExtractor extract(cfg.features, first.sample_rate());

  std::vector<LogMelFeature> machine_features;
  std::vector<int> machine_labels;
  for (auto i : machine_idx) {
    machine_features.push_back(extract(data.train[i].clip));
    machine_labels.push_back(data.train[i].label);
  }
  std::vector<LogMelFeature> noise_features(noise_idx.size());
  if (exposure && !cfg.augment.enabled) {
    for (std::size_t j = 0; j < noise_idx.size(); ++j) noise_features[j] = extract(data.train[noise_idx[j]].clip);
  }
  const auto val_features = extract_features(data.validation, cfg.features);
  const auto val_truth = labels_of(data.validation);

  Architecture arch = cfg.architecture(first.size());
  arch.num_outputs = output_dim(tech.kind);
  Model<Scalar> model(arch, derive_seed({cfg.seed, 0x4D4F44454CULL}));
  AdamState<Scalar> adam;
  adam.weight_decay = cfg.weight_decay;

  const std::size_t batch_machine =
      static_cast<std::size_t>(exposure ? cfg.batch_machine : cfg.batch_machine + cfg.batch_noise);
  const std::size_t batch_noise = exposure ? static_cast<std::size_t>(cfg.batch_noise) : 0;
  const std::size_t steps = steps_per_epoch(machine_idx.size(), batch_machine);

  TrainResult result;
  Model<Scalar> best_model = model;
  AdamState<Scalar> best_adam;
  for (int epoch = 1; epoch <= cfg.schedule.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch);
    if (exposure && cfg.augment.enabled) {
      for (std::size_t j = 0; j < noise_idx.size(); ++j) {
        const AudioClip& clip = data.train[noise_idx[j]].clip;
        Rng rng{cfg.seed, 0x415547ULL, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(j)};
        const double shift = rng.uniform(0.0, std::min(cfg.augment.max_shift_s, clip.duration()));
        const double gain = rng.uniform(cfg.augment.min_gain, cfg.augment.max_gain);
        noise_features[j] = extract(augment_noise(clip, shift, gain));
      }
    }

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const BatchIndices batch = sample_batch(machine_idx.size(), noise_idx.size(), batch_machine, batch_noise,
                                              cfg.seed, epoch, step);
      std::vector<const LogMelFeature*> ptrs;
      std::vector<int> labels;
      for (auto i : batch.machine) {
        ptrs.push_back(&machine_features[i]);
        labels.push_back(machine_labels[i]);
      }
      for (auto j : batch.noise) ptrs.push_back(&noise_features[j]);

      ForwardCache<Scalar> cache;
      const Mat<Scalar> logits = model.forward(stack_features<Scalar>(ptrs), Mode::kTrain, &cache);
      const LossResult<Scalar> loss = technique_loss<Scalar>(tech, logits, labels);
      if (!std::isfinite(static_cast<double>(loss.value))) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " step " << step << ": total " << loss.value
            << ", classification " << loss.classification << ", auxiliary " << loss.auxiliary;
        fail(ErrorCode::kNumerical, msg.str());
      }
      adam_step(model.params(), model.backward(cache, loss.d_logits), adam, lr);
      loss_sum += static_cast<double>(loss.value);
    }
    require(model.all_finite(), ErrorCode::kNumerical, "non-finite parameters after epoch " + std::to_string(epoch));

    TechniqueConfig val_tech = tech;
    const EvalReport report = evaluate_logits(logits_of(model, val_features, cfg.eval_batch), val_truth, val_tech,
                                              score_based(tech.kind));
    HistoryRow row{epoch, loss_sum / static_cast<double>(steps), report.macro_f1, val_tech.eta};
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
    if (report.macro_f1 > result.best_val_f1) {
      result.best_val_f1 = report.macro_f1;
      result.best_epoch = epoch;
      result.eta = val_tech.eta;
      best_model = model;
      best_adam = adam;
    }
  }
  result.model = best_model.template cast<double>();
  result.optimizer = adam_to_double(best_adam);
  return result;
}

}  // namespace

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

Precision parse_precision(const std::string& name) {
  if (name == "float32") return Precision::kFloat32;
  if (name == "float64") return Precision::kFloat64;
  fail(ErrorCode::kInvalidArgument, "unknown precision (expected float32|float64): " + name);
}

Architecture TrainConfig::architecture(Eigen::Index n_samples) const {
  Architecture a;
  a.n_mels = features.n_mels;
  a.n_frames = static_cast<int>(features.frame_count(n_samples));
  a.widths = widths;
  a.num_outputs = output_dim(technique.kind);
  a.bn = bn;
  return a;
}

TrainResult train(const DatasetSplits& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.precision == Precision::kFloat32) return train_impl<float>(data, cfg, on_epoch);
  return train_impl<double>(data, cfg, on_epoch);
}

std::vector<LogMelFeature> extract_features(const std::vector<LabeledExample>& split, const FeatureConfig& cfg) {
  std::vector<LogMelFeature> out;
  if (split.empty()) return out;
  const LogMelExtractor extract(cfg, split.front().clip.sample_rate());
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back(extract(ex.clip));
  return out;
}

Eigen::MatrixXd predict_logits(const Model<double>& model, Precision precision,
                               const std::vector<LogMelFeature>& features, int eval_batch) {
  if (precision == Precision::kFloat32) return logits_of(model.cast<float>(), features, eval_batch);
  return logits_of(model, features, eval_batch);
}

EvalReport evaluate_logits(const Eigen::MatrixXd& logits, const std::vector<int>& truth, TechniqueConfig& technique,
                           bool calibrate) {
  const auto n = static_cast<std::size_t>(logits.rows());
  require(n > 0 && truth.size() == n, ErrorCode::kInvalidArgument, "evaluation needs one label per logits row");
  if (score_based(technique.kind) && calibrate) {
    std::vector<double> scores(n);
    std::vector<int> argmax(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd row = logits.row(static_cast<Eigen::Index>(i)).transpose();
      scores[i] = noise_score(technique.kind, row, technique.temperature);
      Eigen::Index k = 0;
      row.head(kConditionClasses).maxCoeff(&k);
      argmax[i] = static_cast<int>(k);
    }
    technique.eta = calibrate_threshold(scores, truth, argmax).eta;
  }
  ConfusionMatrix cm(kEvalClasses);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd row = logits.row(static_cast<Eigen::Index>(i)).transpose();
    cm.add(truth[i], decide(technique, row).label());
  }
  return make_report(cm, score_based(technique.kind) ? technique.eta : std::nullopt);
}

EvalReport evaluate(const Model<double>& model, Precision precision, const TechniqueConfig& technique,
                    const std::vector<LabeledExample>& split, const FeatureConfig& features, int eval_batch) {
  require(!split.empty(), ErrorCode::kInvalidArgument, "cannot evaluate an empty split");
  require(model.arch().num_outputs == output_dim(technique.kind), ErrorCode::kShapeMismatch,
          "model output width does not match the technique");
  TechniqueConfig tech = technique;
  return evaluate_logits(predict_logits(model, precision, extract_features(split, features), eval_batch),
                         labels_of(split), tech, false);
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "epoch,loss,val_f1,eta\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val_f1 << ',';
    if (r.eta) out << *r.eta;
    out << '\n';
  }
  return out.str();
}

}  // namespace nrfc
