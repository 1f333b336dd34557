#include "nrfc/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace nrfc {

void to_json(Json& j, const FeatureConfig& c) {
  j = Json{{"n_fft", c.n_fft}, {"hop", c.hop},   {"n_mels", c.n_mels},
           {"fmin", c.fmin},   {"fmax", c.fmax}, {"log_floor", c.log_floor}};
}

void from_json(const Json& j, FeatureConfig& c) {
  c.n_fft = j.value("n_fft", c.n_fft);
  c.hop = j.value("hop", c.hop);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.log_floor = j.value("log_floor", c.log_floor);
}

void to_json(Json& j, const TechniqueConfig& c) {
  j = Json{{"kind", to_string(c.kind)},
           {"alpha", c.alpha},
           {"beta", c.beta},
           {"temperature", c.temperature},
           {"margin_machine", c.margin_machine},
           {"margin_noise", c.margin_noise},
           {"log_floor", c.log_floor}};
  // +-inf thresholds are legal calibration outcomes; JSON has no infinity.
  if (c.eta) {
    if (std::isinf(*c.eta)) {
      j["eta"] = *c.eta > 0 ? "inf" : "-inf";
    } else {
      j["eta"] = *c.eta;
    }
  } else {
    j["eta"] = nullptr;
  }
}

void from_json(const Json& j, TechniqueConfig& c) {
  if (j.contains("kind")) c.kind = parse_technique(j.at("kind").get<std::string>());
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.temperature = j.value("temperature", c.temperature);
  c.margin_machine = j.value("margin_machine", c.margin_machine);
  c.margin_noise = j.value("margin_noise", c.margin_noise);
  c.log_floor = j.value("log_floor", c.log_floor);
  if (j.contains("eta") && !j.at("eta").is_null()) {
    const Json& e = j.at("eta");
    if (e.is_string()) {
      const auto s = e.get<std::string>();
      require(s == "inf" || s == "-inf", ErrorCode::kConfig, "eta string must be inf or -inf");
      c.eta = s == "inf" ? HUGE_VAL : -HUGE_VAL;
    } else {
      c.eta = e.get<double>();
    }
  }
}

void to_json(Json& j, const LrSchedule& c) {
  j = Json{{"base", c.base}, {"final", c.final}, {"hold_until", c.hold_until}, {"ramp_end", c.ramp_end},
           {"epochs", c.epochs}};
}

void from_json(const Json& j, LrSchedule& c) {
  c.base = j.value("base", c.base);
  c.final = j.value("final", c.final);
  c.hold_until = j.value("hold_until", c.hold_until);
  c.ramp_end = j.value("ramp_end", c.ramp_end);
  c.epochs = j.value("epochs", c.epochs);
}

void to_json(Json& j, const BatchNormOptions& c) { j = Json{{"eps", c.eps}, {"momentum", c.momentum}}; }

void from_json(const Json& j, BatchNormOptions& c) {
  c.eps = j.value("eps", c.eps);
  c.momentum = j.value("momentum", c.momentum);
}

void to_json(Json& j, const Architecture& c) {
  j = Json{{"n_mels", c.n_mels}, {"n_frames", c.n_frames}, {"widths", c.widths},
           {"num_outputs", c.num_outputs}, {"bn", c.bn}};
}

void from_json(const Json& j, Architecture& c) {
  c.n_mels = j.value("n_mels", c.n_mels);
  c.n_frames = j.value("n_frames", c.n_frames);
  c.widths = j.value("widths", c.widths);
  c.num_outputs = j.value("num_outputs", c.num_outputs);
  if (j.contains("bn")) c.bn = j.at("bn").get<BatchNormOptions>();
}

void to_json(Json& j, const AugmentOptions& c) {
  j = Json{{"enabled", c.enabled}, {"max_shift_s", c.max_shift_s}, {"min_gain", c.min_gain},
           {"max_gain", c.max_gain}};
}

void from_json(const Json& j, AugmentOptions& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.max_shift_s = j.value("max_shift_s", c.max_shift_s);
  c.min_gain = j.value("min_gain", c.min_gain);
  c.max_gain = j.value("max_gain", c.max_gain);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"technique", c.technique},
           {"features", c.features},
           {"widths", c.widths},
           {"bn", c.bn},
           {"schedule", c.schedule},
           {"batch_machine", c.batch_machine},
           {"batch_noise", c.batch_noise},
           {"weight_decay", c.weight_decay},
           {"augment", c.augment},
           {"precision", to_string(c.precision)},
           {"eval_batch", c.eval_batch},
           {"seed", c.seed}};
}

void from_json(const Json& j, TrainConfig& c) {
  if (j.contains("technique")) from_json(j.at("technique"), c.technique);
  if (j.contains("features")) from_json(j.at("features"), c.features);
  c.widths = j.value("widths", c.widths);
  if (j.contains("bn")) from_json(j.at("bn"), c.bn);
  if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
  c.batch_machine = j.value("batch_machine", c.batch_machine);
  c.batch_noise = j.value("batch_noise", c.batch_noise);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("augment")) from_json(j.at("augment"), c.augment);
  if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
  c.eval_batch = j.value("eval_batch", c.eval_batch);
  c.seed = j.value("seed", c.seed);
}

Json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, "config file " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace nrfc
