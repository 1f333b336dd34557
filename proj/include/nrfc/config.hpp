#pragma once

#include <json.hpp>
#include <string>

#include "nrfc/classifier.hpp"
#include "nrfc/features.hpp"
#include "nrfc/techniques.hpp"
#include "nrfc/trainer.hpp"

namespace nrfc {

// JSON mappings for the experiment config file. Missing keys keep their
// defaults; unknown keys are ignored.

using Json = nlohmann::json;

void to_json(Json& j, const FeatureConfig& c);
void from_json(const Json& j, FeatureConfig& c);
void to_json(Json& j, const TechniqueConfig& c);
void from_json(const Json& j, TechniqueConfig& c);
void to_json(Json& j, const LrSchedule& c);
void from_json(const Json& j, LrSchedule& c);
void to_json(Json& j, const BatchNormOptions& c);
void from_json(const Json& j, BatchNormOptions& c);
void to_json(Json& j, const Architecture& c);
void from_json(const Json& j, Architecture& c);
void to_json(Json& j, const AugmentOptions& c);
void from_json(const Json& j, AugmentOptions& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

Json parse_json_file(const std::string& path);

}  // namespace nrfc
