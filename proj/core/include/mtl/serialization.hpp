#pragma once

#include <nlohmann/json.hpp>

#include "mtl/corpus.hpp"
#include "mtl/encoder.hpp"
#include "mtl/models.hpp"
#include "mtl/training.hpp"

namespace mtl {

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep the defaults of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const DatasetSchema& schema);
DatasetSchema dataset_schema_from_json(const nlohmann::json& j);

}  // namespace mtl
