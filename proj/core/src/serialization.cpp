#include "mtl/serialization.hpp"

#include "mtl/error.hpp"

namespace mtl {

namespace {

const char* to_string(NormPlacement n) { return n == NormPlacement::kPre ? "pre" : "post"; }

NormPlacement parse_norm(const std::string& s) {
  if (s == "pre") return NormPlacement::kPre;
  if (s == "post") return NormPlacement::kPost;
  fail(ErrorCode::kConfig, "unknown norm placement '" + s + "'");
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"backend", to_string(c.backend)},
          {"pretrained_id", c.pretrained_id},
          {"width", c.width},
          {"layers", c.layers},
          {"heads", c.heads},
          {"ffn_width", c.ffn_width},
          {"vocab_size", c.vocab_size},
          {"max_length", c.max_length},
          {"max_positions", c.max_positions},
          {"type_vocab_size", c.type_vocab_size},
          {"norm", to_string(c.norm)},
          {"layer_norm_eps", c.layer_norm_eps},
          {"dropout", c.dropout},
          {"reapply_positions", c.reapply_positions},
          {"seed", c.seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
  read_if(j, "pretrained_id", c.pretrained_id);
  if (c.backend == EncoderBackend::kPretrained && !j.contains("width")) {
    // Dimensions come from the pretrained directory's own config.json.
    const std::size_t max_length = j.value("max_length", kDefaultSequenceLength);
    EncoderConfig p = pretrained_config(c.pretrained_id, max_length);
    read_if(j, "dropout", p.dropout);
    read_if(j, "reapply_positions", p.reapply_positions);
    read_if(j, "seed", p.seed);
    return p;
  }
  read_if(j, "width", c.width);
  read_if(j, "layers", c.layers);
  read_if(j, "heads", c.heads);
  read_if(j, "ffn_width", c.ffn_width);
  read_if(j, "vocab_size", c.vocab_size);
  read_if(j, "max_length", c.max_length);
  c.max_positions = std::max(c.max_positions, c.max_length);
  read_if(j, "max_positions", c.max_positions);
  read_if(j, "type_vocab_size", c.type_vocab_size);
  if (j.contains("norm")) c.norm = parse_norm(j.at("norm").get<std::string>());
  read_if(j, "layer_norm_eps", c.layer_norm_eps);
  read_if(j, "dropout", c.dropout);
  read_if(j, "reapply_positions", c.reapply_positions);
  read_if(j, "seed", c.seed);
  return c;
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"family", to_string(s.family)},
          {"stl_task", to_string(s.stl_task)},
          {"encoder", to_json(s.encoder)},
          {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  if (j.contains("family")) s.family = parse_family(j.at("family").get<std::string>());
  if (j.contains("stl_task")) s.stl_task = parse_task(j.at("stl_task").get<std::string>());
  if (j.contains("encoder")) s.encoder = encoder_config_from_json(j.at("encoder"));
  read_if(j, "seed", s.seed);
  return s;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", {{"depression", c.learning_rate.depression}, {"stress", c.learning_rate.stress}}},
          {"step_size", c.step_size},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"beta", c.beta},
          {"seed", c.seed},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"precision", ad::to_string(c.precision)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (j.contains("learning_rate")) {
    const auto& lr = j.at("learning_rate");
    if (lr.is_number()) {
      c.learning_rate.depression = c.learning_rate.stress = lr.get<double>();
    } else {
      read_if(lr, "depression", c.learning_rate.depression);
      read_if(lr, "stress", c.learning_rate.stress);
    }
  }
  read_if(j, "step_size", c.step_size);
  read_if(j, "gamma", c.gamma);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "max_epochs", c.max_epochs);
  read_if(j, "patience", c.patience);
  read_if(j, "beta", c.beta);
  read_if(j, "seed", c.seed);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    read_if(a, "beta1", c.adam.beta1);
    read_if(a, "beta2", c.adam.beta2);
    read_if(a, "epsilon", c.adam.epsilon);
  }
  if (j.contains("precision")) c.precision = ad::parse_precision(j.at("precision").get<std::string>());
  return c;
}

nlohmann::json to_json(const DatasetSchema& s) {
  return {{"format", s.format == FileFormat::kDelimited ? "delimited" : "jsonl"},
          {"delimiter", std::string(1, s.delimiter)},
          {"text_column", s.text_column},
          {"label_column", s.label_column},
          {"id_column", s.id_column}};
}

DatasetSchema dataset_schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  if (j.contains("format")) {
    const auto f = j.at("format").get<std::string>();
    if (f == "delimited" || f == "csv" || f == "tsv") {
      s.format = FileFormat::kDelimited;
      if (f == "tsv") s.delimiter = '\t';
    } else if (f == "jsonl") {
      s.format = FileFormat::kJsonLines;
    } else {
      fail(ErrorCode::kConfig, "unknown dataset format '" + f + "'");
    }
  }
  if (j.contains("delimiter")) {
    auto d = j.at("delimiter").get<std::string>();
    if (d == "\\t" || d == "tab") d = "\t";
    require(d.size() == 1, ErrorCode::kConfig, "delimiter must be a single character");
    s.delimiter = d[0];
  }
  read_if(j, "text_column", s.text_column);
  read_if(j, "label_column", s.label_column);
  read_if(j, "id_column", s.id_column);
  return s;
}

}  // namespace mtl
