#include "mtl/models.hpp"

#include <algorithm>
#include <cmath>

#include "mtl/error.hpp"
#include "mtl/random.hpp"

namespace mtl {

namespace {

Parameter seeded_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                         std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(derive_seed(seed, name));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return Parameter(name, std::move(m));
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void require_finite(ad::Var v, const char* what) {
  require(all_finite(v.value()), ErrorCode::kNumerical, std::string("non-finite ") + what);
}

}  // namespace

const char* to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kStl: return "stl";
    case ModelFamily::kDoubleEncoders: return "double";
    case ModelFamily::kAttentionFusion: return "fusion";
  }
  return "?";
}

ModelFamily parse_family(std::string_view text) {
  if (text == "stl") return ModelFamily::kStl;
  if (text == "double" || text == "double_encoders") return ModelFamily::kDoubleEncoders;
  if (text == "fusion" || text == "attention_fusion") return ModelFamily::kAttentionFusion;
  fail(ErrorCode::kConfig, "unknown model family '" + std::string(text) + "' (expected stl, double or fusion)");
}

std::string display_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::kStl: return "Stacked Encoders";
    case ModelFamily::kDoubleEncoders: return "Double Encoders";
    case ModelFamily::kAttentionFusion: return "Attention Fusion Network";
  }
  return "?";
}

ClassifierHead::ClassifierHead(std::size_t width, const std::string& name, std::uint64_t seed)
    : weight_(seeded_uniform(name + ".weight", width, 2, width, seed)),
      bias_(seeded_uniform(name + ".bias", 1, 2, width, seed)) {}

ad::Var ClassifierHead::forward(ad::Tape& tape, ad::Var pooled) {
  return ad::add_row(ad::matmul(pooled, tape.parameter(weight_)), tape.parameter(bias_));
}

FusionGate::FusionGate(std::size_t width, const std::string& name, std::uint64_t seed)
    : w1_(seeded_uniform(name + ".dense1.weight", 2 * width, kGateHidden1, 2 * width, seed)),
      b1_(seeded_uniform(name + ".dense1.bias", 1, kGateHidden1, 2 * width, seed)),
      w2_(seeded_uniform(name + ".dense2.weight", kGateHidden1, kGateHidden2, kGateHidden1, seed)),
      b2_(seeded_uniform(name + ".dense2.bias", 1, kGateHidden2, kGateHidden1, seed)),
      w3_(seeded_uniform(name + ".dense3.weight", kGateHidden2, 2, kGateHidden2, seed)),
      b3_(seeded_uniform(name + ".dense3.bias", 1, 2, kGateHidden2, seed)) {}

Parameter& FusionGate::layer(std::size_t i, bool bias) {
  switch (i) {
    case 0: return bias ? b1_ : w1_;
    case 1: return bias ? b2_ : w2_;
    default: return bias ? b3_ : w3_;
  }
}

ad::Var FusionGate::forward(ad::Tape& tape, ad::Var h_task, ad::Var h_shared) {
  require(h_task.cols() * 2 == w1_.value.rows() && h_shared.cols() == h_task.cols(), ErrorCode::kShapeMismatch,
          "fusion gate input widths do not match the gate");
  const ad::Var parts[] = {h_task, h_shared};
  ad::Var x = ad::concat_cols(parts);
  x = ad::relu(ad::add_row(ad::matmul(x, tape.parameter(w1_)), tape.parameter(b1_)));
  x = ad::relu(ad::add_row(ad::matmul(x, tape.parameter(w2_)), tape.parameter(b2_)));
  x = ad::add_row(ad::matmul(x, tape.parameter(w3_)), tape.parameter(b3_));
  return ad::softmax_rows(x);
}

FusionOutput attention_fusion(ad::Tape& tape, ad::Var h_task, ad::Var h_shared, FusionGate& gate) {
  require(h_task.rows() == 1 && h_shared.rows() == 1 && h_task.cols() == h_shared.cols(), ErrorCode::kShapeMismatch,
          "attention fusion needs two 1 x d vectors of equal width, got widths " + std::to_string(h_task.cols()) +
              " and " + std::to_string(h_shared.cols()));
  ad::Var weights = gate.forward(tape, h_task, h_shared);
  ad::Var fused = ad::add(ad::mul_scalar(h_task, ad::element(weights, 0, 0)),
                          ad::mul_scalar(h_shared, ad::element(weights, 0, 1)));
  return {fused, weights};
}

std::pair<Matrix, FusionWeights> attention_fusion(const Matrix& h_task, const Matrix& h_shared, FusionGate& gate) {
  ad::Tape tape(false);
  FusionOutput out = attention_fusion(tape, tape.constant(h_task), tape.constant(h_shared), gate);
  const Matrix& w = out.weights.value();
  return {out.fused.value(), FusionWeights{w[0], w[1]}};
}

Prediction classify(const Matrix& logits) {
  require(logits.size() == 2, ErrorCode::kShapeMismatch, "classify expects two logits");
  require(all_finite(logits), ErrorCode::kNumerical, "classify received non-finite logits");
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  Prediction p;
  p.probability[0] = e0 / (e0 + e1);
  p.probability[1] = e1 / (e0 + e1);
  p.label = logits[1] > logits[0] ? 1 : 0;
  return p;
}

void ModelSpec::validate() const { encoder.validate(); }

ModelGraph::ModelGraph(ModelSpec spec, bool load_pretrained) : spec_(std::move(spec)) {
  spec_.validate();
  build(load_pretrained);
}

void ModelGraph::build(bool load_pretrained) {
  const std::size_t d = spec_.encoder.width;
  auto add_encoder = [&](const std::string& role, const std::string& name) {
    TransformerEncoder enc(spec_.encoder, name);
    if (load_pretrained && spec_.encoder.backend == EncoderBackend::kPretrained) {
      enc.load_pretrained(spec_.encoder.pretrained_id);
    }
    encoders_.emplace(role, std::move(enc));
  };
  if (spec_.family == ModelFamily::kStl) {
    add_encoder("lower", "encoder.lower");
    add_encoder("upper", "encoder.upper");
    heads_.emplace(spec_.stl_task, ClassifierHead(d, "head", spec_.seed));
    return;
  }
  add_encoder("shared", "shared");
  for (Task t : kAllTasks) {
    const std::string task = to_string(t);
    add_encoder(task, task + ".encoder");
    heads_.emplace(t, ClassifierHead(d, task + ".head", spec_.seed));
    if (spec_.family == ModelFamily::kAttentionFusion) {
      gates_.emplace(t, FusionGate(d, task + ".gate", spec_.seed));
    }
  }
}

std::vector<Task> ModelGraph::tasks() const {
  std::vector<Task> out;
  for (const auto& [t, _] : heads_) out.push_back(t);
  return out;
}

TransformerEncoder& ModelGraph::encoder(const std::string& role) {
  auto it = encoders_.find(role);
  require(it != encoders_.end(), ErrorCode::kInvalidArgument,
          std::string("model family ") + to_string(spec_.family) + " has no encoder '" + role + "'");
  return it->second;
}

ClassifierHead& ModelGraph::head(Task task) {
  auto it = heads_.find(task);
  require(it != heads_.end(), ErrorCode::kInvalidArgument, std::string("model has no head for task ") + to_string(task));
  return it->second;
}

FusionGate& ModelGraph::gate(Task task) {
  auto it = gates_.find(task);
  require(it != gates_.end(), ErrorCode::kInvalidArgument, std::string("model has no fusion gate for ") + to_string(task));
  return it->second;
}

std::vector<Parameter*> ModelGraph::parameters() {
  std::vector<Parameter*> out;
  for (auto& [_, enc] : encoders_) {
    auto p = enc.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& [_, g] : gates_) {
    auto p = g.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& [_, h] : heads_) {
    auto p = h.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Parameter*> ModelGraph::parameters() const {
  auto p = const_cast<ModelGraph*>(this)->parameters();
  return {p.begin(), p.end()};
}

Parameter* ModelGraph::find(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::vector<Parameter*> ModelGraph::task_parameters(Task task) {
  std::vector<Parameter*> out;
  if (!is_multitask()) return out;
  const std::string prefix = std::string(to_string(task)) + ".";
  for (Parameter* p : parameters()) {
    if (starts_with(p->name, prefix)) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> ModelGraph::shared_parameters() {
  std::vector<Parameter*> out;
  if (!is_multitask()) return out;
  for (Parameter* p : parameters()) {
    if (starts_with(p->name, "shared.")) out.push_back(p);
  }
  return out;
}

void ModelGraph::retarget(Task task, const std::string& salt) {
  require(spec_.family == ModelFamily::kStl, ErrorCode::kInvalidArgument, "only single-task graphs can be retargeted");
  heads_.clear();
  spec_.stl_task = task;
  heads_.emplace(task, ClassifierHead(spec_.encoder.width, "head", derive_seed(spec_.seed, salt)));
}

void ModelGraph::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

ForwardResult ModelGraph::forward(ad::Tape& tape, const TokenizedPost& post, Task task) {
  ForwardResult result;
  switch (spec_.family) {
    case ModelFamily::kStl:
      require(task == spec_.stl_task, ErrorCode::kInvalidArgument,
              std::string("single-task model trained for ") + to_string(spec_.stl_task) + " asked for " +
                  to_string(task));
      result.logits = stl_forward(tape, *this, post);
      break;
    case ModelFamily::kDoubleEncoders: {
      ad::Var shared_hidden = encoder("shared").encode_tokens(tape, post);
      ad::Var hidden = encoder(to_string(task)).encode_embeddings(tape, shared_hidden, post.attention_mask);
      result.logits = head(task).forward(tape, pool_cls(hidden));
      break;
    }
    case ModelFamily::kAttentionFusion: {
      ad::Var weights;
      result.logits = fusion_model_forward(tape, *this, post, task, &weights);
      result.weights = weights;
      break;
    }
  }
  require_finite(result.logits, "logits");
  return result;
}

ad::Var stl_forward(ad::Tape& tape, ModelGraph& model, const TokenizedPost& post) {
  require(model.family() == ModelFamily::kStl, ErrorCode::kInvalidArgument, "stl_forward on a multitask graph");
  ad::Var lower = model.encoder("lower").encode_tokens(tape, post);
  ad::Var upper = model.encoder("upper").encode_embeddings(tape, lower, post.attention_mask);
  ad::Var logits = model.head(model.spec().stl_task).forward(tape, pool_cls(upper));
  require_finite(logits, "logits");
  return logits;
}

ad::Var fusion_model_forward(ad::Tape& tape, ModelGraph& model, const TokenizedPost& post, Task task,
                             ad::Var* weights_out) {
  require(model.family() == ModelFamily::kAttentionFusion, ErrorCode::kInvalidArgument,
          "fusion_model_forward on a non-fusion graph");
  ad::Var h_shared = pool_cls(model.encoder("shared").encode_tokens(tape, post));
  ad::Var h_task = pool_cls(model.encoder(to_string(task)).encode_tokens(tape, post));
  FusionOutput fusion = attention_fusion(tape, h_task, h_shared, model.gate(task));
  require_finite(fusion.fused, "fused representation");
  if (weights_out != nullptr) *weights_out = fusion.weights;
  ad::Var logits = model.head(task).forward(tape, fusion.fused);
  require_finite(logits, "logits");
  return logits;
}

BatchLogits double_encoders_forward(ad::Tape& tape, ModelGraph& model, const TaskBatchPair<TokenizedPost>& pair) {
  require(model.family() == ModelFamily::kDoubleEncoders, ErrorCode::kInvalidArgument,
          "double_encoders_forward on a different family");
  require(!pair.depression.empty() && !pair.stress.empty(), ErrorCode::kInvalidArgument,
          "double encoders step needs both a depression and a stress batch");
  BatchLogits out;
  for (Task t : kAllTasks) {
    auto& dst = t == Task::kDepression ? out.depression : out.stress;
    for (const TokenizedPost& post : pair[t]) dst.push_back(model.forward(tape, post, t).logits);
  }
  return out;
}

Matrix predict_logits(ModelGraph& model, const TokenizedPost& post, Task task, ad::Precision precision) {
  ad::Tape tape(false, precision);
  return model.forward(tape, post, task).logits.value();
}

}  // namespace mtl
