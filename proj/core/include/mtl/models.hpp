#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtl/autodiff.hpp"
#include "mtl/corpus.hpp"
#include "mtl/encoder.hpp"
#include "mtl/task.hpp"

namespace mtl {

enum class ModelFamily { kStl, kDoubleEncoders, kAttentionFusion };

const char* to_string(ModelFamily family);
// Accepts the CLI short names (stl, double, fusion) and the long forms.
ModelFamily parse_family(std::string_view text);
std::string display_name(ModelFamily family);

inline constexpr std::size_t kGateHidden1 = 768;
inline constexpr std::size_t kGateHidden2 = 128;

// Two-unit dense layer on a pooled vector.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t width, const std::string& name, std::uint64_t seed);

  ad::Var forward(ad::Tape& tape, ad::Var pooled);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // d x 2
  Parameter bias_;    // 1 x 2
};

struct FusionWeights {
  double alpha_task = 0.5;
  double alpha_shared = 0.5;
};

// [h_task ; h_shared] -> ReLU(768) -> ReLU(128) -> softmax(2).
class FusionGate {
 public:
  FusionGate() = default;
  FusionGate(std::size_t width, const std::string& name, std::uint64_t seed);

  // Returns the 1 x 2 softmax output (alpha_task, alpha_shared).
  ad::Var forward(ad::Tape& tape, ad::Var h_task, ad::Var h_shared);
  std::vector<Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}; }

  Parameter& layer(std::size_t i, bool bias);

 private:
  Parameter w1_, b1_, w2_, b2_, w3_, b3_;
};

struct FusionOutput {
  ad::Var fused;    // 1 x d
  ad::Var weights;  // 1 x 2
};

// weights = gate([h_task ; h_shared]); fused = a_task * h_task + a_shared * h_shared.
FusionOutput attention_fusion(ad::Tape& tape, ad::Var h_task, ad::Var h_shared, FusionGate& gate);

// Inference form on plain vectors.
std::pair<Matrix, FusionWeights> attention_fusion(const Matrix& h_task, const Matrix& h_shared, FusionGate& gate);

struct ForwardResult {
  ad::Var logits;                 // 1 x 2
  std::optional<ad::Var> weights;  // fusion family only
};

struct Prediction {
  int label = 0;
  double probability[2] = {0.5, 0.5};
};

// Softmax + argmax; ties resolve to class 0.
Prediction classify(const Matrix& logits);

struct ModelSpec {
  ModelFamily family = ModelFamily::kStl;
  Task stl_task = Task::kDepression;  // stl only
  EncoderConfig encoder;
  std::uint64_t seed = 0;  // heads and gates

  void validate() const;
};

// The three model families. Parameter names are stable and encode ownership:
//   stl:    encoder.lower.*, encoder.upper.*, head.*
//   mtl:    shared.*, <task>.encoder.*, <task>.head.*, <task>.gate.* (fusion)
class ModelGraph {
 public:
  explicit ModelGraph(ModelSpec spec, bool load_pretrained = true);

  const ModelSpec& spec() const { return spec_; }
  ModelFamily family() const { return spec_.family; }
  bool is_multitask() const { return spec_.family != ModelFamily::kStl; }
  // Tasks with a head in this graph.
  std::vector<Task> tasks() const;

  ForwardResult forward(ad::Tape& tape, const TokenizedPost& post, Task task);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(const std::string& name);
  // Parameters that receive gradient only from `task`'s loss (empty for stl).
  std::vector<Parameter*> task_parameters(Task task);
  std::vector<Parameter*> shared_parameters();

  // Single-task graph only: point the graph at `task` with a freshly seeded
  // head; encoders are untouched.
  void retarget(Task task, const std::string& salt);

  void zero_grad();

  // Provenance of the weights (e.g. the checkpoint a transfer run started from).
  std::string lineage;

  TransformerEncoder& encoder(const std::string& role);
  ClassifierHead& head(Task task);
  FusionGate& gate(Task task);

 private:
  void build(bool load_pretrained);

  ModelSpec spec_;
  std::map<std::string, TransformerEncoder> encoders_;
  std::map<Task, ClassifierHead> heads_;
  std::map<Task, FusionGate> gates_;
};

// Free-function forms of the per-family passes.
ad::Var stl_forward(ad::Tape& tape, ModelGraph& model, const TokenizedPost& post);
ad::Var fusion_model_forward(ad::Tape& tape, ModelGraph& model, const TokenizedPost& post, Task task,
                             ad::Var* weights_out = nullptr);

struct BatchLogits {
  std::vector<ad::Var> depression;
  std::vector<ad::Var> stress;
};

BatchLogits double_encoders_forward(ad::Tape& tape, ModelGraph& model,
                                    const TaskBatchPair<TokenizedPost>& pair);

// Convenience inference: logits of one post as a plain 1 x 2 matrix.
Matrix predict_logits(ModelGraph& model, const TokenizedPost& post, Task task,
                      ad::Precision precision = ad::Precision::kDouble);

}  // namespace mtl
