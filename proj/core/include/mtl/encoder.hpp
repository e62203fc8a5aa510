#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mtl/autodiff.hpp"
#include "mtl/matrix.hpp"
#include "mtl/tokenizer.hpp"

namespace mtl {

enum class EncoderBackend { kPretrained, kToy };

// Pre-norm: x + f(LN(x)) with a final LayerNorm (toy default).
// Post-norm: LN(x + f(x)) with an embedding LayerNorm (BERT layout).
enum class NormPlacement { kPre, kPost };

struct EncoderConfig {
  EncoderBackend backend = EncoderBackend::kToy;
  // Directory holding config.json, vocab.txt and model.safetensors.
  std::string pretrained_id;

  std::size_t width = 8;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t ffn_width = 32;
  std::size_t vocab_size = 512;
  std::size_t max_length = kDefaultSequenceLength;
  std::size_t max_positions = kDefaultSequenceLength;
  std::size_t type_vocab_size = 0;  // 0 = no token-type embedding
  NormPlacement norm = NormPlacement::kPre;
  double layer_norm_eps = 1e-5;
  double dropout = 0.0;
  // Add position embeddings to injected embeddings as well as to token lookups.
  bool reapply_positions = true;
  std::uint64_t seed = 0;

  void validate() const;
};

const char* to_string(EncoderBackend backend);
EncoderBackend parse_backend(std::string_view text);

// Reads config.json of a pretrained directory into an encoder config.
EncoderConfig pretrained_config(const std::filesystem::path& dir, std::size_t max_length);

std::unique_ptr<Tokenizer> make_tokenizer(const EncoderConfig& config);

// Per-token states of the final layer plus the pooled position-0 vector.
struct SequenceRepresentation {
  Matrix hidden;  // N x d
  Matrix pooled;  // 1 x d

  std::size_t width() const { return hidden.cols(); }
};

// Final-layer state at position 0.
Matrix pool_cls(const SequenceRepresentation& rep);
ad::Var pool_cls(ad::Var hidden);

class TransformerEncoder {
 public:
  // Seeded scaled-uniform initialization; `name` prefixes every parameter.
  TransformerEncoder(EncoderConfig config, std::string name);

  const EncoderConfig& config() const { return config_; }
  const std::string& name() const { return name_; }
  std::size_t width() const { return config_.width; }

  // Returns the N x d final hidden states on the tape.
  ad::Var encode_tokens(ad::Tape& tape, const TokenizedPost& tokens);
  ad::Var encode_embeddings(ad::Tape& tape, ad::Var embeddings, std::span<const int> mask);

  // Inference helpers with the non-finite check.
  SequenceRepresentation encode_tokens(const TokenizedPost& tokens,
                                       ad::Precision precision = ad::Precision::kDouble);
  SequenceRepresentation encode_embeddings(const Matrix& embeddings, std::span<const int> mask,
                                           ad::Precision precision = ad::Precision::kDouble);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  // Copies weights from a BERT-layout safetensors file; shapes must match.
  void load_pretrained(const std::filesystem::path& dir);

 private:
  struct Layer {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_gamma, ln1_beta;
    Parameter w1, b1, w2, b2;
    Parameter ln2_gamma, ln2_beta;
  };

  ad::Var embed(ad::Tape& tape, ad::Var token_states, std::size_t length, bool add_positions);
  ad::Var run_layers(ad::Tape& tape, ad::Var x, std::span<const int> mask);
  ad::Var attention(ad::Tape& tape, Layer& layer, ad::Var x, std::span<const int> mask);
  ad::Var feed_forward(ad::Tape& tape, Layer& layer, ad::Var x);

  EncoderConfig config_;
  std::string name_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  Parameter type_embedding_;
  Parameter embed_ln_gamma_, embed_ln_beta_;
  std::vector<Layer> layers_;
  Parameter final_ln_gamma_, final_ln_beta_;
};

}  // namespace mtl
