#include "mtl/encoder.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mtl/error.hpp"
#include "mtl/random.hpp"
#include "mtl/safetensors.hpp"

namespace mtl {

namespace {

Parameter uniform_param(const std::string& name, std::size_t rows, std::size_t cols, double bound,
                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, name));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return Parameter(name, std::move(m));
}

Parameter constant_param(const std::string& name, std::size_t rows, std::size_t cols, double value) {
  return Parameter(name, Matrix(rows, cols, value));
}

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

const char* to_string(EncoderBackend backend) {
  return backend == EncoderBackend::kToy ? "toy" : "pretrained";
}

EncoderBackend parse_backend(std::string_view text) {
  if (text == "toy") return EncoderBackend::kToy;
  if (text == "pretrained") return EncoderBackend::kPretrained;
  fail(ErrorCode::kConfig, "unknown encoder backend '" + std::string(text) + "'");
}

void EncoderConfig::validate() const {
  require(width > 0 && heads > 0 && width % heads == 0, ErrorCode::kConfig,
          "encoder width " + std::to_string(width) + " must be divisible by heads " + std::to_string(heads));
  require(layers > 0 && ffn_width > 0, ErrorCode::kConfig, "encoder needs at least one layer and a feed-forward width");
  require(max_length >= 2 && max_length <= max_positions, ErrorCode::kConfig,
          "sequence length " + std::to_string(max_length) + " exceeds position table of " +
              std::to_string(max_positions));
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kConfig, "dropout must be in [0, 1)");
  require(layer_norm_eps > 0.0, ErrorCode::kConfig, "layer norm epsilon must be positive");
  if (backend == EncoderBackend::kPretrained) {
    require(!pretrained_id.empty(), ErrorCode::kConfig, "pretrained backend needs pretrained_id");
  }
}

EncoderConfig pretrained_config(const std::filesystem::path& dir, std::size_t max_length) {
  std::ifstream in(dir / "config.json");
  require(in.good(), ErrorCode::kIo, "cannot open " + (dir / "config.json").string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::kParse, "config.json in " + dir.string() + " is not valid JSON");
  const std::string act = j.value("hidden_act", std::string("gelu"));
  require(act == "gelu", ErrorCode::kConfig, "only erf-GELU BERT encoders are supported, got " + act);

  EncoderConfig c;
  c.backend = EncoderBackend::kPretrained;
  c.pretrained_id = dir.string();
  c.width = j.at("hidden_size").get<std::size_t>();
  c.layers = j.at("num_hidden_layers").get<std::size_t>();
  c.heads = j.at("num_attention_heads").get<std::size_t>();
  c.ffn_width = j.at("intermediate_size").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_positions = j.value("max_position_embeddings", std::size_t{512});
  c.type_vocab_size = j.value("type_vocab_size", std::size_t{2});
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
  c.norm = NormPlacement::kPost;
  c.reapply_positions = true;
  c.max_length = max_length;
  return c;
}

std::unique_ptr<Tokenizer> make_tokenizer(const EncoderConfig& config) {
  if (config.backend == EncoderBackend::kToy) {
    return std::make_unique<ToyTokenizer>(config.vocab_size, derive_seed(config.seed, "vocabulary"),
                                          config.max_length);
  }
  return std::make_unique<WordPieceTokenizer>(std::filesystem::path(config.pretrained_id) / "vocab.txt",
                                              config.max_length);
}

Matrix pool_cls(const SequenceRepresentation& rep) {
  require(rep.hidden.rows() > 0, ErrorCode::kShapeMismatch, "empty representation");
  return Matrix::row_vector(rep.hidden.row(0));
}

ad::Var pool_cls(ad::Var hidden) { return ad::slice_rows(hidden, 0, 1); }

TransformerEncoder::TransformerEncoder(EncoderConfig config, std::string name)
    : config_(std::move(config)), name_(std::move(name)) {
  config_.validate();
  const std::size_t d = config_.width;
  const std::size_t ff = config_.ffn_width;
  const std::uint64_t seed = config_.seed;
  const std::string p = name_ + ".";

  token_embedding_ = uniform_param(p + "token_embedding", config_.vocab_size, d, 1.0, seed);
  position_embedding_ = uniform_param(p + "position_embedding", config_.max_positions, d, 1.0, seed);
  if (config_.type_vocab_size > 0) {
    type_embedding_ = uniform_param(p + "type_embedding", config_.type_vocab_size, d, 1.0, seed);
  }
  if (config_.norm == NormPlacement::kPost) {
    embed_ln_gamma_ = constant_param(p + "embedding_norm.gamma", 1, d, 1.0);
    embed_ln_beta_ = constant_param(p + "embedding_norm.beta", 1, d, 0.0);
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string q = p + "layer" + std::to_string(l) + ".";
    const double bd = fan_in_bound(d);
    const double bf = fan_in_bound(ff);
    Layer layer{
        uniform_param(q + "attention.query.weight", d, d, bd, seed),
        uniform_param(q + "attention.query.bias", 1, d, bd, seed),
        uniform_param(q + "attention.key.weight", d, d, bd, seed),
        uniform_param(q + "attention.key.bias", 1, d, bd, seed),
        uniform_param(q + "attention.value.weight", d, d, bd, seed),
        uniform_param(q + "attention.value.bias", 1, d, bd, seed),
        uniform_param(q + "attention.output.weight", d, d, bd, seed),
        uniform_param(q + "attention.output.bias", 1, d, bd, seed),
        constant_param(q + "attention_norm.gamma", 1, d, 1.0),
        constant_param(q + "attention_norm.beta", 1, d, 0.0),
        uniform_param(q + "ffn.in.weight", d, ff, bd, seed),
        uniform_param(q + "ffn.in.bias", 1, ff, bd, seed),
        uniform_param(q + "ffn.out.weight", ff, d, bf, seed),
        uniform_param(q + "ffn.out.bias", 1, d, bf, seed),
        constant_param(q + "ffn_norm.gamma", 1, d, 1.0),
        constant_param(q + "ffn_norm.beta", 1, d, 0.0),
    };
    layers_.push_back(std::move(layer));
  }
  if (config_.norm == NormPlacement::kPre) {
    final_ln_gamma_ = constant_param(p + "final_norm.gamma", 1, d, 1.0);
    final_ln_beta_ = constant_param(p + "final_norm.beta", 1, d, 0.0);
  }
}

std::vector<Parameter*> TransformerEncoder::parameters() {
  std::vector<Parameter*> out{&token_embedding_, &position_embedding_};
  if (config_.type_vocab_size > 0) out.push_back(&type_embedding_);
  if (config_.norm == NormPlacement::kPost) {
    out.push_back(&embed_ln_gamma_);
    out.push_back(&embed_ln_beta_);
  }
  for (Layer& l : layers_) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gamma, &l.ln1_beta,
                         &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gamma, &l.ln2_beta}) {
      out.push_back(p);
    }
  }
  if (config_.norm == NormPlacement::kPre) {
    out.push_back(&final_ln_gamma_);
    out.push_back(&final_ln_beta_);
  }
  return out;
}

std::vector<const Parameter*> TransformerEncoder::parameters() const {
  auto mutable_params = const_cast<TransformerEncoder*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ad::Var TransformerEncoder::embed(ad::Tape& tape, ad::Var token_states, std::size_t length, bool add_positions) {
  ad::Var x = token_states;
  if (add_positions) {
    x = ad::add(x, ad::slice_rows(tape.parameter(position_embedding_), 0, length));
  }
  if (config_.type_vocab_size > 0) {
    x = ad::add_row(x, ad::slice_rows(tape.parameter(type_embedding_), 0, 1));
  }
  if (config_.norm == NormPlacement::kPost) {
    x = ad::layer_norm(x, tape.parameter(embed_ln_gamma_), tape.parameter(embed_ln_beta_), config_.layer_norm_eps);
  }
  return ad::dropout(x, config_.dropout);
}

ad::Var TransformerEncoder::attention(ad::Tape& tape, Layer& layer, ad::Var x, std::span<const int> mask) {
  const std::size_t heads = config_.heads;
  const std::size_t dh = config_.width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Var q = ad::add_row(ad::matmul(x, tape.parameter(layer.wq)), tape.parameter(layer.bq));
  ad::Var k = ad::add_row(ad::matmul(x, tape.parameter(layer.wk)), tape.parameter(layer.bk));
  ad::Var v = ad::add_row(ad::matmul(x, tape.parameter(layer.wv)), tape.parameter(layer.bv));
  std::vector<ad::Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var scores = ad::scale(ad::matmul_transposed(qh, kh), inv_sqrt);
    ad::Var probs = ad::masked_softmax_rows(scores, mask);
    outputs.push_back(ad::matmul(probs, vh));
  }
  ad::Var merged = heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  ad::Var out = ad::add_row(ad::matmul(merged, tape.parameter(layer.wo)), tape.parameter(layer.bo));
  return ad::dropout(out, config_.dropout);
}

ad::Var TransformerEncoder::feed_forward(ad::Tape& tape, Layer& layer, ad::Var x) {
  ad::Var h = ad::gelu(ad::add_row(ad::matmul(x, tape.parameter(layer.w1)), tape.parameter(layer.b1)));
  ad::Var out = ad::add_row(ad::matmul(h, tape.parameter(layer.w2)), tape.parameter(layer.b2));
  return ad::dropout(out, config_.dropout);
}

ad::Var TransformerEncoder::run_layers(ad::Tape& tape, ad::Var x, std::span<const int> mask) {
  const double eps = config_.layer_norm_eps;
  for (Layer& layer : layers_) {
    if (config_.norm == NormPlacement::kPre) {
      ad::Var a = ad::layer_norm(x, tape.parameter(layer.ln1_gamma), tape.parameter(layer.ln1_beta), eps);
      x = ad::add(x, attention(tape, layer, a, mask));
      ad::Var f = ad::layer_norm(x, tape.parameter(layer.ln2_gamma), tape.parameter(layer.ln2_beta), eps);
      x = ad::add(x, feed_forward(tape, layer, f));
    } else {
      x = ad::layer_norm(ad::add(x, attention(tape, layer, x, mask)), tape.parameter(layer.ln1_gamma),
                         tape.parameter(layer.ln1_beta), eps);
      x = ad::layer_norm(ad::add(x, feed_forward(tape, layer, x)), tape.parameter(layer.ln2_gamma),
                         tape.parameter(layer.ln2_beta), eps);
    }
  }
  if (config_.norm == NormPlacement::kPre) {
    x = ad::layer_norm(x, tape.parameter(final_ln_gamma_), tape.parameter(final_ln_beta_), eps);
  }
  return x;
}

ad::Var TransformerEncoder::encode_tokens(ad::Tape& tape, const TokenizedPost& tokens) {
  require(tokens.input_ids.size() == tokens.attention_mask.size() && !tokens.input_ids.empty(),
          ErrorCode::kShapeMismatch, "token ids and mask differ in length");
  require(tokens.length() <= config_.max_positions, ErrorCode::kShapeMismatch,
          "sequence of " + std::to_string(tokens.length()) + " tokens exceeds position table");
  ad::Var x = ad::gather_rows(tape.parameter(token_embedding_), tokens.input_ids);
  x = embed(tape, x, tokens.length(), true);
  return run_layers(tape, x, tokens.attention_mask);
}

ad::Var TransformerEncoder::encode_embeddings(ad::Tape& tape, ad::Var embeddings, std::span<const int> mask) {
  require(embeddings.cols() == config_.width, ErrorCode::kShapeMismatch,
          name_ + ": injected embeddings have width " + std::to_string(embeddings.cols()) + ", encoder expects " +
              std::to_string(config_.width));
  require(embeddings.rows() == mask.size(), ErrorCode::kShapeMismatch,
          name_ + ": embedding rows do not match mask length");
  require(embeddings.rows() <= config_.max_positions, ErrorCode::kShapeMismatch,
          name_ + ": injected sequence exceeds position table");
  ad::Var x = embed(tape, embeddings, embeddings.rows(), config_.reapply_positions);
  return run_layers(tape, x, mask);
}

namespace {

SequenceRepresentation finish(ad::Var hidden, const std::string& name) {
  SequenceRepresentation rep;
  rep.hidden = hidden.value();
  require(all_finite(rep.hidden), ErrorCode::kNumerical, name + " produced non-finite hidden states");
  rep.pooled = pool_cls(rep);
  return rep;
}

}  // namespace

SequenceRepresentation TransformerEncoder::encode_tokens(const TokenizedPost& tokens, ad::Precision precision) {
  ad::Tape tape(false, precision);
  return finish(encode_tokens(tape, tokens), name_);
}

SequenceRepresentation TransformerEncoder::encode_embeddings(const Matrix& embeddings, std::span<const int> mask,
                                                             ad::Precision precision) {
  ad::Tape tape(false, precision);
  return finish(encode_embeddings(tape, tape.constant(embeddings), mask), name_);
}

void TransformerEncoder::load_pretrained(const std::filesystem::path& dir) {
  const auto tensors = read_safetensors(dir / "model.safetensors");
  const std::string prefix = tensors.contains("bert.embeddings.word_embeddings.weight") ? "bert." : "";

  auto find = [&](const std::string& key, const std::string& fallback = {}) -> const NamedTensor& {
    if (auto it = tensors.find(prefix + key); it != tensors.end()) return it->second;
    if (!fallback.empty()) {
      if (auto it = tensors.find(prefix + fallback); it != tensors.end()) return it->second;
    }
    fail(ErrorCode::kParse, "pretrained weights lack tensor " + prefix + key);
  };
  auto assign = [&](Parameter& dst, const NamedTensor& src, bool transpose) {
    Matrix value = src.data;
    if (transpose) {
      Matrix t(value.cols(), value.rows());
      for (std::size_t r = 0; r < value.rows(); ++r)
        for (std::size_t c = 0; c < value.cols(); ++c) t(c, r) = value(r, c);
      value = std::move(t);
    }
    require(value.same_shape(dst.value), ErrorCode::kShapeMismatch,
            "pretrained tensor for " + dst.name + " has shape [" + std::to_string(value.rows()) + "," +
                std::to_string(value.cols()) + "], expected [" + std::to_string(dst.value.rows()) + "," +
                std::to_string(dst.value.cols()) + "]");
    dst.value = std::move(value);
  };
  auto norm = [&](Parameter& gamma, Parameter& beta, const std::string& base) {
    assign(gamma, find(base + ".weight", base + ".gamma"), false);
    assign(beta, find(base + ".bias", base + ".beta"), false);
  };

  assign(token_embedding_, find("embeddings.word_embeddings.weight"), false);
  assign(position_embedding_, find("embeddings.position_embeddings.weight"), false);
  if (config_.type_vocab_size > 0) assign(type_embedding_, find("embeddings.token_type_embeddings.weight"), false);
  require(config_.norm == NormPlacement::kPost, ErrorCode::kConfig, "pretrained BERT weights need post-norm layout");
  norm(embed_ln_gamma_, embed_ln_beta_, "embeddings.LayerNorm");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    const std::string b = "encoder.layer." + std::to_string(l) + ".";
    assign(layer.wq, find(b + "attention.self.query.weight"), true);
    assign(layer.bq, find(b + "attention.self.query.bias"), false);
    assign(layer.wk, find(b + "attention.self.key.weight"), true);
    assign(layer.bk, find(b + "attention.self.key.bias"), false);
    assign(layer.wv, find(b + "attention.self.value.weight"), true);
    assign(layer.bv, find(b + "attention.self.value.bias"), false);
    assign(layer.wo, find(b + "attention.output.dense.weight"), true);
    assign(layer.bo, find(b + "attention.output.dense.bias"), false);
    norm(layer.ln1_gamma, layer.ln1_beta, b + "attention.output.LayerNorm");
    assign(layer.w1, find(b + "intermediate.dense.weight"), true);
    assign(layer.b1, find(b + "intermediate.dense.bias"), false);
    assign(layer.w2, find(b + "output.dense.weight"), true);
    assign(layer.b2, find(b + "output.dense.bias"), false);
    norm(layer.ln2_gamma, layer.ln2_beta, b + "output.LayerNorm");
  }
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace mtl
