#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "mtl/models.hpp"
#include "mtl/training.hpp"

namespace {

using namespace mtl;

EncoderConfig toy_encoder(std::size_t width, std::size_t length) {
  EncoderConfig c;
  c.width = width;
  c.layers = 1;
  c.heads = 2;
  c.ffn_width = 2 * width;
  c.vocab_size = 256;
  c.max_length = length;
  c.max_positions = length;
  c.seed = 1;
  return c;
}

const std::string kPost = "i have not slept properly in weeks and everything at work feels like too much lately";

void BM_EncoderForward(benchmark::State& state) {
  const auto c = toy_encoder(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  TransformerEncoder enc(c, "enc");
  const auto tokens = make_tokenizer(c)->tokenize(kPost);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode_tokens(tokens).pooled);
}
BENCHMARK(BM_EncoderForward)->Args({8, 16})->Args({32, 64})->Args({64, 128});

void BM_FusionGate(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  FusionGate gate(d, "gate", 3);
  Rng rng(4);
  Matrix a(1, d), b(1, d);
  for (auto& v : a.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : b.values()) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(attention_fusion(a, b, gate));
}
BENCHMARK(BM_FusionGate)->Arg(8)->Arg(768);

void BM_JointStep(benchmark::State& state) {
  ModelSpec spec;
  spec.family = state.range(0) == 0 ? ModelFamily::kDoubleEncoders : ModelFamily::kAttentionFusion;
  spec.encoder = toy_encoder(8, 16);
  spec.seed = 2;
  ModelGraph model(spec);
  auto tokenizer = make_tokenizer(spec.encoder);
  TaskBatchPair<Example> pair;
  for (int i = 0; i < 4; ++i) {
    pair.depression.push_back({"d" + std::to_string(i), tokenizer->tokenize(kPost), i % 2});
    pair.stress.push_back({"s" + std::to_string(i), tokenizer->tokenize(kPost), 1 - i % 2});
  }
  TrainConfig config;
  config.beta = 0.1;
  MultitaskTrainer trainer(model, config);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(pair, 0).total);
  state.SetLabel(display_name(spec.family));
}
BENCHMARK(BM_JointStep)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace
