#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mtl {

inline constexpr std::size_t kDefaultSequenceLength = 512;

// Token ids plus attention mask for one post, padded/truncated to a fixed length.
struct TokenizedPost {
  std::vector<int> input_ids;
  std::vector<int> attention_mask;  // 1 = real token, 0 = padding

  std::size_t length() const { return input_ids.size(); }
  std::size_t real_tokens() const;

  friend bool operator==(const TokenizedPost&, const TokenizedPost&) = default;
};

// Validates the fixed-length, prefix-mask and start-marker invariants.
void validate(const TokenizedPost& tokens, std::size_t expected_length, int start_id);

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  // Throws on text that is empty after whitespace trim.
  TokenizedPost tokenize(std::string_view text) const;

  virtual std::vector<int> word_ids(std::string_view text) const = 0;
  virtual int start_id() const = 0;
  virtual int end_id() const = 0;
  virtual int pad_id() const = 0;
  std::size_t max_length() const { return max_length_; }

 protected:
  explicit Tokenizer(std::size_t max_length);

 private:
  std::size_t max_length_;
};

// Whitespace tokenizer over a seeded hashed vocabulary. Ids 0..3 are reserved
// for pad, start, end and unknown; words hash into [4, vocab_size).
class ToyTokenizer final : public Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnknown = 3;
  static constexpr int kReserved = 4;

  ToyTokenizer(std::size_t vocab_size, std::uint64_t seed,
               std::size_t max_length = kDefaultSequenceLength);

  std::vector<int> word_ids(std::string_view text) const override;
  int word_id(std::string_view word) const;
  int start_id() const override { return kStart; }
  int end_id() const override { return kEnd; }
  int pad_id() const override { return kPad; }

 private:
  std::size_t vocab_size_;
  std::uint64_t seed_;
};

// Uncased WordPiece tokenizer reading a BERT-style vocab.txt.
class WordPieceTokenizer final : public Tokenizer {
 public:
  WordPieceTokenizer(const std::filesystem::path& vocab_file,
                     std::size_t max_length = kDefaultSequenceLength);
  WordPieceTokenizer(std::vector<std::string> vocab, std::size_t max_length);

  std::vector<int> word_ids(std::string_view text) const override;
  int start_id() const override { return cls_; }
  int end_id() const override { return sep_; }
  int pad_id() const override { return pad_; }
  std::size_t vocab_size() const { return vocab_.size(); }

 private:
  void index_specials();
  std::vector<std::string> basic_tokens(std::string_view text) const;

  std::unordered_map<std::string, int> vocab_;
  int cls_ = 0, sep_ = 0, pad_ = 0, unk_ = 0;
};

}  // namespace mtl
