#include "mtl/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "mtl/error.hpp"
#include "mtl/random.hpp"

namespace mtl {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](char c) { return is_space(static_cast<unsigned char>(c)); });
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

bool utf8_boundary(std::string_view s, std::size_t pos) {
  return pos == 0 || pos >= s.size() || (static_cast<unsigned char>(s[pos]) & 0xC0) != 0x80;
}

}  // namespace

std::size_t TokenizedPost::real_tokens() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

void validate(const TokenizedPost& tokens, std::size_t expected_length, int start_id) {
  require(tokens.input_ids.size() == expected_length && tokens.attention_mask.size() == expected_length,
          ErrorCode::kShapeMismatch,
          "tokenized post has length " + std::to_string(tokens.input_ids.size()) + ", expected " +
              std::to_string(expected_length));
  require(expected_length > 0 && tokens.input_ids.front() == start_id && tokens.attention_mask.front() == 1,
          ErrorCode::kInvalidArgument, "tokenized post does not begin with the start marker");
  bool seen_pad = false;
  for (int m : tokens.attention_mask) {
    require(m == 0 || m == 1, ErrorCode::kInvalidArgument, "attention mask entries must be 0 or 1");
    if (m == 0) seen_pad = true;
    require(!(seen_pad && m == 1), ErrorCode::kInvalidArgument, "attention mask is not a prefix of ones");
  }
}

Tokenizer::Tokenizer(std::size_t max_length) : max_length_(max_length) {
  require(max_length >= 2, ErrorCode::kInvalidArgument, "sequence length must leave room for start/end markers");
}

TokenizedPost Tokenizer::tokenize(std::string_view text) const {
  require(!blank(text), ErrorCode::kInvalidArgument, "cannot tokenize empty text");
  std::vector<int> words = word_ids(text);
  const std::size_t body = std::min(words.size(), max_length_ - 2);

  TokenizedPost out;
  out.input_ids.assign(max_length_, pad_id());
  out.attention_mask.assign(max_length_, 0);
  out.input_ids[0] = start_id();
  std::copy_n(words.begin(), body, out.input_ids.begin() + 1);
  out.input_ids[body + 1] = end_id();
  std::fill_n(out.attention_mask.begin(), body + 2, 1);
  return out;
}

ToyTokenizer::ToyTokenizer(std::size_t vocab_size, std::uint64_t seed, std::size_t max_length)
    : Tokenizer(max_length), vocab_size_(vocab_size), seed_(seed) {
  require(vocab_size > static_cast<std::size_t>(kReserved), ErrorCode::kInvalidArgument,
          "toy vocabulary must be larger than the reserved ids");
}

int ToyTokenizer::word_id(std::string_view word) const {
  const std::uint64_t h = mix_seed(seed_, fnv1a(lower_ascii(word)));
  return kReserved + static_cast<int>(h % (vocab_size_ - kReserved));
}

std::vector<int> ToyTokenizer::word_ids(std::string_view text) const {
  std::vector<int> ids;
  for (std::string_view w : split_whitespace(text)) ids.push_back(word_id(w));
  return ids;
}

WordPieceTokenizer::WordPieceTokenizer(const std::filesystem::path& vocab_file, std::size_t max_length)
    : Tokenizer(max_length) {
  std::ifstream in(vocab_file);
  require(in.good(), ErrorCode::kIo, "cannot open vocabulary file " + vocab_file.string());
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab_.emplace(line, id++);
  }
  index_specials();
}

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, std::size_t max_length)
    : Tokenizer(max_length) {
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab_.emplace(std::move(vocab[i]), static_cast<int>(i));
  index_specials();
}

void WordPieceTokenizer::index_specials() {
  auto lookup = [this](const char* token) {
    auto it = vocab_.find(token);
    require(it != vocab_.end(), ErrorCode::kParse, std::string("vocabulary lacks ") + token);
    return it->second;
  };
  cls_ = lookup("[CLS]");
  sep_ = lookup("[SEP]");
  pad_ = lookup("[PAD]");
  unk_ = lookup("[UNK]");
}

std::vector<std::string> WordPieceTokenizer::basic_tokens(std::string_view text) const {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 && !is_space(u)) continue;  // control characters
    if (u == 0x7f) continue;
    cleaned.push_back(c);
  }
  std::vector<std::string> tokens;
  for (std::string_view word : split_whitespace(cleaned)) {
    std::string current;
    for (char c : lower_ascii(word)) {
      if (std::ispunct(static_cast<unsigned char>(c)) && static_cast<unsigned char>(c) < 0x80) {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
        tokens.emplace_back(1, c);
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
  }
  return tokens;
}

std::vector<int> WordPieceTokenizer::word_ids(std::string_view text) const {
  constexpr std::size_t kMaxWordBytes = 100;
  std::vector<int> ids;
  for (const std::string& word : basic_tokens(text)) {
    if (word.size() > kMaxWordBytes) {
      ids.push_back(unk_);
      continue;
    }
    std::vector<int> pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < word.size()) {
      std::size_t end = word.size();
      int found = -1;
      while (end > start) {
        if (utf8_boundary(word, end)) {
          std::string piece = word.substr(start, end - start);
          if (start > 0) piece.insert(0, "##");
          if (auto it = vocab_.find(piece); it != vocab_.end()) {
            found = it->second;
            break;
          }
        }
        --end;
      }
      if (found < 0) {
        bad = true;
        break;
      }
      pieces.push_back(found);
      start = end;
    }
    if (bad) {
      ids.push_back(unk_);
    } else {
      ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
  }
  return ids;
}

}  // namespace mtl
