#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace c3vg {

// Closed word list built from a training corpus. Ids 0 and 1 are reserved
// for padding and unknown words.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;

  Vocabulary();

  static Vocabulary from_corpus(std::span<const std::string> expressions);
  static Vocabulary from_words(std::span<const std::string> words);

  std::int64_t add(std::string_view word);
  std::int64_t id(std::string_view word) const;
  bool contains(std::string_view word) const { return index_.contains(std::string(word)); }
  const std::string& word(std::int64_t id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::int64_t size() const { return static_cast<std::int64_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int64_t> index_;
};

struct TokenizedText {
  std::vector<std::int64_t> ids;  // always max_len long
  std::vector<std::uint8_t> pad;  // 1 where ids holds padding
  int length = 0;                 // number of real tokens
};

// Lowercases and splits on anything that is not a letter or digit.
std::vector<std::string> split_words(std::string_view expression);

// Throws EmptyExpression when the expression has no words.
TokenizedText tokenize_text(std::string_view expression, const Vocabulary& vocab, int max_len);

}  // namespace c3vg
