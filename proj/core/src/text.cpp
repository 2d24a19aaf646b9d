#include "c3vg/text.hpp"

#include <cctype>

#include "c3vg/errors.hpp"

namespace c3vg {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary Vocabulary::from_corpus(std::span<const std::string> expressions) {
  Vocabulary vocab;
  for (const auto& e : expressions) {
    for (const auto& w : split_words(e)) vocab.add(w);
  }
  return vocab;
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  Vocabulary vocab;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i < 2) continue;  // reserved slots
    vocab.add(words[i]);
  }
  return vocab;
}

std::int64_t Vocabulary::add(std::string_view word) {
  std::string key(word);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<std::int64_t>(words_.size());
  words_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::int64_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> split_words(std::string_view expression) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : expression) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

TokenizedText tokenize_text(std::string_view expression, const Vocabulary& vocab, int max_len) {
  const auto words = split_words(expression);
  if (words.empty()) throw EmptyExpression();
  TokenizedText out;
  out.ids.assign(static_cast<std::size_t>(max_len), Vocabulary::kPad);
  out.pad.assign(static_cast<std::size_t>(max_len), 1);
  out.length = std::min<int>(max_len, static_cast<int>(words.size()));
  for (int i = 0; i < out.length; ++i) {
    out.ids[i] = vocab.id(words[i]);
    out.pad[i] = 0;
  }
  return out;
}

}  // namespace c3vg
