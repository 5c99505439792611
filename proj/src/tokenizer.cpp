#include "omnineg/tokenizer.hpp"

namespace omnineg {

Tokenizer::Tokenizer(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.empty() || words_.front() != kEndOfText) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary must start with " + std::string(kEndOfText));
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

const std::vector<std::string>& Tokenizer::grammar_words() {
  static const std::vector<std::string> words = {
      "a",    "photo", "of", "in",   "the",    "at", "there", "is", "this",
      "with", "and",   "near", "beside", "on", "no", "not",   "without",
      "small", "large", "red", "white", "old", "wooden"};
  return words;
}

Tokenizer Tokenizer::for_world(const WorldSpec& world) {
  std::vector<std::string> words{kEndOfText};
  words.insert(words.end(), grammar_words().begin(), grammar_words().end());
  words.insert(words.end(), world.object_vocab.begin(), world.object_vocab.end());
  words.insert(words.end(), world.scene_vocab.begin(), world.scene_vocab.end());
  return Tokenizer(std::move(words));
}

int Tokenizer::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) throw Error(ErrorCode::UnknownWord, "'" + word + "' is not in the vocabulary");
  return it->second;
}

std::vector<int> Tokenizer::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& token : tokens) ids.push_back(id(token));
  ids.push_back(0);
  return ids;
}

}  // namespace omnineg
