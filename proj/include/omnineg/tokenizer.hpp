#pragma once

#include <map>
#include <string>
#include <vector>

#include "omnineg/negation_data.hpp"

namespace omnineg {

/// Whitespace word-id tokenizer over a closed vocabulary. Id 0 is the
/// end-of-text marker appended to every sequence; the encoder reads its state.
class Tokenizer {
 public:
  static constexpr const char* kEndOfText = "<eot>";

  explicit Tokenizer(std::vector<std::string> words);

  /// Grammar words of the caption templates, negation words, then the
  /// world's objects and scenes.
  static Tokenizer for_world(const WorldSpec& world);
  static const std::vector<std::string>& grammar_words();

  std::vector<int> encode(const Tokens& tokens) const;
  int id(const std::string& word) const;

  std::size_t vocab_size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

}  // namespace omnineg
