#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace numcast::text {

using Tokens = std::vector<std::string>;

/// Lower-cased whitespace/punctuation tokenizer. Currency symbols, '%',
/// trailing punctuation and magnitude suffixes glued to digits ("205m") are
/// split into separate tokens: "$205m," → {"$", "205", "m", ","}.
Tokens tokenize(std::string_view sentence);

/// True for plain numeric literals: digits with optional thousands commas and
/// a decimal part.
bool is_numeric_literal(std::string_view token);
bool is_magnitude_suffix(std::string_view token);

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnknownToken = "[UNK]";
inline constexpr std::string_view kEosToken = "[EOS]";
inline constexpr std::string_view kMaskToken = "[MASK]";

class Vocabulary {
 public:
  /// Only the reserved tokens.
  Vocabulary();

  /// Reserved tokens followed by corpus tokens seen at least `min_count`
  /// times, in first-seen order.
  static Vocabulary build(const std::vector<Tokens>& sentences,
                          std::size_t min_count = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  /// Out-of-vocabulary tokens map to the unknown id.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::size_t pad_id() const { return 0; }
  std::size_t unknown_id() const { return 1; }
  std::size_t eos_id() const { return 2; }
  std::size_t mask_id() const { return 3; }

  /// Token ids with a trailing end-of-sentence id; the sentence body is
  /// truncated so the result has at most `max_length` ids.
  std::vector<std::size_t> encode(const Tokens& tokens, std::size_t max_length) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace numcast::text
