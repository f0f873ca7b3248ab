#include "numcast/text.hpp"

#include <algorithm>
#include <cctype>

#include "numcast/errors.hpp"

namespace numcast::text {

namespace {

constexpr std::string_view kLeadingSplit = "$(\"'";
constexpr std::string_view kTrailingSplit = ",.;:!?)\"'%";

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool keep_punct(char c) { return c != '"' && c != '\''; }

}  // namespace

bool is_numeric_literal(std::string_view token) {
  if (token.empty() || !is_digit(token.front())) return false;
  std::size_t i = 0;
  const std::size_t n = token.size();
  std::size_t group = 0;
  bool saw_comma = false;
  while (i < n && (is_digit(token[i]) || token[i] == ',')) {
    if (token[i] == ',') {
      if (group == 0 || (saw_comma && group != 3) || (!saw_comma && group > 3)) return false;
      saw_comma = true;
      group = 0;
    } else {
      ++group;
    }
    ++i;
  }
  if (saw_comma && group != 3) return false;
  if (i == n) return true;
  if (token[i] != '.') return false;
  ++i;
  if (i == n) return false;
  while (i < n && is_digit(token[i])) ++i;
  return i == n;
}

bool is_magnitude_suffix(std::string_view token) {
  return token == "k" || token == "m" || token == "mm" || token == "bn" || token == "b";
}

Tokens tokenize(std::string_view sentence) {
  Tokens out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && std::isspace(static_cast<unsigned char>(sentence[i]))) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !std::isspace(static_cast<unsigned char>(sentence[j]))) ++j;
    if (j == i) break;
    std::string word = lower(sentence.substr(i, j - i));
    i = j;

    std::size_t begin = 0, end = word.size();
    while (begin < end && kLeadingSplit.find(word[begin]) != std::string_view::npos) {
      if (keep_punct(word[begin])) out.emplace_back(1, word[begin]);
      ++begin;
    }
    Tokens trailing;
    while (end > begin && kTrailingSplit.find(word[end - 1]) != std::string_view::npos) {
      if (keep_punct(word[end - 1])) trailing.emplace_back(1, word[end - 1]);
      --end;
    }
    if (end > begin) {
      std::string core = word.substr(begin, end - begin);
      // Split "205m" / "1.5bn" into literal and suffix.
      std::size_t cut = core.size();
      while (cut > 0 && std::isalpha(static_cast<unsigned char>(core[cut - 1]))) --cut;
      if (cut > 0 && cut < core.size() && is_numeric_literal(core.substr(0, cut)) &&
          is_magnitude_suffix(core.substr(cut))) {
        out.push_back(core.substr(0, cut));
        out.push_back(core.substr(cut));
      } else {
        out.push_back(std::move(core));
      }
    }
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (std::string_view t : {kPadToken, kUnknownToken, kEosToken, kMaskToken}) {
    add(std::string(t));
  }
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& sentences, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const Tokens& s : sentences) {
    for (const std::string& t : s) {
      if (counts[t]++ == 0) order.push_back(t);
    }
  }
  Vocabulary v;
  for (const std::string& t : order) {
    if (counts[t] >= min_count) v.add(t);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  const std::size_t reserved = v.size();
  if (tokens.size() < reserved) throw ValidationError("vocabulary lacks reserved tokens");
  for (std::size_t i = 0; i < reserved; ++i) {
    if (tokens[i] != v.tokens_[i]) {
      throw ValidationError("vocabulary reserved token mismatch at " + std::to_string(i));
    }
  }
  for (std::size_t i = reserved; i < tokens.size(); ++i) v.add(tokens[i]);
  if (v.size() != tokens.size()) throw ValidationError("vocabulary has duplicate tokens");
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unknown_id() : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const Tokens& tokens,
                                            std::size_t max_length) const {
  if (max_length == 0) throw ConfigError("encode: max_length must be positive");
  const std::size_t body = std::min(tokens.size(), max_length - 1);
  std::vector<std::size_t> ids;
  ids.reserve(body + 1);
  for (std::size_t i = 0; i < body; ++i) ids.push_back(id(tokens[i]));
  ids.push_back(eos_id());
  return ids;
}

}  // namespace numcast::text
