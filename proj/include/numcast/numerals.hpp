#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "numcast/text.hpp"

namespace numcast::numerals {

enum class Category : std::uint8_t { kMonetary = 0, kTemporal = 1, kPercentage = 2, kOther = 3 };
inline constexpr std::size_t kCategoryCount = 4;

using CategorySet = std::bitset<kCategoryCount>;

std::string category_name(Category c);
Category parse_category(const std::string& name);

struct NumeralSpan {
  std::string surface;      // span tokens joined, e.g. "$205m"
  double value = 0.0;       // suffix-normalized; percents and years verbatim
  std::size_t start = 0;    // first token index
  std::size_t end = 0;      // one past the last token index
  CategorySet categories;   // never empty

  bool has(Category c) const { return categories.test(static_cast<std::size_t>(c)); }
  /// Single category used for magnitude lists: monetary, percentage,
  /// temporal, other in that order of precedence.
  Category primary() const;
};

/// Finds every maximal numeric literal (optional leading '$', optional
/// magnitude suffix, optional '%') and assigns categories from the trigger
/// rule table. Spans never overlap and appear in token order.
std::vector<NumeralSpan> detect_numerals(const text::Tokens& tokens);

/// Power-of-ten bucket floor(log10|v|); 0 maps to bucket 0.
int magnitude_bucket(double value);

struct NccInstance {
  text::Tokens tokens;       // the span replaced by a single mask token
  std::size_t mask_index = 0;
  CategorySet labels;
};

/// One instance per detected numeral.
std::vector<NccInstance> make_ncc_instances(const std::vector<text::Tokens>& sentences);

inline constexpr std::size_t kListSize = 5;

struct MagnitudeInstance {
  std::array<double, kListSize> values{};
  std::array<text::Tokens, kListSize> tokens;  // surface tokens of each numeral
  Category category = Category::kOther;
  int bucket = 0;
  std::array<int, kListSize> label{};  // one-hot index of the maximum
};

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);
std::array<int, kListSize> one_hot_max(const std::array<double, kListSize>& values);

struct MagnitudeDraw {
  std::vector<MagnitudeInstance> instances;
  std::vector<std::string> warnings;
};

/// Pools numerals by (primary category, magnitude bucket), shuffles each pool
/// and cuts it into consecutive lists of five, so a numeral is used at most
/// once per round. `rounds` repeats this with fresh shuffles.
MagnitudeDraw make_magnitude_instances(const std::vector<text::Tokens>& sentences,
                                       std::uint64_t seed, std::size_t rounds = 1);

// Line-delimited JSON records, one instance per line.
void write_ncc_instances(std::ostream& out, const std::vector<NccInstance>& instances);
std::vector<NccInstance> read_ncc_instances(std::istream& in);
void write_magnitude_instances(std::ostream& out,
                               const std::vector<MagnitudeInstance>& instances);
std::vector<MagnitudeInstance> read_magnitude_instances(std::istream& in);

}  // namespace numcast::numerals
