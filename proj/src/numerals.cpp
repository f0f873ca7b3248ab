#include "numcast/numerals.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string_view>
#include <unordered_set>

#include <json.hpp>

#include "numcast/errors.hpp"

namespace numcast::numerals {

namespace {

const std::unordered_set<std::string_view> kMonetaryTriggers = {
    "$", "usd", "dollar", "dollars", "cents", "cent"};
const std::unordered_set<std::string_view> kPercentTriggers = {
    "%", "percent", "percentage", "bps"};
const std::unordered_set<std::string_view> kTemporalTriggers = {
    "year",    "years",   "quarter",  "quarters", "q1",        "q2",
    "q3",      "q4",      "fiscal",   "fy",       "january",   "february",
    "march",   "april",   "may",      "june",     "july",      "august",
    "september", "october", "november", "december"};

double suffix_multiplier(std::string_view s) {
  if (s == "k") return 1e3;
  if (s == "m" || s == "mm") return 1e6;
  return 1e9;  // bn, b
}

double parse_literal(const std::string& literal) {
  std::string digits;
  digits.reserve(literal.size());
  for (char c : literal) {
    if (c != ',') digits.push_back(c);
  }
  return std::stod(digits);
}

bool is_year_literal(const std::string& literal) {
  if (literal.size() != 4) return false;
  if (!std::all_of(literal.begin(), literal.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  const int v = std::stoi(literal);
  return v >= 1900 && v <= 2100;
}

}  // namespace

std::string category_name(Category c) {
  switch (c) {
    case Category::kMonetary: return "monetary";
    case Category::kTemporal: return "temporal";
    case Category::kPercentage: return "percentage";
    case Category::kOther: return "other";
  }
  return "?";
}

Category parse_category(const std::string& name) {
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const auto c = static_cast<Category>(i);
    if (category_name(c) == name) return c;
  }
  throw ValidationError("unknown numeral category '" + name + "'");
}

Category NumeralSpan::primary() const {
  for (Category c : {Category::kMonetary, Category::kPercentage, Category::kTemporal}) {
    if (has(c)) return c;
  }
  return Category::kOther;
}

std::vector<NumeralSpan> detect_numerals(const text::Tokens& tokens) {
  std::vector<NumeralSpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (!text::is_numeric_literal(tokens[i])) {
      ++i;
      continue;
    }
    NumeralSpan span;
    const std::size_t literal = i;
    span.start = (i > 0 && tokens[i - 1] == "$" &&
                  (spans.empty() || spans.back().end <= i - 1))
                     ? i - 1
                     : i;
    span.end = i + 1;
    double value = parse_literal(tokens[literal]);
    bool has_suffix = false, has_percent = false;
    if (span.end < tokens.size() && text::is_magnitude_suffix(tokens[span.end])) {
      value *= suffix_multiplier(tokens[span.end]);
      has_suffix = true;
      ++span.end;
    }
    if (span.end < tokens.size() && tokens[span.end] == "%") {
      has_percent = true;
      ++span.end;
    }
    const bool has_currency = span.start < literal;
    span.value = value;
    for (std::size_t t = span.start; t < span.end; ++t) span.surface += tokens[t];

    const std::string_view before =
        span.start > 0 ? std::string_view(tokens[span.start - 1]) : std::string_view();
    const std::string_view after =
        span.end < tokens.size() ? std::string_view(tokens[span.end]) : std::string_view();
    auto adjacent = [&](const std::unordered_set<std::string_view>& triggers) {
      return triggers.contains(before) || triggers.contains(after);
    };

    if (has_currency || adjacent(kMonetaryTriggers)) {
      span.categories.set(static_cast<std::size_t>(Category::kMonetary));
    }
    if (has_percent || adjacent(kPercentTriggers)) {
      span.categories.set(static_cast<std::size_t>(Category::kPercentage));
    }
    const bool bare = !has_currency && !has_suffix && !has_percent;
    if ((bare && is_year_literal(tokens[literal])) || adjacent(kTemporalTriggers)) {
      span.categories.set(static_cast<std::size_t>(Category::kTemporal));
    }
    if (span.categories.none()) span.categories.set(static_cast<std::size_t>(Category::kOther));

    i = span.end;
    spans.push_back(std::move(span));
  }
  return spans;
}

int magnitude_bucket(double value) {
  const double a = std::abs(value);
  if (a == 0.0) return 0;
  return static_cast<int>(std::floor(std::log10(a)));
}

std::vector<NccInstance> make_ncc_instances(const std::vector<text::Tokens>& sentences) {
  std::vector<NccInstance> out;
  for (const text::Tokens& tokens : sentences) {
    for (const NumeralSpan& span : detect_numerals(tokens)) {
      NccInstance inst;
      inst.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(span.start));
      inst.mask_index = inst.tokens.size();
      inst.tokens.emplace_back(text::kMaskToken);
      inst.tokens.insert(inst.tokens.end(),
                         tokens.begin() + static_cast<std::ptrdiff_t>(span.end), tokens.end());
      inst.labels = span.categories;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::array<int, kListSize> one_hot_max(const std::array<double, kListSize>& values) {
  std::array<int, kListSize> label{};
  label[argmax_lowest(values)] = 1;
  return label;
}

MagnitudeDraw make_magnitude_instances(const std::vector<text::Tokens>& sentences,
                                       std::uint64_t seed, std::size_t rounds) {
  struct Entry {
    double value;
    text::Tokens tokens;
  };
  std::map<std::pair<int, int>, std::vector<Entry>> pools;
  for (const text::Tokens& tokens : sentences) {
    for (const NumeralSpan& span : detect_numerals(tokens)) {
      const auto key = std::make_pair(static_cast<int>(span.primary()), magnitude_bucket(span.value));
      pools[key].push_back({span.value, text::Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                                                     tokens.begin() + static_cast<std::ptrdiff_t>(span.end))});
    }
  }
  MagnitudeDraw draw;
  std::mt19937_64 rng(seed);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (auto& [key, pool] : pools) {
      if (pool.size() < kListSize) continue;
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t at = 0; at + kListSize <= order.size(); at += kListSize) {
        MagnitudeInstance inst;
        inst.category = static_cast<Category>(key.first);
        inst.bucket = key.second;
        for (std::size_t j = 0; j < kListSize; ++j) {
          inst.values[j] = pool[order[at + j]].value;
          inst.tokens[j] = pool[order[at + j]].tokens;
        }
        inst.label = one_hot_max(inst.values);
        draw.instances.push_back(std::move(inst));
      }
    }
  }
  if (draw.instances.empty()) {
    draw.warnings.push_back(
        "no category/magnitude pool holds five numerals; no magnitude instances drawn");
  }
  return draw;
}

void write_ncc_instances(std::ostream& out, const std::vector<NccInstance>& instances) {
  for (const NccInstance& inst : instances) {
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      if (inst.labels.test(c)) labels.push_back(category_name(static_cast<Category>(c)));
    }
    out << nlohmann::json{{"tokens", inst.tokens}, {"mask", inst.mask_index}, {"labels", labels}}.dump()
        << '\n';
  }
}

std::vector<NccInstance> read_ncc_instances(std::istream& in) {
  std::vector<NccInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NccInstance inst;
      inst.tokens = j.at("tokens").get<text::Tokens>();
      inst.mask_index = j.at("mask").get<std::size_t>();
      for (const auto& name : j.at("labels")) {
        inst.labels.set(static_cast<std::size_t>(parse_category(name.get<std::string>())));
      }
      if (inst.mask_index >= inst.tokens.size() || inst.tokens[inst.mask_index] != text::kMaskToken) {
        throw ValidationError("mask index does not point at the mask token");
      }
      out.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("ncc line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_magnitude_instances(std::ostream& out,
                               const std::vector<MagnitudeInstance>& instances) {
  for (const MagnitudeInstance& inst : instances) {
    out << nlohmann::json{{"values", inst.values},
                          {"tokens", inst.tokens},
                          {"category", category_name(inst.category)},
                          {"bucket", inst.bucket},
                          {"label", inst.label}}
               .dump()
        << '\n';
  }
}

std::vector<MagnitudeInstance> read_magnitude_instances(std::istream& in) {
  std::vector<MagnitudeInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MagnitudeInstance inst;
      inst.values = j.at("values").get<std::array<double, kListSize>>();
      inst.tokens = j.at("tokens").get<std::array<text::Tokens, kListSize>>();
      inst.category = parse_category(j.at("category").get<std::string>());
      inst.bucket = j.at("bucket").get<int>();
      inst.label = j.at("label").get<std::array<int, kListSize>>();
      if (inst.label != one_hot_max(inst.values)) {
        throw ValidationError("label is not the one-hot maximum of values");
      }
      out.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("magnitude line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace numcast::numerals
