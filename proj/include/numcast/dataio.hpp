#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "numcast/trading.hpp"

namespace numcast::data {

inline constexpr std::array<std::size_t, 4> kHorizons{3, 7, 15, 30};
inline constexpr std::size_t kMaxHorizon = 30;
inline constexpr std::size_t kAudioDims = 27;
inline constexpr int kCorpusVersion = 1;
inline constexpr const char* kCorpusSchema = "numcast-corpus";

/// Index of a horizon in kHorizons; throws ConfigError for other values.
std::size_t horizon_index(std::size_t horizon);

struct Sentence {
  std::string text;
  std::vector<double> audio;  // kAudioDims features
};

struct CallRecord {
  std::string id;
  std::string ticker;
  std::string date;  // YYYY-MM-DD
  std::size_t pre_event_days = 0;
  std::vector<Sentence> sentences;
  /// Adjusted closes; prices[pre_event_days] is the event day.
  std::vector<double> prices;

  /// Close at a trading-day offset from the event day.
  double price_at(std::ptrdiff_t offset) const;
  /// Event-day close followed by the closes of the next `days` trading days.
  std::vector<double> post_event(std::size_t days) const;
};

struct Rejection {
  std::size_t line = 0;
  std::string id;
  std::string reason;
};

struct LoadResult {
  std::vector<CallRecord> records;  // sorted by date, then id
  std::vector<Rejection> rejected;
};

// Corpus file: one JSON object per line. The first line is a header
//   {"schema": "numcast-corpus", "version": 1, "calls": N}
// and each following line is a call record
//   {"id", "ticker", "date", "pre_event_days", "sentences": [{"text", "audio"}], "prices"}.
// Structural errors (bad JSON, missing or mistyped fields, wrong schema
// version) throw ValidationError naming the line and field. Records that
// parse but break a content rule (audio width, price coverage, non-positive
// prices, no sentences) are dropped and listed in `rejected`.
LoadResult read_corpus(std::istream& in);
LoadResult load_corpus(const std::string& path);
void write_corpus(std::ostream& out, const std::vector<CallRecord>& records);
void save_corpus(const std::string& path, const std::vector<CallRecord>& records);

/// Empty string when the record satisfies every content rule.
std::string check_record(const CallRecord& record);

void sort_chronologically(std::vector<CallRecord>& records);

struct Split {
  std::vector<CallRecord> train;
  std::vector<CallRecord> valid;
  std::vector<CallRecord> test;
};

/// Sorts by (date, id), then cuts at floor(0.7·n) and floor(0.8·n).
Split split_chronological(std::vector<CallRecord> records);

struct Labels {
  std::array<double, kHorizons.size()> ret{};         // p_n / p_0 − 1
  std::array<double, kHorizons.size()> volatility{};  // log volatility over days 1..n
  std::array<int, kHorizons.size()> rise{};           // ret > 0
};

Labels compute_labels(const CallRecord& record);

trading::MarketEvent market_event(const CallRecord& record);

struct EffectSizes {
  double text = 1.0;
  double numeral = 1.0;
  double audio = 1.0;
};

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t calls = 200;
  EffectSizes effects;
  std::size_t min_sentences = 6;
  std::size_t max_sentences = 12;
  std::size_t pre_event_days = 5;
};

/// Planted-signal corpus. Each call draws a tone latent (sets the mix of
/// positive and negative template sentences), a growth percentage quoted in
/// growth sentences, an audio latent shifting audio feature 0 and a
/// volatility latent shifting audio feature 1. The post-event daily drift is
/// 0.006·(e_text·tone + e_numeral·(growth − 15)/10 + e_audio·audio), the
/// daily noise 0.01·exp(0.3·volatility latent). Calls are generated from
/// independent per-call random streams.
std::vector<CallRecord> generate_synthetic(const SyntheticConfig& config);

/// The realized planted features of a generated record (tone, growth term,
/// audio latent estimate) recovered from its text and audio. Used by the
/// oracle probe in tests and by `gen-data` summaries.
std::array<double, 3> planted_features(const CallRecord& record);

}  // namespace numcast::data
