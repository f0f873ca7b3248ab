#include "numcast/dataio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include <json.hpp>

#include "numcast/errors.hpp"
#include "numcast/metrics.hpp"

namespace numcast::data {

using nlohmann::json;

std::size_t horizon_index(std::size_t horizon) {
  for (std::size_t i = 0; i < kHorizons.size(); ++i) {
    if (kHorizons[i] == horizon) return i;
  }
  throw ConfigError("horizon " + std::to_string(horizon) + " is not one of 3, 7, 15, 30");
}

double CallRecord::price_at(std::ptrdiff_t offset) const {
  const std::ptrdiff_t index = static_cast<std::ptrdiff_t>(pre_event_days) + offset;
  if (index < 0 || index >= static_cast<std::ptrdiff_t>(prices.size())) {
    throw ContractError("call " + id + ": no price at offset " + std::to_string(offset));
  }
  return prices[static_cast<std::size_t>(index)];
}

std::vector<double> CallRecord::post_event(std::size_t days) const {
  if (pre_event_days + days >= prices.size()) {
    throw ContractError("call " + id + ": price series ends before day " + std::to_string(days));
  }
  return {prices.begin() + static_cast<std::ptrdiff_t>(pre_event_days),
          prices.begin() + static_cast<std::ptrdiff_t>(pre_event_days + days + 1)};
}

namespace {

bool valid_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{std::stoi(s.substr(0, 4))},
                           month{static_cast<unsigned>(std::stoi(s.substr(5, 2)))},
                           day{static_cast<unsigned>(std::stoi(s.substr(8, 2)))}};
  return ymd.ok();
}

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  if (!j.contains(name)) {
    throw ValidationError("corpus line " + std::to_string(line) + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("corpus line " + std::to_string(line) + ": field '" + name +
                          "' has the wrong type");
  }
}

CallRecord parse_record(const json& j, std::size_t line) {
  if (!j.is_object()) throw ValidationError("corpus line " + std::to_string(line) + ": not an object");
  CallRecord r;
  r.id = field<std::string>(j, "id", line);
  r.ticker = field<std::string>(j, "ticker", line);
  r.date = field<std::string>(j, "date", line);
  r.pre_event_days = field<std::size_t>(j, "pre_event_days", line);
  r.prices = field<std::vector<double>>(j, "prices", line);
  const json sentences = field<json>(j, "sentences", line);
  if (!sentences.is_array()) {
    throw ValidationError("corpus line " + std::to_string(line) + ": field 'sentences' is not a list");
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const json& s = sentences[i];
    const std::string where = "sentences[" + std::to_string(i) + "]";
    if (!s.is_object() || !s.contains("text") || !s.contains("audio") || !s["text"].is_string() ||
        !s["audio"].is_array()) {
      throw ValidationError("corpus line " + std::to_string(line) + ": field '" + where +
                            "' needs a 'text' string and an 'audio' list");
    }
    Sentence sent;
    sent.text = s["text"].get<std::string>();
    try {
      sent.audio = s["audio"].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ValidationError("corpus line " + std::to_string(line) + ": field '" + where +
                            ".audio' must hold numbers");
    }
    r.sentences.push_back(std::move(sent));
  }
  if (!valid_date(r.date)) {
    throw ValidationError("corpus line " + std::to_string(line) + ": field 'date' is not YYYY-MM-DD");
  }
  return r;
}

json record_json(const CallRecord& r) {
  json sentences = json::array();
  for (const Sentence& s : r.sentences) sentences.push_back({{"text", s.text}, {"audio", s.audio}});
  return {{"id", r.id},
          {"ticker", r.ticker},
          {"date", r.date},
          {"pre_event_days", r.pre_event_days},
          {"sentences", std::move(sentences)},
          {"prices", r.prices}};
}

}  // namespace

std::string check_record(const CallRecord& r) {
  if (r.sentences.empty()) return "no sentences";
  for (std::size_t i = 0; i < r.sentences.size(); ++i) {
    const auto& a = r.sentences[i].audio;
    if (a.size() != kAudioDims) {
      return "sentence " + std::to_string(i) + " has " + std::to_string(a.size()) +
             " audio features, expected " + std::to_string(kAudioDims);
    }
    if (!std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); })) {
      return "sentence " + std::to_string(i) + " has a non-finite audio feature";
    }
  }
  if (r.prices.size() < r.pre_event_days + kMaxHorizon + 1) {
    return "price series covers " + std::to_string(r.prices.size()) + " days, needs " +
           std::to_string(r.pre_event_days + kMaxHorizon + 1) + " (through day " +
           std::to_string(kMaxHorizon) + ")";
  }
  for (std::size_t i = 0; i < r.prices.size(); ++i) {
    if (!(r.prices[i] > 0.0) || !std::isfinite(r.prices[i])) {
      return "price " + std::to_string(i) + " is not a positive number";
    }
  }
  return {};
}

void sort_chronologically(std::vector<CallRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const CallRecord& a, const CallRecord& b) {
    return a.date != b.date ? a.date < b.date : a.id < b.id;
  });
}

LoadResult read_corpus(std::istream& in) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::size_t declared = 0, seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": malformed JSON (" +
                            e.what() + ")");
    }
    if (!header) {
      if (!j.is_object() || j.value("schema", "") != kCorpusSchema) {
        throw ValidationError("corpus line 1: missing '" + std::string(kCorpusSchema) + "' header");
      }
      const int version = field<int>(j, "version", line_no);
      if (version != kCorpusVersion) {
        throw ValidationError("corpus schema version " + std::to_string(version) +
                              " is not supported (expected " + std::to_string(kCorpusVersion) + ")");
      }
      declared = field<std::size_t>(j, "calls", line_no);
      header = true;
      continue;
    }
    ++seen;
    CallRecord r = parse_record(j, line_no);
    std::string problem = check_record(r);
    if (!problem.empty()) {
      result.rejected.push_back({line_no, r.id, std::move(problem)});
      continue;
    }
    result.records.push_back(std::move(r));
  }
  if (header && seen != declared) {
    throw ValidationError("corpus header declares " + std::to_string(declared) + " calls, file has " +
                          std::to_string(seen));
  }
  sort_chronologically(result.records);
  return result;
}

LoadResult load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<CallRecord>& records) {
  out << json{{"schema", kCorpusSchema}, {"version", kCorpusVersion}, {"calls", records.size()}}.dump()
      << '\n';
  for (const CallRecord& r : records) out << record_json(r).dump() << '\n';
  if (!out) throw IoError("failed writing corpus");
}

void save_corpus(const std::string& path, const std::vector<CallRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_corpus(out, records);
}

Split split_chronological(std::vector<CallRecord> records) {
  const std::size_t n = records.size();
  if (n < 10) {
    throw ConfigError("a 7:1:2 split needs at least 10 calls, got " + std::to_string(n));
  }
  sort_chronologically(records);
  const std::size_t train_end = n * 7 / 10;
  const std::size_t valid_end = n * 8 / 10;
  Split s;
  auto begin = std::make_move_iterator(records.begin());
  s.train.assign(begin, begin + static_cast<std::ptrdiff_t>(train_end));
  s.valid.assign(begin + static_cast<std::ptrdiff_t>(train_end),
                 begin + static_cast<std::ptrdiff_t>(valid_end));
  s.test.assign(begin + static_cast<std::ptrdiff_t>(valid_end), std::make_move_iterator(records.end()));
  return s;
}

Labels compute_labels(const CallRecord& record) {
  const metrics::PriceWindow window{record.post_event(kMaxHorizon)};
  Labels l;
  for (std::size_t i = 0; i < kHorizons.size(); ++i) {
    l.ret[i] = metrics::n_day_return(window, kHorizons[i]);
    l.volatility[i] = metrics::volatility(window, kHorizons[i]);
    l.rise[i] = l.ret[i] > 0.0 ? 1 : 0;
  }
  return l;
}

trading::MarketEvent market_event(const CallRecord& record) {
  trading::MarketEvent e;
  e.id = record.id;
  e.ticker = record.ticker;
  e.closes.assign(record.prices.begin() + static_cast<std::ptrdiff_t>(
                                              std::min(record.pre_event_days, record.prices.size())),
                  record.prices.end());
  return e;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kPositive = {
    "we delivered strong results this quarter",
    "demand remained robust across all segments",
    "margins improved meaningfully",
    "we are very confident about the outlook",
    "customers responded well to our new products",
    "our pipeline has never been healthier"};
const std::vector<std::string> kNegative = {
    "we faced weak demand this quarter",
    "margins declined because of higher costs",
    "we remain cautious about the outlook",
    "results were disappointing in several regions",
    "headwinds persisted across our markets",
    "order intake slowed considerably"};
const std::vector<std::string> kNeutral = {
    "let me turn the call over to our chief financial officer",
    "thank you for joining us today",
    "we will now take your questions",
    "our strategy remains unchanged",
    "next slide please"};

const std::string kGrowthPrefix = "revenue grew by ";
const std::string kGrowthSuffix = "% compared with last year";

const std::vector<std::string> kTickers = {"ABX", "BRQ", "CLN", "DVR", "EMT", "FOX", "GLD",
                                           "HRT", "IVY", "JNK", "KLM", "LUX", "MNO", "NRG",
                                           "OPL", "PQR", "QST", "RVX", "SLT", "TRV"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string format_date(std::size_t offset_days) {
  using namespace std::chrono;
  const sys_days start = year{2012} / January / 3;
  const year_month_day ymd{start + days{static_cast<int>(offset_days)}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string numeral_sentence(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 5), small(1, 99), year(2000, 2020);
  switch (kind(rng)) {
    case 0: return "operating income was $" + std::to_string(small(rng)) + "m";
    case 1: return "we returned $" + std::to_string(small(rng)) + "bn to shareholders";
    case 2: return "we expect the trend to continue into " + std::to_string(year(rng));
    case 3: return "compared with fiscal " + std::to_string(year(rng)) + " the mix shifted";
    case 4: return "we opened " + std::to_string(small(rng)) + " new stores";
    default: return "headcount grew to " + std::to_string(small(rng) * 100) + " employees";
  }
}

CallRecord generate_call(const SyntheticConfig& cfg, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x6e75u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double tone_latent = normal(rng);
  const double growth_center = 30.0 * unit(rng);
  const double audio_latent = normal(rng);
  const double vol_latent = normal(rng);

  CallRecord r;
  r.id = "call-" + std::to_string(index);
  r.ticker = kTickers[index % kTickers.size()];
  r.date = format_date(index * 3);
  r.pre_event_days = cfg.pre_event_days;

  std::uniform_int_distribution<std::size_t> count(cfg.min_sentences, cfg.max_sentences);
  const std::size_t n = count(rng);
  // Slot kinds: 0 tone, 1 growth, 2 other numeral, 3 neutral. The first two
  // slots guarantee at least one tone and one growth sentence.
  std::vector<int> kinds{0, 1};
  while (kinds.size() < n) {
    const double u = unit(rng);
    kinds.push_back(u < 0.4 ? 0 : u < 0.55 ? 1 : u < 0.85 ? 2 : 3);
  }
  std::shuffle(kinds.begin(), kinds.end(), rng);

  const double p_positive = sigmoid(2.0 * tone_latent);
  for (int kind : kinds) {
    Sentence s;
    if (kind == 0) {
      const bool pos = unit(rng) < p_positive;
      const auto& pool = pos ? kPositive : kNegative;
      s.text = pool[static_cast<std::size_t>(unit(rng) * static_cast<double>(pool.size())) % pool.size()];
    } else if (kind == 1) {
      const long pct = std::lround(std::clamp(growth_center + 2.0 * normal(rng), 0.0, 30.0));
      s.text = kGrowthPrefix + std::to_string(pct) + kGrowthSuffix;
    } else if (kind == 2) {
      s.text = numeral_sentence(rng);
    } else {
      s.text = kNeutral[static_cast<std::size_t>(unit(rng) * static_cast<double>(kNeutral.size())) %
                        kNeutral.size()];
    }
    s.audio.resize(kAudioDims);
    for (double& a : s.audio) a = normal(rng);
    s.audio[0] += audio_latent;
    s.audio[1] += vol_latent;
    r.sentences.push_back(std::move(s));
  }

  const auto features = planted_features(r);
  const double mu = cfg.effects.text * features[0] + cfg.effects.numeral * features[1] +
                    cfg.effects.audio * audio_latent;
  const double drift = 0.006 * mu;
  const double sigma = 0.01 * std::exp(0.3 * vol_latent);

  const double p0 = 20.0 + 180.0 * unit(rng);
  std::vector<double> before(cfg.pre_event_days);
  double p = p0;
  for (std::size_t d = 0; d < cfg.pre_event_days; ++d) {
    p /= 1.0 + 0.01 * normal(rng);
    before[cfg.pre_event_days - 1 - d] = p;
  }
  r.prices = before;
  r.prices.push_back(p0);
  p = p0;
  for (std::size_t d = 1; d <= kMaxHorizon; ++d) {
    p *= std::max(1.0 + drift + sigma * normal(rng), 0.5);
    r.prices.push_back(p);
  }
  return r;
}

}  // namespace

std::array<double, 3> planted_features(const CallRecord& record) {
  double tone = 0.0, growth = 0.0, audio = 0.0;
  std::size_t tone_n = 0, growth_n = 0;
  for (const Sentence& s : record.sentences) {
    if (std::find(kPositive.begin(), kPositive.end(), s.text) != kPositive.end()) {
      tone += 1.0;
      ++tone_n;
    } else if (std::find(kNegative.begin(), kNegative.end(), s.text) != kNegative.end()) {
      tone -= 1.0;
      ++tone_n;
    } else if (s.text.starts_with(kGrowthPrefix)) {
      growth += std::stod(s.text.substr(kGrowthPrefix.size()));
      ++growth_n;
    }
    if (!s.audio.empty()) audio += s.audio[0];
  }
  // Tone is scaled to [−2, 2] so each planted term has a comparable spread.
  const double t = tone_n ? 2.0 * tone / static_cast<double>(tone_n) : 0.0;
  const double g = growth_n ? (growth / static_cast<double>(growth_n) - 15.0) / 10.0 : 0.0;
  const double a = record.sentences.empty() ? 0.0 : audio / static_cast<double>(record.sentences.size());
  return {t, g, a};
}

std::vector<CallRecord> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.effects.text < 0.0 || cfg.effects.numeral < 0.0 || cfg.effects.audio < 0.0) {
    throw ConfigError("effect sizes must be non-negative");
  }
  if (cfg.min_sentences == 0 || cfg.min_sentences > cfg.max_sentences || cfg.min_sentences < 2) {
    throw ConfigError("sentence count range must satisfy 2 <= min <= max");
  }
  std::vector<CallRecord> records(cfg.calls);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(cfg.calls);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    records[static_cast<std::size_t>(i)] = generate_call(cfg, static_cast<std::size_t>(i));
  }
  return records;
}

}  // namespace numcast::data
