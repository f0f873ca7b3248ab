#include "numcast/trading.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include <json.hpp>

#include "numcast/errors.hpp"

namespace numcast::trading {

std::vector<double> TradeLedger::return_rates() const {
  std::vector<double> out;
  out.reserve(trades.size());
  for (const Trade& t : trades) out.push_back(t.return_rate);
  return out;
}

TradeLedger simulate(const std::vector<MarketEvent>& events,
                     const std::vector<int>& predicted_rise,
                     std::size_t holding_days) {
  if (events.size() != predicted_rise.size()) {
    throw ContractError("simulate: one prediction per event required");
  }
  if (holding_days == 0) throw ConfigError("simulate: holding period must be positive");
  TradeLedger ledger;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const MarketEvent& e = events[i];
    if (e.closes.size() <= holding_days) {
      ledger.skipped.push_back({e.id, "no close at day " + std::to_string(holding_days)});
      continue;
    }
    const double entry = e.closes[0], exit = e.closes[holding_days];
    if (!(entry > 0.0) || !(exit > 0.0) || !std::isfinite(entry) || !std::isfinite(exit)) {
      ledger.skipped.push_back({e.id, "invalid entry or exit price"});
      continue;
    }
    Trade t;
    t.event_id = e.id;
    t.ticker = e.ticker;
    t.entry_day = 0;
    t.exit_day = static_cast<int>(holding_days);
    t.entry_price = entry;
    t.exit_price = exit;
    t.action = predicted_rise[i] ? Action::kLong : Action::kShort;
    t.profit = t.action == Action::kLong ? exit - entry : entry - exit;
    t.return_rate = t.profit / entry;
    ledger.cumulative_profit += t.profit;
    ledger.trades.push_back(std::move(t));
  }
  return ledger;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "model") return Strategy::kModel;
  if (name == "buy-all") return Strategy::kBuyAll;
  if (name == "short-all") return Strategy::kShortAll;
  if (name == "random") return Strategy::kRandom;
  throw ConfigError("unknown strategy '" + name + "'");
}

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kModel: return "model";
    case Strategy::kBuyAll: return "buy-all";
    case Strategy::kShortAll: return "short-all";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

TradeLedger baseline(Strategy strategy, const std::vector<MarketEvent>& events,
                     std::size_t holding_days, std::uint64_t seed) {
  std::vector<int> calls(events.size(), 1);
  switch (strategy) {
    case Strategy::kBuyAll:
      break;
    case Strategy::kShortAll:
      std::fill(calls.begin(), calls.end(), 0);
      break;
    case Strategy::kRandom: {
      std::mt19937_64 rng(seed);
      for (int& c : calls) c = static_cast<int>(rng() >> 63);
      break;
    }
    case Strategy::kModel:
      throw ContractError("baseline: the model strategy needs predictions");
  }
  return simulate(events, calls, holding_days);
}

std::optional<double> sharpe(const TradeLedger& ledger, double risk_free_rate) {
  const std::vector<double> r = ledger.return_rates();
  if (r.size() < 2) return std::nullopt;
  // Identical rates have zero variance even when the mean picks up rounding.
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  if (*lo == *hi) return std::nullopt;
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
  if (sd == 0.0) return std::nullopt;
  return (mean - risk_free_rate) / sd;
}

void write_ledger(std::ostream& out, const TradeLedger& ledger) {
  for (const Trade& t : ledger.trades) {
    nlohmann::json j = {{"event", t.event_id},
                        {"ticker", t.ticker},
                        {"entry_day", t.entry_day},
                        {"exit_day", t.exit_day},
                        {"entry_price", t.entry_price},
                        {"exit_price", t.exit_price},
                        {"action", static_cast<int>(t.action)},
                        {"profit", t.profit}};
    out << j.dump() << '\n';
  }
  for (const SkippedEvent& s : ledger.skipped) {
    out << nlohmann::json{{"event", s.event_id}, {"skipped", s.reason}}.dump() << '\n';
  }
}

void write_summary(std::ostream& out, const TradeLedger& ledger,
                   double risk_free_rate) {
  const auto ratio = sharpe(ledger, risk_free_rate);
  out << std::fixed << std::setprecision(4);
  out << "Profit: " << ledger.cumulative_profit << '\n';
  out << "Sharpe Ratio: ";
  if (ratio) out << *ratio; else out << "absent";
  out << '\n';
  out << "Trades: " << ledger.trades.size() << '\n';
  out << "Skipped: " << ledger.skipped.size() << '\n';
  out << std::defaultfloat;
}

}  // namespace numcast::trading
