#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace numcast::trading {

/// 0 = long (predicted rise), 1 = short (predicted fall).
enum class Action : int { kLong = 0, kShort = 1 };

/// Closing prices indexed by trading-day offset from the event day. The trade
/// opens at offset 0 and closes at offset τ.
struct MarketEvent {
  std::string id;
  std::string ticker;
  std::vector<double> closes;
};

struct Trade {
  std::string event_id;
  std::string ticker;
  int entry_day = 0;
  int exit_day = 0;
  double entry_price = 0.0;
  double exit_price = 0.0;
  Action action = Action::kLong;
  double profit = 0.0;
  double return_rate = 0.0;  // profit / entry price
};

struct SkippedEvent {
  std::string event_id;
  std::string reason;
};

struct TradeLedger {
  std::vector<Trade> trades;
  std::vector<SkippedEvent> skipped;
  double cumulative_profit = 0.0;

  std::vector<double> return_rates() const;
};

inline constexpr std::size_t kDefaultHoldingDays = 3;

/// One single-share trade per event, no fees: profit = (p_τ − p_0)·(−1)^action.
/// `predicted_rise[i]` drives events[i]. Events with a missing or invalid
/// entry/exit price are skipped and listed in the ledger.
TradeLedger simulate(const std::vector<MarketEvent>& events,
                     const std::vector<int>& predicted_rise,
                     std::size_t holding_days = kDefaultHoldingDays);

enum class Strategy { kModel, kBuyAll, kShortAll, kRandom };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy strategy);

/// Buy-all, short-sell-all or seeded fair-coin actions.
TradeLedger baseline(Strategy strategy, const std::vector<MarketEvent>& events,
                     std::size_t holding_days = kDefaultHoldingDays,
                     std::uint64_t seed = 0);

/// (mean(r) − R_f) / sample_std(r) over per-trade return rates. Absent with
/// fewer than two trades or zero variance.
std::optional<double> sharpe(const TradeLedger& ledger, double risk_free_rate = 0.0);

/// One JSON record per trade.
void write_ledger(std::ostream& out, const TradeLedger& ledger);
/// "Profit" and "Sharpe Ratio" lines plus trade/skip counts.
void write_summary(std::ostream& out, const TradeLedger& ledger,
                   double risk_free_rate = 0.0);

}  // namespace numcast::trading
