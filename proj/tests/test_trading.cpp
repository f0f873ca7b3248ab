#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "numcast/trading.hpp"

using namespace numcast::trading;

namespace {

std::vector<MarketEvent> random_events(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> step(0.0, 0.02);
  std::uniform_real_distribution<double> start(5.0, 200.0);
  std::vector<MarketEvent> events;
  for (std::size_t i = 0; i < n; ++i) {
    MarketEvent e{"e" + std::to_string(i), "T" + std::to_string(i % 7), {}};
    double p = start(rng);
    for (int d = 0; d <= 5; ++d) {
      e.closes.push_back(p);
      p *= 1.0 + step(rng);
    }
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace

TEST_SUITE("trading") {

TEST_CASE("single trades") {
  std::vector<MarketEvent> ev{{"a", "X", {10, 11, 11.5, 12}}};
  CHECK(simulate(ev, {1}).cumulative_profit == doctest::Approx(2.0));
  CHECK(simulate(ev, {0}).cumulative_profit == doctest::Approx(-2.0));
  auto ledger = simulate(ev, {1});
  REQUIRE(ledger.trades.size() == 1);
  CHECK(ledger.trades[0].entry_day == 0);
  CHECK(ledger.trades[0].exit_day == 3);
  CHECK(ledger.trades[0].action == Action::kLong);
  CHECK(ledger.trades[0].return_rate == doctest::Approx(0.2));
}

TEST_CASE("missing prices are skipped") {
  std::vector<MarketEvent> ev{{"a", "X", {10, 11}}, {"b", "Y", {10, 9, 8, 7}},
                              {"c", "Z", {10, 9, 8, -1}}};
  auto ledger = simulate(ev, {1, 0, 1});
  CHECK(ledger.trades.size() == 1);
  CHECK(ledger.skipped.size() == 2);
  CHECK(ledger.cumulative_profit == doctest::Approx(3.0));
}

TEST_CASE("short-all negates buy-all exactly") {
  std::mt19937_64 rng(4);
  for (int c = 0; c < 20; ++c) {
    auto ev = random_events(rng, 30);
    auto buy = baseline(Strategy::kBuyAll, ev);
    auto sell = baseline(Strategy::kShortAll, ev);
    CHECK(sell.cumulative_profit == -buy.cumulative_profit);
  }
}

TEST_CASE("perfect foresight dominates") {
  std::mt19937_64 rng(6);
  for (int c = 0; c < 20; ++c) {
    auto ev = random_events(rng, 25);
    std::vector<int> oracle;
    for (const auto& e : ev) oracle.push_back(e.closes[3] > e.closes[0] ? 1 : 0);
    const double best = simulate(ev, oracle).cumulative_profit;
    for (Strategy s : {Strategy::kBuyAll, Strategy::kShortAll, Strategy::kRandom})
      CHECK(best >= baseline(s, ev, 3, c).cumulative_profit);
    std::uniform_int_distribution<int> bit(0, 1);
    for (int t = 0; t < 50; ++t) {
      std::vector<int> any(ev.size());
      for (int& a : any) a = bit(rng);
      CHECK(best >= simulate(ev, any).cumulative_profit);
    }
  }
}

TEST_CASE("ledger identities") {
  std::mt19937_64 rng(8);
  auto ev = random_events(rng, 40);
  auto a = baseline(Strategy::kRandom, ev, 3, 99);
  auto b = baseline(Strategy::kRandom, ev, 3, 99);
  std::ostringstream sa, sb;
  write_ledger(sa, a);
  write_ledger(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(a.cumulative_profit == b.cumulative_profit);

  double total = 0.0;
  for (const auto& t : a.trades) total += t.profit;
  CHECK(total == a.cumulative_profit);

  std::vector<int> pred;
  for (const auto& t : a.trades) pred.push_back(t.action == Action::kLong ? 1 : 0);
  std::vector<int> flipped;
  for (int p : pred) flipped.push_back(1 - p);
  CHECK(simulate(ev, flipped).cumulative_profit == -simulate(ev, pred).cumulative_profit);

  auto rev_ev = ev;
  std::reverse(rev_ev.begin(), rev_ev.end());
  auto rev_pred = pred;
  std::reverse(rev_pred.begin(), rev_pred.end());
  CHECK(simulate(rev_ev, rev_pred).cumulative_profit ==
        doctest::Approx(simulate(ev, pred).cumulative_profit).epsilon(1e-12));
}

TEST_CASE("sharpe") {
  auto ledger_of = [](std::vector<double> rates) {
    TradeLedger l;
    for (double r : rates) {
      Trade t;
      t.entry_price = 1.0;
      t.return_rate = r;
      t.profit = r;
      l.trades.push_back(t);
    }
    return l;
  };
  CHECK(std::fabs(*sharpe(ledger_of({0.1, 0.2, 0.3})) - 2.0) < 1e-9);
  CHECK(std::fabs(*sharpe(ledger_of({0.1, 0.3}), 0.2)) < 1e-12);
  CHECK(*sharpe(ledger_of({-0.1, -0.2, -0.3})) == doctest::Approx(-2.0));
  CHECK_FALSE(sharpe(ledger_of({0.1})).has_value());
  CHECK_FALSE(sharpe(ledger_of({0.1, 0.1, 0.1})).has_value());
}

TEST_CASE("summary block") {
  std::vector<MarketEvent> ev{{"a", "X", {10, 11, 11.5, 12}}, {"b", "Y", {10, 9, 9, 9}}};
  std::ostringstream out;
  write_summary(out, simulate(ev, {1, 1}));
  CHECK(out.str().find("Profit:") != std::string::npos);
  CHECK(out.str().find("Sharpe Ratio:") != std::string::npos);
}

TEST_CASE("strategy names") {
  for (Strategy s : {Strategy::kModel, Strategy::kBuyAll, Strategy::kShortAll, Strategy::kRandom})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS(parse_strategy("bogus"));
}

}  // TEST_SUITE
