#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "numcast/dataio.hpp"
#include "numcast/errors.hpp"
#include "numcast/metrics.hpp"

using namespace numcast;
using namespace numcast::data;

namespace {

CallRecord make_record(const std::string& id, const std::string& date, std::size_t sentences = 2) {
  CallRecord r;
  r.id = id;
  r.ticker = "TCK";
  r.date = date;
  r.pre_event_days = 3;
  for (std::size_t i = 0; i < sentences; ++i) {
    Sentence s;
    s.text = "revenue rose 5% to $12m in 2020";
    s.audio.assign(kAudioDims, 0.1 * static_cast<double>(i) + 1.0 / 3.0);
    r.sentences.push_back(std::move(s));
  }
  for (std::size_t d = 0; d < r.pre_event_days + kMaxHorizon + 1; ++d) {
    r.prices.push_back(100.0 + std::sin(static_cast<double>(d)) / 7.0);
  }
  return r;
}

std::string dump(const std::vector<CallRecord>& records) {
  std::ostringstream out;
  write_corpus(out, records);
  return out.str();
}

LoadResult parse(const std::string& text) {
  std::istringstream in(text);
  return read_corpus(in);
}

// Second implementation of the labels straight from the price vector.
std::pair<double, double> reference_labels(const CallRecord& r, std::size_t n) {
  const std::size_t e = r.pre_event_days;
  const double ret = r.prices[e + n] / r.prices[e] - 1.0;
  std::vector<double> daily;
  for (std::size_t d = 1; d <= n; ++d) daily.push_back(r.prices[e + d] / r.prices[e + d - 1] - 1.0);
  double mean = 0.0;
  for (double x : daily) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : daily) var += (x - mean) * (x - mean);
  var = std::max(var / static_cast<double>(n), 1e-12);
  return {ret, 0.5 * std::log(var)};
}

// Ordinary least squares through the normal equations (Gauss–Jordan).
std::vector<double> least_squares(const std::vector<std::vector<double>>& x,
                                  const std::vector<double>& y) {
  const std::size_t p = x.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a[r][c] += x[i][r] * x[i][c];
      a[r][p] += x[i][r] * y[i];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t r = 0; r < p; ++r) beta[r] = a[r][p] / a[r][r];
  return beta;
}

// Fits on the first half of the corpus, scores MCC of the sign on the second.
double oracle_probe_mcc(const std::vector<CallRecord>& corpus, std::size_t horizon) {
  const std::size_t h = horizon_index(horizon);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& r : corpus) {
    const auto f = planted_features(r);
    x.push_back({1.0, f[0], f[1], f[2]});
    y.push_back(compute_labels(r).ret[h]);
  }
  const std::size_t half = x.size() / 2;
  const auto beta = least_squares({x.begin(), x.begin() + static_cast<std::ptrdiff_t>(half)},
                                  {y.begin(), y.begin() + static_cast<std::ptrdiff_t>(half)});
  std::vector<int> predicted, actual;
  for (std::size_t i = half; i < x.size(); ++i) {
    double pred = 0.0;
    for (std::size_t c = 0; c < beta.size(); ++c) pred += beta[c] * x[i][c];
    predicted.push_back(pred > 0.0 ? 1 : 0);
    actual.push_back(y[i] > 0.0 ? 1 : 0);
  }
  return metrics::mcc(metrics::ConfusionMatrix::tally(predicted, actual));
}

}  // namespace

TEST_SUITE("dataio") {
  TEST_CASE("empty file loads as an empty corpus") {
    const auto r = parse("");
    CHECK(r.records.empty());
    CHECK(r.rejected.empty());
  }

  TEST_CASE("header-only corpus round-trips") {
    const std::string text = dump({});
    CHECK(text.find("\"schema\"") != std::string::npos);
    CHECK(parse(text).records.empty());
  }

  TEST_CASE("write then load preserves records bit-exactly") {
    std::vector<CallRecord> records{make_record("a", "2020-01-02"), make_record("b", "2020-01-03", 3)};
    records[0].prices[5] = 0.1 + 0.2;  // not representable in short decimal
    records[1].sentences[1].audio[4] = std::nextafter(1.0, 2.0);
    const auto loaded = parse(dump(records));
    REQUIRE(loaded.records.size() == 2);
    CHECK(loaded.rejected.empty());
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& a = records[i];
      const auto& b = loaded.records[i];
      CHECK(a.id == b.id);
      CHECK(a.ticker == b.ticker);
      CHECK(a.date == b.date);
      CHECK(a.pre_event_days == b.pre_event_days);
      CHECK(a.prices == b.prices);
      REQUIRE(a.sentences.size() == b.sentences.size());
      for (std::size_t s = 0; s < a.sentences.size(); ++s) {
        CHECK(a.sentences[s].text == b.sentences[s].text);
        CHECK(a.sentences[s].audio == b.sentences[s].audio);
      }
    }
    CHECK(dump(loaded.records) == dump(records));
  }

  TEST_CASE("missing audio feature rejects the record and names the sentence") {
    auto bad = make_record("bad", "2020-01-05", 4);
    bad.sentences[2].audio.pop_back();
    const auto loaded = parse(dump({make_record("ok", "2020-01-04"), bad}));
    REQUIRE(loaded.records.size() == 1);
    CHECK(loaded.records[0].id == "ok");
    REQUIRE(loaded.rejected.size() == 1);
    CHECK(loaded.rejected[0].id == "bad");
    CHECK(loaded.rejected[0].reason.find("sentence 2") != std::string::npos);
  }

  TEST_CASE("short price series and other content violations are rejected") {
    auto shortp = make_record("short", "2020-01-05");
    shortp.prices.resize(shortp.pre_event_days + 20);
    auto neg = make_record("neg", "2020-01-06");
    neg.prices[10] = -1.0;
    auto empty = make_record("empty", "2020-01-07", 0);
    const auto loaded = parse(dump({shortp, neg, empty}));
    CHECK(loaded.records.empty());
    REQUIRE(loaded.rejected.size() == 3);
    CHECK(loaded.rejected[0].reason.find("price") != std::string::npos);
  }

  TEST_CASE("structural errors name the line and field") {
    const std::string header = "{\"schema\":\"numcast-corpus\",\"version\":1,\"calls\":1}\n";
    try {
      parse(header + "{\"id\":\"x\",\"ticker\":\"T\",\"date\":\"2020-01-01\",\"pre_event_days\":1,"
                     "\"sentences\":[{\"text\":\"hi\",\"audio\":\"oops\"}],\"prices\":[1]}\n");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 2") != std::string::npos);
      CHECK(msg.find("sentences[0]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse(header + "not json\n"), ValidationError);
    CHECK_THROWS_AS(parse("{\"schema\":\"numcast-corpus\",\"version\":99,\"calls\":0}\n"),
                    ValidationError);
    CHECK_THROWS_AS(parse("{\"schema\":\"numcast-corpus\",\"version\":1,\"calls\":3}\n"),
                    ValidationError);
  }

  TEST_CASE("loaded records are sorted by date then id") {
    const auto loaded = parse(dump({make_record("z", "2021-03-01"), make_record("b", "2020-01-01"),
                                    make_record("a", "2020-01-01")}));
    REQUIRE(loaded.records.size() == 3);
    CHECK(loaded.records[0].id == "a");
    CHECK(loaded.records[1].id == "b");
    CHECK(loaded.records[2].id == "z");
  }

  TEST_CASE("chronological split sizes") {
    auto many = [](std::size_t n) {
      std::vector<CallRecord> v;
      for (std::size_t i = 0; i < n; ++i) {
        v.push_back(make_record("c" + std::to_string(1000 + i), "2020-01-01", 1));
      }
      return v;
    };
    const auto s10 = split_chronological(many(10));
    CHECK(s10.train.size() == 7);
    CHECK(s10.valid.size() == 1);
    CHECK(s10.test.size() == 2);
    const auto s576 = split_chronological(many(576));
    CHECK(s576.train.size() == 403);
    CHECK(s576.valid.size() == 57);
    CHECK(s576.test.size() == 116);
    CHECK_THROWS_AS(split_chronological(many(9)), ConfigError);
  }

  TEST_CASE("shuffled input is re-sorted and the split is disjoint and ordered") {
    auto corpus = generate_synthetic({.seed = 3, .calls = 40});
    std::mt19937_64 rng(5);
    std::shuffle(corpus.begin(), corpus.end(), rng);
    const auto s = split_chronological(corpus);
    CHECK(s.train.size() + s.valid.size() + s.test.size() == 40);
    for (const auto& a : s.train) {
      for (const auto& b : s.test) CHECK(a.date <= b.date);
    }
    std::vector<std::string> ids;
    for (const auto* part : {&s.train, &s.valid, &s.test})
      for (const auto& r : *part) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
    const auto again = split_chronological(corpus);
    CHECK(dump(again.test) == dump(s.test));
  }

  TEST_CASE("label examples") {
    auto flat = make_record("f", "2020-01-01");
    std::fill(flat.prices.begin(), flat.prices.end(), 50.0);
    const auto lf = compute_labels(flat);
    for (std::size_t h = 0; h < kHorizons.size(); ++h) {
      CHECK(lf.ret[h] == 0.0);
      CHECK(lf.volatility[h] == doctest::Approx(0.5 * std::log(1e-12)).epsilon(1e-12));
      CHECK(lf.rise[h] == 0);
    }
    auto up = flat;
    up.prices[up.pre_event_days] = 100.0;
    up.prices[up.pre_event_days + 3] = 103.0;
    CHECK(compute_labels(up).ret[0] == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(compute_labels(up).rise[0] == 1);
  }

  TEST_CASE("labels agree with an independent recomputation") {
    std::mt19937_64 rng(17);
    std::lognormal_distribution<double> step(0.0, 0.02);
    for (int trial = 0; trial < 50; ++trial) {
      auto r = make_record("r", "2020-01-01");
      double p = 80.0;
      for (double& x : r.prices) x = (p *= step(rng));
      const auto l = compute_labels(r);
      for (std::size_t h = 0; h < kHorizons.size(); ++h) {
        const auto [ret, vol] = reference_labels(r, kHorizons[h]);
        CHECK(l.ret[h] == doctest::Approx(ret).epsilon(1e-12));
        CHECK(l.volatility[h] == doctest::Approx(vol).epsilon(1e-12));
        CHECK(l.rise[h] == (l.ret[h] > 0.0 ? 1 : 0));
      }
    }
  }

  TEST_CASE("coverage gap is a contract error") {
    auto r = make_record("g", "2020-01-01");
    r.prices.resize(r.pre_event_days + 10);
    CHECK_THROWS_AS(compute_labels(r), ContractError);
  }

  TEST_CASE("market event starts on the event day") {
    const auto r = make_record("m", "2020-01-01");
    const auto e = market_event(r);
    CHECK(e.closes.front() == r.prices[r.pre_event_days]);
    CHECK(e.closes.size() == kMaxHorizon + 1);
  }

  TEST_CASE("horizon index") {
    CHECK(horizon_index(3) == 0);
    CHECK(horizon_index(30) == 3);
    CHECK_THROWS_AS(horizon_index(5), ConfigError);
  }

  TEST_CASE("synthetic generator is bit-deterministic and schema-valid") {
    const SyntheticConfig cfg{.seed = 7, .calls = 50};
    const std::string a = dump(generate_synthetic(cfg));
    const std::string b = dump(generate_synthetic(cfg));
    CHECK(a == b);
    const auto loaded = parse(a);
    CHECK(loaded.records.size() == 50);
    CHECK(loaded.rejected.empty());
    CHECK(dump(generate_synthetic({.seed = 8, .calls = 50})) != a);
    CHECK(generate_synthetic({.seed = 7, .calls = 0}).empty());
  }

  TEST_CASE("negative effect sizes are a configuration error") {
    SyntheticConfig cfg;
    cfg.effects.audio = -1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  }

  TEST_CASE("oracle linear probe on planted features") {
    const auto corpus = generate_synthetic({.seed = 11, .calls = 600});
    const double m3 = oracle_probe_mcc(corpus, 3);
    MESSAGE("oracle probe MCC_3 = " << m3);
    CHECK(m3 > 0.5);
    const auto null = generate_synthetic({.seed = 11, .calls = 600, .effects = {0.0, 0.0, 0.0}});
    CHECK(std::abs(oracle_probe_mcc(null, 3)) < 0.15);
  }
}
