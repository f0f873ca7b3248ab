#include "numcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "numcast/errors.hpp"

namespace numcast::metrics {

ConfusionMatrix ConfusionMatrix::tally(std::span<const int> predicted,
                                       std::span<const int> actual) {
  if (predicted.size() != actual.size()) {
    throw ContractError("confusion matrix: prediction/truth length mismatch");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, a = actual[i] != 0;
    if (p && a) ++cm.tp;
    else if (!p && !a) ++cm.tn;
    else if (p) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

double mcc(const ConfusionMatrix& cm) {
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
  const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

double f1(const ConfusionMatrix& cm) {
  const double denom = 2.0 * static_cast<double>(cm.tp) +
                       static_cast<double>(cm.fp) + static_cast<double>(cm.fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(cm.tp) / denom;
}

double mse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw ContractError("mse: inputs must be non-empty and of equal length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - truths[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

std::vector<double> PriceWindow::returns(std::size_t n) const {
  if (n == 0 || prices.size() < n + 1) {
    throw ContractError("price window holds " + std::to_string(prices.size()) +
                        " prices, need " + std::to_string(n + 1));
  }
  std::vector<double> out(n);
  for (std::size_t i = 1; i <= n; ++i) {
    if (!(prices[i - 1] > 0.0) || !(prices[i] > 0.0)) {
      throw ContractError("price window contains a non-positive price");
    }
    out[i - 1] = prices[i] / prices[i - 1] - 1.0;
  }
  return out;
}

double log_volatility(std::span<const double> returns) {
  if (returns.empty()) throw ContractError("log_volatility: no returns");
  const double n = static_cast<double>(returns.size());
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const double variance = std::max(ss / n, kVarianceFloor);
  return std::log(std::sqrt(variance));
}

double volatility(const PriceWindow& window, std::size_t n) {
  const std::vector<double> r = window.returns(n);
  return log_volatility(r);
}

double n_day_return(const PriceWindow& window, std::size_t n) {
  if (window.prices.size() < n + 1) {
    throw ContractError("n_day_return: missing price at day " + std::to_string(n));
  }
  const double p0 = window.prices[0], pn = window.prices[n];
  if (!(p0 > 0.0) || !(pn > 0.0)) {
    throw ContractError("n_day_return: non-positive price");
  }
  return pn / p0 - 1.0;
}

double lrap(const ScoreMatrix& scores, const LabelMatrix& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ContractError("lrap: need equal, non-zero numbers of score and label rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    const auto& y = labels[i];
    if (s.size() != y.size()) throw ContractError("lrap: row width mismatch");
    const auto relevant =
        static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](int v) { return v != 0; }));
    if (relevant == 0 || relevant == y.size()) {
      total += 1.0;
      continue;
    }
    double row = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[j]) continue;
      std::size_t rank = 0, rank_relevant = 0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] >= s[j]) {
          ++rank;
          if (y[k]) ++rank_relevant;
        }
      }
      row += static_cast<double>(rank_relevant) / static_cast<double>(rank);
    }
    total += row / static_cast<double>(relevant);
  }
  return total / static_cast<double>(scores.size());
}

std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks for tied groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      positives += 1.0;
      rank_sum += rank[i];
    }
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::optional<double> macro_roc_auc(const ScoreMatrix& scores,
                                    const LabelMatrix& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ContractError("macro_roc_auc: need equal, non-zero row counts");
  }
  const std::size_t width = scores.front().size();
  double total = 0.0;
  std::size_t defined = 0;
  std::vector<double> column(scores.size());
  std::vector<int> truth(scores.size());
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      column[i] = scores[i].at(c);
      truth[i] = labels[i].at(c);
    }
    if (auto auc = roc_auc(column, truth)) {
      total += *auc;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return total / static_cast<double>(defined);
}

SignTest paired_sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("paired_sign_test: length mismatch");
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) ++t.wins;
    else if (a[i] < b[i]) ++t.losses;
    else ++t.ties;
  }
  const std::size_t n = t.wins + t.losses;
  if (n == 0) return t;
  const std::size_t extreme = std::min(t.wins, t.losses);
  // P(X <= extreme) for X ~ Binomial(n, 1/2), doubled.
  double tail = 0.0;
  for (std::size_t k = 0; k <= extreme; ++k) {
    tail += std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                     std::lgamma(static_cast<double>(k) + 1.0) -
                     std::lgamma(static_cast<double>(n - k) + 1.0) -
                     static_cast<double>(n) * std::log(2.0));
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

}  // namespace numcast::metrics
