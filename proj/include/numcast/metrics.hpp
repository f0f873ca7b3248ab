#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace numcast::metrics {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  /// Tallies binary predictions (1 = rise) against truths.
  static ConfusionMatrix tally(std::span<const int> predicted,
                               std::span<const int> actual);
};

/// Matthews correlation; 0 when any factor of the denominator is zero.
double mcc(const ConfusionMatrix& cm);
/// 2tp / (2tp + fp + fn); 0 when the denominator is zero.
double f1(const ConfusionMatrix& cm);

double mse(std::span<const double> predictions, std::span<const double> truths);

/// Variance floor applied before the logarithm in the volatility measure.
inline constexpr double kVarianceFloor = 1e-12;

/// Adjusted closing prices p_0..p_n around an event (p_0 = event day).
struct PriceWindow {
  std::vector<double> prices;

  /// Simple daily returns r_i = p_i / p_{i-1} − 1 for i = 1..n.
  std::vector<double> returns(std::size_t n) const;
};

/// ln √(Σ(r_i − r̄)² / n) over the given returns, with the variance floored.
double log_volatility(std::span<const double> returns);
/// Log volatility of the first n daily returns after the event day.
double volatility(const PriceWindow& window, std::size_t n);
/// Cumulative simple return p_n / p_0 − 1.
double n_day_return(const PriceWindow& window, std::size_t n);

using ScoreMatrix = std::vector<std::vector<double>>;
using LabelMatrix = std::vector<std::vector<int>>;

/// Label-ranking average precision. Rows whose labels are all-relevant or
/// all-irrelevant score 1.
double lrap(const ScoreMatrix& scores, const LabelMatrix& labels);

/// Binary ROC AUC via rank statistics, ties counted as one half. Absent when
/// only one class is present.
std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const int> labels);

/// Macro average of per-column AUC over columns where it is defined.
std::optional<double> macro_roc_auc(const ScoreMatrix& scores,
                                    const LabelMatrix& labels);

struct SignTest {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // two-sided, ties dropped
};

/// Paired sign test of a against b.
SignTest paired_sign_test(std::span<const double> a, std::span<const double> b);

}  // namespace numcast::metrics
