#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "numcast/dataio.hpp"
#include "numcast/encoder.hpp"
#include "numcast/pareto.hpp"
#include "numcast/pretrain.hpp"
#include "numcast/trading.hpp"

// Orchestration shared by the command-line tool and the acceptance harness:
// run configuration, input normalization, pre-training stages, Pareto
// training of the upper model per horizon, evaluation and simulation.

namespace numcast::pipeline {

/// Flat key=value run configuration. `#` starts a comment; blank lines are
/// ignored. Keys are listed by `RunConfig::keys()`.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string corpus;
  std::string out = "out";
  std::string pretrained;  // magnitude-stage checkpoint; empty = <out>/pretrain_mc.ckpt

  std::size_t token_dim = 32;
  std::size_t sentence_dim = 32;
  std::size_t token_blocks = 2;
  std::size_t sentence_blocks = 2;
  std::size_t heads = 2;
  std::size_t max_sentences = 16;
  std::size_t max_tokens = 24;

  std::size_t preferences = 10;  // K
  std::vector<std::size_t> horizons{3, 7, 15, 30};
  std::size_t epochs = 8;
  double lr = 3e-3;
  double lr_decay = 0.95;
  std::size_t batch_size = 16;

  std::size_t ncc_epochs = 3;
  std::size_t mc_epochs = 3;
  double pretrain_lr = 3e-3;
  std::size_t mc_hidden = 16;
  std::size_t mc_rounds = 3;

  bool pareto = true;
  bool pretrain = true;
  bool text_only = false;

  static const std::vector<std::string>& keys();

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError when a dimension is zero, K < 2, heads do not divide
  /// the widths, or a horizon is outside {3, 7, 15, 30}.
  void validate() const;

  EncoderConfig encoder(std::size_t vocab_size) const;
  std::string pretrained_path() const;

  /// Canonical key=value lines in key order.
  std::map<std::string, std::string> to_map() const;
  /// SHA-1 (hex) of the canonical key=value text.
  std::string hash() const;
};

/// Applies the key=value lines of a config file onto `config`.
void apply_config_file(RunConfig& config, const std::string& path);
void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin);

struct CorpusSummary {
  std::size_t calls = 0;
  std::size_t sentences = 0;
  std::array<std::size_t, numerals::kCategoryCount> numerals{};  // spans per category
};

/// A span with several categories counts once in each.
CorpusSummary summarize_corpus(const std::vector<data::CallRecord>& records);
void write_summary(std::ostream& out, const CorpusSummary& summary);

// ---------------------------------------------------------------------------

/// Train-split statistics used to put inputs and targets on unit scale.
struct Normalizer {
  std::array<double, data::kAudioDims> audio_mean{};
  std::array<double, data::kAudioDims> audio_std{};
  double return_scale = 1.0;  // root mean square of train returns
  double volatility_mean = 0.0;
  double volatility_std = 1.0;

  static Normalizer fit(const std::vector<data::CallRecord>& train, std::size_t horizon);
  void write(std::map<std::string, std::string>& meta) const;
  static Normalizer read(const std::map<std::string, std::string>& meta);
};

struct Example {
  EncodedDocument doc;
  double ret = 0.0;         // raw n-day return
  double volatility = 0.0;  // raw n-day log volatility
  double ret_target = 0.0;  // normalized
  double volatility_target = 0.0;
};

/// Encodes sentences, normalizes audio and targets, and caches the text
/// vectors T_i from the model's (frozen) token-level encoder.
std::vector<Example> prepare_examples(const std::vector<data::CallRecord>& records,
                                      const HierarchicalModel& model,
                                      const text::Vocabulary& vocab, const Normalizer& norm,
                                      std::size_t horizon);

/// Mini-batch objective over the upper model (fusion, sentence encoder,
/// heads): L₁ = return MSE, L₂ = volatility MSE, both on normalized targets.
class ModelObjective : public pareto::BiObjective {
 public:
  ModelObjective(HierarchicalModel model, const std::vector<Example>& examples,
                 std::size_t batch_size, std::uint64_t seed, bool audio_enabled);

  std::size_t dimension() const override;
  std::size_t batch_count() const override;
  pareto::Evaluation evaluate(std::span<const double> theta, std::size_t batch) override;
  pareto::Vec2 full_losses(std::span<const double> theta) override;
  void begin_epoch(std::size_t epoch) override;

  std::vector<double> theta() const;

 private:
  HierarchicalModel model_;
  std::vector<Tensor> upper_;
  const std::vector<Example>* examples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool audio_enabled_;
  std::vector<std::size_t> order_;
};

/// Normalized (return, volatility) predictions.
std::vector<std::array<double, 2>> predict_normalized(const HierarchicalModel& model,
                                                      const std::vector<Example>& examples,
                                                      bool audio_enabled);

// ---------------------------------------------------------------------------

struct NccStage {
  Checkpoint checkpoint;
  pretrain::NccReport before;  // untrained encoder and head
  pretrain::NccReport after;
  std::vector<double> losses;
};

struct McStage {
  Checkpoint checkpoint;
  std::map<std::string, double> accuracy;  // monetary, temporal, percentage, all
  std::vector<double> losses;
};

/// Category classification on the train split's sentences, with a held-out
/// fifth of the instances for the report.
NccStage pretrain_ncc(const RunConfig& config, const std::vector<data::CallRecord>& train);
/// Magnitude comparison starting from a category-stage checkpoint; throws
/// ValidationError if the checkpoint is not from that stage.
McStage pretrain_mc(const RunConfig& config, const std::vector<data::CallRecord>& train,
                    const Checkpoint& ncc);

// ---------------------------------------------------------------------------

struct SubproblemSummary {
  std::size_t k = 0;
  bool initial_feasible = false;
  bool feasible = false;
  pareto::Vec2 losses{};
  double valid_return_mse = 0.0;
  std::string termination;
};

struct HorizonModel {
  std::size_t horizon = 0;
  std::size_t selected_k = 0;
  std::vector<SubproblemSummary> subproblems;
  std::vector<pareto::TrajectoryRow> trajectory;  // every sub-problem, in k order
  Checkpoint checkpoint;
};

/// Trains the upper model for one horizon: K preference sub-problems (or one
/// fixed α = (0.5, 0.5) run without Pareto), choosing the solution with the
/// lowest validation return MSE. `pretrained` is the magnitude-stage
/// checkpoint, or null to keep the randomly initialized token encoder.
HorizonModel train_horizon(const RunConfig& config, const data::Split& split,
                           const Checkpoint* pretrained, std::size_t horizon);

/// A trained model restored from its checkpoint.
struct Predictor {
  std::size_t horizon = 0;
  bool audio_enabled = true;
  text::Vocabulary vocab;
  Normalizer norm;
  HierarchicalModel model;

  static Predictor from_checkpoint(const Checkpoint& checkpoint);
  /// Raw-scale (return, log volatility) per record.
  std::vector<std::array<double, 2>> predict(const std::vector<data::CallRecord>& records) const;
};

struct HorizonMetrics {
  std::size_t horizon = 0;
  std::size_t instances = 0;
  double mcc = 0.0;
  double f1 = 0.0;
  double volatility_mse = 0.0;
  double return_mse = 0.0;
};

/// Movement metrics from predicted returns and volatility MSE on raw scale.
HorizonMetrics score(std::size_t horizon, const std::vector<data::CallRecord>& records,
                     const std::vector<std::array<double, 2>>& predictions);

/// `horizon=<n> MCC_<n>=… F1_<n>=… volatility_MSE_<n>=… return_MSE_<n>=… instances=…`
void write_report(std::ostream& out, const std::vector<HorizonMetrics>& rows);

// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::optional<NccStage> ncc;
  std::optional<McStage> mc;
  std::vector<HorizonModel> models;
  std::vector<HorizonMetrics> test;
};

/// Split, optional pre-training, training per configured horizon and test
/// evaluation, all in memory.
ExperimentResult run_experiment(const RunConfig& config,
                                const std::vector<data::CallRecord>& corpus);

/// Trading events and predicted movement for the model strategy.
trading::TradeLedger simulate_model(const Predictor& predictor,
                                    const std::vector<data::CallRecord>& records,
                                    std::size_t holding_days);

}  // namespace numcast::pipeline
