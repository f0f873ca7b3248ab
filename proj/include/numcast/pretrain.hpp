#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "numcast/encoder.hpp"
#include "numcast/numerals.hpp"
#include "numcast/text.hpp"

// Numeral-aware adaptive pre-training of the token-level encoder: a
// multi-label category classifier over the masked numeral position, then a
// BiLSTM magnitude-comparison probe over isolated numeral encodings.

namespace numcast::pretrain {

/// Linear d→4 head over the final token-block output at the mask position.
struct NccHead {
  Tensor weight;  // d×4
  Tensor bias;    // 1×4

  static NccHead create(ParameterStore& store, std::size_t dim, std::mt19937_64& rng);
  static NccHead bind(ParameterStore& store);
};

struct NccExample {
  std::vector<std::size_t> ids;  // ending in EOS
  std::size_t mask_index = 0;
  std::array<double, numerals::kCategoryCount> targets{};
};

NccExample encode_ncc(const numerals::NccInstance& instance, const text::Vocabulary& vocab,
                      std::size_t max_tokens);

/// 1×4 logits.
Tensor ncc_logits(Tape& tape, const HierarchicalModel& model, const NccHead& head,
                  const NccExample& example);
/// Four independent sigmoid probabilities.
std::array<double, numerals::kCategoryCount> classify_ncc(const HierarchicalModel& model,
                                                          const NccHead& head,
                                                          const NccExample& example);

struct NccReport {
  double lrap = 0.0;
  std::optional<double> roc_auc;  // macro over categories with both classes
  std::size_t instances = 0;
};

NccReport evaluate_ncc(const HierarchicalModel& model, const NccHead& head,
                       const std::vector<NccExample>& examples);

struct StageConfig {
  std::size_t epochs = 4;
  double lr = 3e-3;
  double lr_decay = 0.95;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

/// Trains `trainable` (token encoder tensors plus the head) on mean BCE.
/// Returns the mean training loss per epoch.
std::vector<double> train_ncc(const HierarchicalModel& model, const NccHead& head,
                              const std::vector<Tensor>& trainable,
                              const std::vector<NccExample>& examples, const StageConfig& config);

// ---------------------------------------------------------------------------

/// Forward and backward single-layer LSTMs plus a per-position linear scorer.
struct BiLstmProbe {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Tensor fw_x, fw_h, fw_b;  // input×4h, h×4h, 1×4h (gates i, f, g, o)
  Tensor bw_x, bw_h, bw_b;
  Tensor score_w;           // 2h×1
  Tensor score_b;           // 1×1

  static BiLstmProbe create(ParameterStore& store, std::size_t input, std::size_t hidden,
                            std::mt19937_64& rng, double scale = 0.3);
  static BiLstmProbe bind(ParameterStore& store);
};

/// 1×5 log-probabilities over list positions from a 5×d matrix of numeral
/// embeddings. Throws ContractError when the width does not match the probe.
Tensor probe_log_probs(Tape& tape, const BiLstmProbe& probe, const Tensor& embeddings);
std::array<double, numerals::kListSize> probe_magnitude(const BiLstmProbe& probe,
                                                        const Tensor& embeddings);

/// Mean over a numeral span's tokens of the second-last token block's output,
/// with the span encoded on its own.
Tensor numeral_embedding(Tape& tape, const HierarchicalModel& model,
                         std::span<const std::size_t> span_ids);

struct McExample {
  std::array<std::vector<std::size_t>, numerals::kListSize> spans;
  numerals::Category category = numerals::Category::kOther;
  std::size_t label = 0;
};

McExample encode_mc(const numerals::MagnitudeInstance& instance, const text::Vocabulary& vocab);

/// Accuracy per list category: "monetary", "temporal", "percentage", "all".
/// "other" lists count only towards "all". Categories without lists are NaN.
std::map<std::string, double> evaluate_mc(const HierarchicalModel& model, const BiLstmProbe& probe,
                                          const std::vector<McExample>& examples);

/// Trains `trainable` on the probe's negative log-likelihood.
std::vector<double> train_mc(const HierarchicalModel& model, const BiLstmProbe& probe,
                             const std::vector<Tensor>& trainable,
                             const std::vector<McExample>& examples, const StageConfig& config);

/// Token-encoder tensors trainable during the magnitude stage: everything
/// under the token encoder except the final block, which stays frozen.
std::vector<Tensor> mc_trainable(const HierarchicalModel& model);

}  // namespace numcast::pretrain
