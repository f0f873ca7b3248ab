#include "numcast/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "numcast/errors.hpp"
#include "numcast/metrics.hpp"
#include "numcast/optim.hpp"

namespace numcast::pretrain {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = dist(rng);
  return Tensor({rows, cols}, std::move(data), true);
}

// Shared mini-batch loop: `example_loss` builds one example's loss on the tape.
template <typename Example, typename LossFn>
std::vector<double> run_stage(const HierarchicalModel& model, const std::vector<Tensor>& trainable,
                              const std::vector<Tensor>& extra, const std::vector<Example>& examples,
                              const StageConfig& config, LossFn&& example_loss) {
  if (examples.empty()) throw ContractError("pre-training stage has no examples");
  TensorAdam adam(trainable);
  std::vector<Tensor> everything = model.params().tensors();
  everything.insert(everything.end(), extra.begin(), extra.end());
  LearningRateSchedule schedule{config.lr, config.lr_decay};
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> epoch_losses;
  const std::size_t batch = std::max<std::size_t>(config.batch_size, 1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero_grads(everything);
      Tape tape;
      std::vector<Tensor> losses;
      for (std::size_t i = start; i < end; ++i) losses.push_back(example_loss(tape, examples[order[i]]));
      Tensor loss = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
      loss = tape.scale(loss, 1.0 / static_cast<double>(losses.size()));
      if (!std::isfinite(loss.item())) {
        throw NumericError("pre-training epoch " + std::to_string(epoch) + ": non-finite loss");
      }
      tape.backward(loss);
      adam.step(schedule.at_epoch(epoch));
      total += loss.item() * static_cast<double>(end - start);
    }
    epoch_losses.push_back(total / static_cast<double>(order.size()));
  }
  zero_grads(everything);
  return epoch_losses;
}

}  // namespace

NccHead NccHead::create(ParameterStore& store, std::size_t dim, std::mt19937_64& rng) {
  store.add("ncc.w", random_matrix(dim, numerals::kCategoryCount, 0.1, rng));
  store.add("ncc.b", Tensor::zeros({1, numerals::kCategoryCount}, true));
  return bind(store);
}

NccHead NccHead::bind(ParameterStore& store) { return {store.get("ncc.w"), store.get("ncc.b")}; }

NccExample encode_ncc(const numerals::NccInstance& instance, const text::Vocabulary& vocab,
                      std::size_t max_tokens) {
  if (instance.mask_index + 1 >= max_tokens) {
    throw ContractError("masked numeral falls outside the first " + std::to_string(max_tokens) +
                        " tokens");
  }
  NccExample ex;
  ex.ids = vocab.encode(instance.tokens, max_tokens);
  ex.mask_index = instance.mask_index;
  for (std::size_t c = 0; c < numerals::kCategoryCount; ++c) ex.targets[c] = instance.labels.test(c) ? 1.0 : 0.0;
  return ex;
}

Tensor ncc_logits(Tape& tape, const HierarchicalModel& model, const NccHead& head,
                  const NccExample& example) {
  const auto layers = model.token_layers(tape, example.ids);
  Tensor row = tape.slice_rows(layers.back(), example.mask_index, 1);
  return tape.add(tape.matmul(row, head.weight), head.bias);
}

std::array<double, numerals::kCategoryCount> classify_ncc(const HierarchicalModel& model,
                                                          const NccHead& head,
                                                          const NccExample& example) {
  Tape tape;
  Tensor p = tape.sigmoid(ncc_logits(tape, model, head, example));
  std::array<double, numerals::kCategoryCount> out{};
  std::copy_n(p.data().begin(), out.size(), out.begin());
  return out;
}

NccReport evaluate_ncc(const HierarchicalModel& model, const NccHead& head,
                       const std::vector<NccExample>& examples) {
  metrics::ScoreMatrix scores;
  metrics::LabelMatrix labels;
  for (const NccExample& ex : examples) {
    const auto p = classify_ncc(model, head, ex);
    scores.emplace_back(p.begin(), p.end());
    std::vector<int> l;
    for (double t : ex.targets) l.push_back(t > 0.5 ? 1 : 0);
    labels.push_back(std::move(l));
  }
  NccReport r;
  r.instances = examples.size();
  if (examples.empty()) return r;
  r.lrap = metrics::lrap(scores, labels);
  r.roc_auc = metrics::macro_roc_auc(scores, labels);
  return r;
}

std::vector<double> train_ncc(const HierarchicalModel& model, const NccHead& head,
                              const std::vector<Tensor>& trainable,
                              const std::vector<NccExample>& examples, const StageConfig& config) {
  return run_stage(model, trainable, {head.weight, head.bias}, examples, config,
                   [&](Tape& tape, const NccExample& ex) {
                     return tape.bce_with_logits(ncc_logits(tape, model, head, ex), ex.targets);
                   });
}

// ---------------------------------------------------------------------------

BiLstmProbe BiLstmProbe::create(ParameterStore& store, std::size_t input, std::size_t hidden,
                                std::mt19937_64& rng, double scale) {
  const double sx = scale / std::sqrt(static_cast<double>(input));
  const double sh = scale / std::sqrt(static_cast<double>(hidden));
  store.add("mc.fw_x", random_matrix(input, 4 * hidden, sx, rng));
  store.add("mc.fw_h", random_matrix(hidden, 4 * hidden, sh, rng));
  store.add("mc.fw_b", Tensor::zeros({1, 4 * hidden}, true));
  store.add("mc.bw_x", random_matrix(input, 4 * hidden, sx, rng));
  store.add("mc.bw_h", random_matrix(hidden, 4 * hidden, sh, rng));
  store.add("mc.bw_b", Tensor::zeros({1, 4 * hidden}, true));
  store.add("mc.score_w", random_matrix(2 * hidden, 1, sh, rng));
  store.add("mc.score_b", Tensor::zeros({1, 1}, true));
  return bind(store);
}

BiLstmProbe BiLstmProbe::bind(ParameterStore& store) {
  BiLstmProbe p;
  p.fw_x = store.get("mc.fw_x");
  p.fw_h = store.get("mc.fw_h");
  p.fw_b = store.get("mc.fw_b");
  p.bw_x = store.get("mc.bw_x");
  p.bw_h = store.get("mc.bw_h");
  p.bw_b = store.get("mc.bw_b");
  p.score_w = store.get("mc.score_w");
  p.score_b = store.get("mc.score_b");
  p.input = p.fw_x.rows();
  p.hidden = p.fw_h.rows();
  return p;
}

namespace {

// Hidden states of one LSTM direction, indexed by list position.
std::vector<Tensor> run_lstm(Tape& tape, const Tensor& wx, const Tensor& wh, const Tensor& b,
                             const std::vector<Tensor>& inputs, std::size_t hidden, bool reverse) {
  const std::size_t n = inputs.size();
  std::vector<Tensor> states(n);
  Tensor h = Tensor::zeros({1, hidden});
  Tensor c = Tensor::zeros({1, hidden});
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    Tensor z = tape.add(tape.add(tape.matmul(inputs[t], wx), tape.matmul(h, wh)), b);
    Tensor i = tape.sigmoid(tape.slice_cols(z, 0, hidden));
    Tensor f = tape.sigmoid(tape.slice_cols(z, hidden, hidden));
    Tensor g = tape.tanh(tape.slice_cols(z, 2 * hidden, hidden));
    Tensor o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, hidden));
    c = tape.add(tape.mul(f, c), tape.mul(i, g));
    h = tape.mul(o, tape.tanh(c));
    states[t] = h;
  }
  return states;
}

}  // namespace

Tensor probe_log_probs(Tape& tape, const BiLstmProbe& probe, const Tensor& embeddings) {
  if (embeddings.cols() != probe.input) {
    throw ContractError("magnitude probe expects " + std::to_string(probe.input) +
                        "-wide embeddings, got " + std::to_string(embeddings.cols()));
  }
  if (embeddings.rows() != numerals::kListSize) {
    throw ContractError("magnitude probe expects a list of " + std::to_string(numerals::kListSize));
  }
  std::vector<Tensor> inputs;
  for (std::size_t t = 0; t < numerals::kListSize; ++t) inputs.push_back(tape.slice_rows(embeddings, t, 1));
  const auto fw = run_lstm(tape, probe.fw_x, probe.fw_h, probe.fw_b, inputs, probe.hidden, false);
  const auto bw = run_lstm(tape, probe.bw_x, probe.bw_h, probe.bw_b, inputs, probe.hidden, true);
  std::vector<Tensor> rows;
  for (std::size_t t = 0; t < numerals::kListSize; ++t) rows.push_back(tape.concat_cols({fw[t], bw[t]}));
  Tensor scores = tape.add_bias(tape.matmul(tape.concat_rows(rows), probe.score_w), probe.score_b);
  return tape.log_softmax(tape.transpose(scores));
}

std::array<double, numerals::kListSize> probe_magnitude(const BiLstmProbe& probe,
                                                        const Tensor& embeddings) {
  Tape tape;
  Tensor p = tape.softmax(tape.transpose(tape.transpose(probe_log_probs(tape, probe, embeddings))));
  std::array<double, numerals::kListSize> out{};
  std::copy_n(p.data().begin(), out.size(), out.begin());
  return out;
}

Tensor numeral_embedding(Tape& tape, const HierarchicalModel& model,
                         std::span<const std::size_t> span_ids) {
  return encode_sentence(tape, embed_tokens(tape, span_ids, model.token_embedding()),
                         model.token_blocks());
}

McExample encode_mc(const numerals::MagnitudeInstance& instance, const text::Vocabulary& vocab) {
  McExample ex;
  for (std::size_t i = 0; i < numerals::kListSize; ++i) {
    for (const auto& tok : instance.tokens[i]) ex.spans[i].push_back(vocab.id(tok));
    if (ex.spans[i].empty()) throw ContractError("magnitude instance with an empty numeral span");
  }
  ex.category = instance.category;
  ex.label = numerals::argmax_lowest(instance.values);
  return ex;
}

namespace {

Tensor list_embeddings(Tape& tape, const HierarchicalModel& model, const McExample& ex) {
  std::vector<Tensor> rows;
  for (const auto& span : ex.spans) rows.push_back(numeral_embedding(tape, model, span));
  return tape.concat_rows(rows);
}

}  // namespace

std::map<std::string, double> evaluate_mc(const HierarchicalModel& model, const BiLstmProbe& probe,
                                          const std::vector<McExample>& examples) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (const char* k : {"monetary", "temporal", "percentage", "all"}) tally[k] = {0, 0};
  for (const McExample& ex : examples) {
    Tape tape;
    Tensor lp = probe_log_probs(tape, probe, list_embeddings(tape, model, ex));
    const std::size_t guess = numerals::argmax_lowest(lp.data());
    const bool hit = guess == ex.label;
    auto bump = [&](const std::string& key) {
      tally[key].first += hit ? 1 : 0;
      tally[key].second += 1;
    };
    bump("all");
    if (ex.category != numerals::Category::kOther) bump(numerals::category_name(ex.category));
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : tally) {
    out[k] = v.second ? static_cast<double>(v.first) / static_cast<double>(v.second)
                     : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<double> train_mc(const HierarchicalModel& model, const BiLstmProbe& probe,
                             const std::vector<Tensor>& trainable,
                             const std::vector<McExample>& examples, const StageConfig& config) {
  std::vector<Tensor> probe_tensors{probe.fw_x, probe.fw_h, probe.fw_b, probe.bw_x,
                                    probe.bw_h, probe.bw_b, probe.score_w, probe.score_b};
  return run_stage(model, trainable, probe_tensors, examples, config,
                   [&](Tape& tape, const McExample& ex) {
                     Tensor lp = probe_log_probs(tape, probe, list_embeddings(tape, model, ex));
                     return tape.scale(tape.pick(lp, 0, ex.label), -1.0);
                   });
}

std::vector<Tensor> mc_trainable(const HierarchicalModel& model) {
  const std::string frozen = "tok.block" + std::to_string(model.config().token_blocks - 1) + ".";
  std::vector<Tensor> out;
  const auto& names = model.params().names();
  for (const auto& n : names) {
    if (n.starts_with("tok.") && !n.starts_with(frozen)) out.push_back(model.params().get(n));
  }
  return out;
}

}  // namespace numcast::pretrain
