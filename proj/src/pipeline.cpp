#include "numcast/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "numcast/digest.hpp"
#include "numcast/errors.hpp"
#include "numcast/metrics.hpp"
#include "numcast/numerals.hpp"
#include "numcast/text.hpp"

namespace numcast::pipeline {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

const std::string& meta_at(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw ValidationError("checkpoint: missing meta key '" + key + "'");
  return it->second;
}

std::vector<text::Tokens> tokenized_sentences(const std::vector<data::CallRecord>& records) {
  std::vector<text::Tokens> out;
  for (const auto& r : records) {
    for (const auto& s : r.sentences) out.push_back(text::tokenize(s.text));
  }
  return out;
}

// Copies every token-encoder tensor of `source` into the model, checking shapes.
void adopt_token_encoder(HierarchicalModel& model, const ParameterStore& source) {
  for (const auto& name : model.params().names()) {
    if (!name.starts_with("tok.")) continue;
    if (!source.contains(name)) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    const Tensor& from = source.get(name);
    Tensor& to = model.params().get(name);
    if (from.rows() != to.rows() || from.cols() != to.cols()) {
      throw ValidationError("checkpoint: tensor '" + name + "' has shape " +
                            std::to_string(from.rows()) + "x" + std::to_string(from.cols()) +
                            ", model expects " + std::to_string(to.rows()) + "x" +
                            std::to_string(to.cols()));
    }
    std::copy(from.data().begin(), from.data().end(), to.data().begin());
  }
}

ParameterStore select_store(const ParameterStore& from, const std::vector<std::string>& prefixes) {
  ParameterStore out;
  for (const auto& name : from.names()) {
    for (const auto& p : prefixes) {
      if (name.starts_with(p)) {
        out.add(name, from.get(name).clone());
        break;
      }
    }
  }
  return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> holdout_split(std::vector<T> items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  const std::size_t cut = items.size() - items.size() / 5;
  std::vector<T> held(items.begin() + static_cast<std::ptrdiff_t>(cut), items.end());
  items.resize(cut);
  return {std::move(items), std::move(held)};
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "seed",        "corpus",        "out",          "pretrained",      "token_dim",
      "sentence_dim", "token_blocks", "sentence_blocks", "heads",        "max_sentences",
      "max_tokens",  "preferences",   "horizons",     "epochs",          "lr",
      "lr_decay",    "batch_size",    "ncc_epochs",   "mc_epochs",       "pretrain_lr",
      "mc_hidden",   "mc_rounds",     "pareto",       "pretrain",        "text_only"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "seed") seed = parse_size(key, value);
  else if (key == "corpus") corpus = value;
  else if (key == "out") out = value;
  else if (key == "pretrained") pretrained = value;
  else if (key == "token_dim") token_dim = parse_size(key, value);
  else if (key == "sentence_dim") sentence_dim = parse_size(key, value);
  else if (key == "token_blocks") token_blocks = parse_size(key, value);
  else if (key == "sentence_blocks") sentence_blocks = parse_size(key, value);
  else if (key == "heads") heads = parse_size(key, value);
  else if (key == "max_sentences") max_sentences = parse_size(key, value);
  else if (key == "max_tokens") max_tokens = parse_size(key, value);
  else if (key == "preferences") preferences = parse_size(key, value);
  else if (key == "horizons") horizons = parse_list(key, value);
  else if (key == "epochs") epochs = parse_size(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "lr_decay") lr_decay = parse_double(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "ncc_epochs") ncc_epochs = parse_size(key, value);
  else if (key == "mc_epochs") mc_epochs = parse_size(key, value);
  else if (key == "pretrain_lr") pretrain_lr = parse_double(key, value);
  else if (key == "mc_hidden") mc_hidden = parse_size(key, value);
  else if (key == "mc_rounds") mc_rounds = parse_size(key, value);
  else if (key == "pareto") pareto = parse_bool(key, value);
  else if (key == "pretrain") pretrain = parse_bool(key, value);
  else if (key == "text_only") text_only = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  auto positive = [](const char* name, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("token_dim", token_dim);
  positive("sentence_dim", sentence_dim);
  positive("token_blocks", token_blocks);
  positive("sentence_blocks", sentence_blocks);
  positive("heads", heads);
  positive("max_sentences", max_sentences);
  positive("max_tokens", max_tokens);
  positive("batch_size", batch_size);
  positive("mc_hidden", mc_hidden);
  positive("mc_rounds", mc_rounds);
  if (preferences < 2) throw ConfigError("preferences (K) must be at least 2");
  if (horizons.empty()) throw ConfigError("horizons must not be empty");
  for (std::size_t h : horizons) data::horizon_index(h);
  if (!(lr > 0.0) || !(pretrain_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw ConfigError("lr_decay must lie in (0, 1]");
  encoder(8).validate();
}

EncoderConfig RunConfig::encoder(std::size_t vocab_size) const {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.token_dim = token_dim;
  c.sentence_dim = sentence_dim;
  c.token_blocks = token_blocks;
  c.sentence_blocks = sentence_blocks;
  c.heads = heads;
  c.max_sentences = max_sentences;
  c.max_tokens = max_tokens;
  return c;
}

std::string RunConfig::pretrained_path() const {
  return pretrained.empty() ? out + "/pretrain_mc.ckpt" : pretrained;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  return {{"seed", std::to_string(seed)},
          {"corpus", corpus},
          {"out", out},
          {"pretrained", pretrained},
          {"token_dim", std::to_string(token_dim)},
          {"sentence_dim", std::to_string(sentence_dim)},
          {"token_blocks", std::to_string(token_blocks)},
          {"sentence_blocks", std::to_string(sentence_blocks)},
          {"heads", std::to_string(heads)},
          {"max_sentences", std::to_string(max_sentences)},
          {"max_tokens", std::to_string(max_tokens)},
          {"preferences", std::to_string(preferences)},
          {"horizons", join(horizons)},
          {"epochs", std::to_string(epochs)},
          {"lr", format_double(lr)},
          {"lr_decay", format_double(lr_decay)},
          {"batch_size", std::to_string(batch_size)},
          {"ncc_epochs", std::to_string(ncc_epochs)},
          {"mc_epochs", std::to_string(mc_epochs)},
          {"pretrain_lr", format_double(pretrain_lr)},
          {"mc_hidden", std::to_string(mc_hidden)},
          {"mc_rounds", std::to_string(mc_rounds)},
          {"pareto", pareto ? "true" : "false"},
          {"pretrain", pretrain ? "true" : "false"},
          {"text_only", text_only ? "true" : "false"}};
}

std::string RunConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : to_map()) text += k + "=" + v + "\n";
  return sha1_hex(text);
}

void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key=value");
    }
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  apply_config_text(config, in, path);
}

CorpusSummary summarize_corpus(const std::vector<data::CallRecord>& records) {
  CorpusSummary s;
  s.calls = records.size();
  for (const auto& r : records) {
    s.sentences += r.sentences.size();
    for (const auto& sentence : r.sentences) {
      for (const auto& span : numerals::detect_numerals(text::tokenize(sentence.text))) {
        for (std::size_t c = 0; c < numerals::kCategoryCount; ++c) {
          if (span.categories.test(c)) ++s.numerals[c];
        }
      }
    }
  }
  return s;
}

void write_summary(std::ostream& out, const CorpusSummary& summary) {
  out << "calls=" << summary.calls << "\n";
  out << "sentences=" << summary.sentences << "\n";
  for (std::size_t c = 0; c < numerals::kCategoryCount; ++c) {
    out << "numerals." << numerals::category_name(static_cast<numerals::Category>(c)) << "="
        << summary.numerals[c] << "\n";
  }
}

// ---------------------------------------------------------------------------

Normalizer Normalizer::fit(const std::vector<data::CallRecord>& train, std::size_t horizon) {
  if (train.empty()) throw ContractError("normalizer: empty training split");
  const std::size_t h = data::horizon_index(horizon);
  Normalizer n;
  std::array<double, data::kAudioDims> sum{}, sq{};
  std::size_t rows = 0;
  for (const auto& r : train) {
    for (const auto& s : r.sentences) {
      for (std::size_t f = 0; f < data::kAudioDims; ++f) {
        sum[f] += s.audio[f];
        sq[f] += s.audio[f] * s.audio[f];
      }
      ++rows;
    }
  }
  for (std::size_t f = 0; f < data::kAudioDims; ++f) {
    n.audio_mean[f] = sum[f] / static_cast<double>(rows);
    const double var = sq[f] / static_cast<double>(rows) - n.audio_mean[f] * n.audio_mean[f];
    n.audio_std[f] = var > 1e-16 ? std::sqrt(var) : 1.0;
  }
  double r2 = 0.0, v = 0.0, v2 = 0.0;
  for (const auto& r : train) {
    const auto l = data::compute_labels(r);
    r2 += l.ret[h] * l.ret[h];
    v += l.volatility[h];
    v2 += l.volatility[h] * l.volatility[h];
  }
  const double count = static_cast<double>(train.size());
  n.return_scale = r2 > 0.0 ? std::sqrt(r2 / count) : 1.0;
  n.volatility_mean = v / count;
  const double vvar = v2 / count - n.volatility_mean * n.volatility_mean;
  n.volatility_std = vvar > 1e-16 ? std::sqrt(vvar) : 1.0;
  return n;
}

void Normalizer::write(std::map<std::string, std::string>& meta) const {
  auto list = [](const auto& a) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + format_double(a[i]);
    return s;
  };
  meta["norm.audio_mean"] = list(audio_mean);
  meta["norm.audio_std"] = list(audio_std);
  meta["norm.return_scale"] = format_double(return_scale);
  meta["norm.volatility_mean"] = format_double(volatility_mean);
  meta["norm.volatility_std"] = format_double(volatility_std);
}

Normalizer Normalizer::read(const std::map<std::string, std::string>& meta) {
  Normalizer n;
  try {
    const auto mean = parse_doubles("norm.audio_mean", meta_at(meta, "norm.audio_mean"));
    const auto sd = parse_doubles("norm.audio_std", meta_at(meta, "norm.audio_std"));
    if (mean.size() != data::kAudioDims || sd.size() != data::kAudioDims) {
      throw ValidationError("checkpoint: audio normalizer must have " +
                            std::to_string(data::kAudioDims) + " entries");
    }
    std::copy(mean.begin(), mean.end(), n.audio_mean.begin());
    std::copy(sd.begin(), sd.end(), n.audio_std.begin());
    n.return_scale = parse_double("norm.return_scale", meta_at(meta, "norm.return_scale"));
    n.volatility_mean = parse_double("norm.volatility_mean", meta_at(meta, "norm.volatility_mean"));
    n.volatility_std = parse_double("norm.volatility_std", meta_at(meta, "norm.volatility_std"));
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  return n;
}

std::vector<Example> prepare_examples(const std::vector<data::CallRecord>& records,
                                      const HierarchicalModel& model,
                                      const text::Vocabulary& vocab, const Normalizer& norm,
                                      std::size_t horizon) {
  const std::size_t h = data::horizon_index(horizon);
  const auto& cfg = model.config();
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.sentences.empty()) throw ContractError("record " + r.id + " has no sentences");
    Example ex;
    const std::size_t n = std::min(r.sentences.size(), cfg.max_sentences);
    std::vector<double> audio(n * data::kAudioDims);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = r.sentences[i];
      ex.doc.sentences.push_back(vocab.encode(text::tokenize(s.text), cfg.max_tokens));
      for (std::size_t f = 0; f < data::kAudioDims; ++f) {
        audio[i * data::kAudioDims + f] = (s.audio[f] - norm.audio_mean[f]) / norm.audio_std[f];
      }
    }
    ex.doc.audio = Tensor({n, data::kAudioDims}, std::move(audio));
    {
      Tape tape;
      const Tensor t = model.sentence_texts(tape, ex.doc.sentences);
      ex.doc.text_cache =
          Tensor({t.rows(), t.cols()}, std::vector<double>(t.data().begin(), t.data().end()));
    }
    const auto labels = data::compute_labels(r);
    ex.ret = labels.ret[h];
    ex.volatility = labels.volatility[h];
    ex.ret_target = ex.ret / norm.return_scale;
    ex.volatility_target = (ex.volatility - norm.volatility_mean) / norm.volatility_std;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

ModelObjective::ModelObjective(HierarchicalModel model, const std::vector<Example>& examples,
                               std::size_t batch_size, std::uint64_t seed, bool audio_enabled)
    : model_(std::move(model)),
      examples_(&examples),
      batch_size_(std::max<std::size_t>(batch_size, 1)),
      seed_(seed),
      audio_enabled_(audio_enabled),
      order_(examples.size()) {
  if (examples.empty()) throw ContractError("objective: no training examples");
  upper_ = model_.params().select(HierarchicalModel::upper_prefixes());
  auto frozen = model_.params().select(HierarchicalModel::token_prefixes());
  set_requires_grad(frozen, false);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t ModelObjective::dimension() const {
  std::size_t n = 0;
  for (const Tensor& t : upper_) n += t.size();
  return n;
}

std::size_t ModelObjective::batch_count() const {
  return (examples_->size() + batch_size_ - 1) / batch_size_;
}

void ModelObjective::begin_epoch(std::size_t epoch) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::mt19937_64 rng(seed_ * 0x9e3779b97f4a7c15ULL + epoch + 1);
  std::shuffle(order_.begin(), order_.end(), rng);
}

pareto::Evaluation ModelObjective::evaluate(std::span<const double> theta, std::size_t batch) {
  if (batch >= batch_count()) throw ContractError("objective: batch index out of range");
  assign_values(upper_, theta);
  const std::size_t start = batch * batch_size_;
  const std::size_t end = std::min(examples_->size(), start + batch_size_);
  Tape tape;
  std::vector<Prediction> preds;
  std::vector<double> rt, vt;
  for (std::size_t i = start; i < end; ++i) {
    const Example& ex = (*examples_)[order_[i]];
    preds.push_back(model_.forward(tape, ex.doc, audio_enabled_));
    rt.push_back(ex.ret_target);
    vt.push_back(ex.volatility_target);
  }
  const TaskLosses losses = task_losses(tape, preds, rt, vt);
  pareto::Evaluation e;
  e.losses = {losses.ret.item(), losses.volatility.item()};
  zero_grads(upper_);
  tape.backward(losses.ret);
  e.grad1 = flatten_grads(upper_);
  zero_grads(upper_);
  tape.backward(losses.volatility);
  e.grad2 = flatten_grads(upper_);
  zero_grads(upper_);
  return e;
}

pareto::Vec2 ModelObjective::full_losses(std::span<const double> theta) {
  assign_values(upper_, theta);
  const auto preds = predict_normalized(model_, *examples_, audio_enabled_);
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Example& ex = (*examples_)[i];
    l1 += (preds[i][0] - ex.ret_target) * (preds[i][0] - ex.ret_target);
    l2 += (preds[i][1] - ex.volatility_target) * (preds[i][1] - ex.volatility_target);
  }
  const double n = static_cast<double>(preds.size());
  return {l1 / n, l2 / n};
}

std::vector<double> ModelObjective::theta() const { return flatten_values(upper_); }

std::vector<std::array<double, 2>> predict_normalized(const HierarchicalModel& model,
                                                      const std::vector<Example>& examples,
                                                      bool audio_enabled) {
  std::vector<std::array<double, 2>> out;
  out.reserve(examples.size());
  for (const Example& ex : examples) {
    Tape tape;
    const Prediction p = model.forward(tape, ex.doc, audio_enabled);
    out.push_back({p.ret.item(), p.volatility.item()});
  }
  return out;
}

// ---------------------------------------------------------------------------

NccStage pretrain_ncc(const RunConfig& config, const std::vector<data::CallRecord>& train) {
  config.validate();
  const auto sentences = tokenized_sentences(train);
  const text::Vocabulary vocab = text::Vocabulary::build(sentences);
  HierarchicalModel model(config.encoder(vocab.size()), config.seed);
  ParameterStore heads;
  std::mt19937_64 rng(config.seed ^ 0x6e6363ULL);
  const pretrain::NccHead head = pretrain::NccHead::create(heads, config.token_dim, rng);

  std::vector<pretrain::NccExample> examples;
  for (const auto& inst : numerals::make_ncc_instances(sentences)) {
    if (inst.mask_index + 1 < config.max_tokens) {
      examples.push_back(pretrain::encode_ncc(inst, vocab, config.max_tokens));
    }
  }
  if (examples.size() < 5) {
    throw ValidationError("category pre-training needs numerals; the training split has " +
                          std::to_string(examples.size()));
  }
  auto [fit, held] = holdout_split(std::move(examples), config.seed);

  NccStage stage;
  stage.before = pretrain::evaluate_ncc(model, head, held);
  auto trainable = model.params().select(HierarchicalModel::token_prefixes());
  trainable.push_back(head.weight);
  trainable.push_back(head.bias);
  stage.losses = pretrain::train_ncc(
      model, head, trainable, fit,
      {config.ncc_epochs, config.pretrain_lr, config.lr_decay, config.batch_size, config.seed});
  stage.after = pretrain::evaluate_ncc(model, head, held);

  Checkpoint& ck = stage.checkpoint;
  ck.meta["stage"] = "ncc";
  ck.meta["seed"] = std::to_string(config.seed);
  write_config(ck.meta, model.config());
  ck.vocab = vocab.tokens();
  ck.tensors = select_store(model.params(), HierarchicalModel::token_prefixes());
  for (const auto& name : heads.names()) ck.tensors.add(name, heads.get(name).clone());
  return stage;
}

McStage pretrain_mc(const RunConfig& config, const std::vector<data::CallRecord>& train,
                    const Checkpoint& ncc) {
  config.validate();
  const auto stage_it = ncc.meta.find("stage");
  if (stage_it == ncc.meta.end() || stage_it->second != "ncc") {
    throw ValidationError("magnitude pre-training needs a category-stage checkpoint");
  }
  const text::Vocabulary vocab = text::Vocabulary::from_tokens(ncc.vocab);
  HierarchicalModel model(config.encoder(vocab.size()), config.seed);
  adopt_token_encoder(model, ncc.tensors);

  ParameterStore probes;
  std::mt19937_64 rng(config.seed ^ 0x6d63ULL);
  const pretrain::BiLstmProbe probe =
      pretrain::BiLstmProbe::create(probes, config.token_dim, config.mc_hidden, rng);

  const auto draw =
      numerals::make_magnitude_instances(tokenized_sentences(train), config.seed, config.mc_rounds);
  std::vector<pretrain::McExample> examples;
  for (const auto& inst : draw.instances) examples.push_back(pretrain::encode_mc(inst, vocab));
  if (examples.size() < 5) {
    throw ValidationError("magnitude pre-training needs numeral lists; the training split yields " +
                          std::to_string(examples.size()));
  }
  auto [fit, held] = holdout_split(std::move(examples), config.seed + 1);

  auto trainable = pretrain::mc_trainable(model);
  for (const auto& name : probes.names()) trainable.push_back(probes.get(name));
  McStage stage;
  stage.losses = pretrain::train_mc(
      model, probe, trainable, fit,
      {config.mc_epochs, config.pretrain_lr, config.lr_decay, config.batch_size, config.seed});
  stage.accuracy = pretrain::evaluate_mc(model, probe, held);

  Checkpoint& ck = stage.checkpoint;
  ck.meta["stage"] = "mc";
  ck.meta["seed"] = std::to_string(config.seed);
  write_config(ck.meta, model.config());
  ck.vocab = vocab.tokens();
  ck.tensors = select_store(model.params(), HierarchicalModel::token_prefixes());
  for (const auto& name : probes.names()) ck.tensors.add(name, probes.get(name).clone());
  return stage;
}

// ---------------------------------------------------------------------------

HorizonModel train_horizon(const RunConfig& config, const data::Split& split,
                           const Checkpoint* pretrained, std::size_t horizon) {
  config.validate();
  if (split.train.empty() || split.valid.empty()) {
    throw ContractError("training needs non-empty train and validation splits");
  }
  text::Vocabulary vocab;
  if (pretrained) {
    const auto it = pretrained->meta.find("stage");
    if (it == pretrained->meta.end() || it->second != "mc") {
      throw ValidationError("pre-trained checkpoint is not from the magnitude stage");
    }
    vocab = text::Vocabulary::from_tokens(pretrained->vocab);
  } else {
    vocab = text::Vocabulary::build(tokenized_sentences(split.train));
  }
  HierarchicalModel model(config.encoder(vocab.size()), config.seed);
  if (pretrained) adopt_token_encoder(model, pretrained->tensors);

  const Normalizer norm = Normalizer::fit(split.train, horizon);
  const auto train_ex = prepare_examples(split.train, model, vocab, norm, horizon);
  const auto valid_ex = prepare_examples(split.valid, model, vocab, norm, horizon);
  const bool audio = !config.text_only;

  auto upper = model.params().select(HierarchicalModel::upper_prefixes());
  const std::vector<double> theta0 = flatten_values(upper);
  ModelObjective reference(model.clone(), train_ex, config.batch_size, config.seed, audio);
  const pareto::Vec2 scale = pareto::loss_scale(reference, theta0);

  pareto::TrainerConfig tc;
  tc.epochs = config.epochs;
  tc.lr = config.lr;
  tc.lr_decay = config.lr_decay;
  const pareto::PreferenceSet prefs = pareto::make_preferences(config.preferences);

  std::vector<pareto::SubproblemResult> results;
  if (config.pareto) {
    const pareto::ProblemFactory factory = [&](std::size_t) {
      return std::make_unique<ModelObjective>(model.clone(), train_ex, config.batch_size,
                                              config.seed, audio);
    };
    results = pareto::train_all_parallel(factory, theta0, prefs, scale, tc);
    const bool any = std::any_of(results.begin(), results.end(),
                                 [](const auto& r) { return r.initial.feasible; });
    if (!any) {
      std::ostringstream report;
      report << "no preference sub-problem found a feasible initial solution:";
      for (const auto& r : results) {
        report << " k=" << r.k << " losses=(" << r.initial.losses[0] << "," << r.initial.losses[1]
               << ") iterations=" << r.initial.iterations << ";";
      }
      throw NumericError(report.str());
    }
  } else {
    tc.fixed_alpha = true;
    tc.alpha = {0.5, 0.5};
    ModelObjective problem(model.clone(), train_ex, config.batch_size, config.seed, audio);
    results.push_back(pareto::train_pareto(problem, theta0, prefs, 0, scale, tc));
  }

  HorizonModel out;
  out.horizon = horizon;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    assign_values(upper, r.theta);
    const auto preds = predict_normalized(model, valid_ex, audio);
    double mse = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double d = preds[i][0] - valid_ex[i].ret_target;
      mse += d * d;
    }
    mse /= static_cast<double>(preds.size());
    out.subproblems.push_back({r.k, r.initial.feasible, r.feasible, r.losses, mse,
                               pareto::termination_name(r.termination)});
    if (mse < best) {
      best = mse;
      out.selected_k = r.k;
    }
    out.trajectory.insert(out.trajectory.end(), r.trajectory.begin(), r.trajectory.end());
  }
  for (const auto& r : results) {
    if (r.k == out.selected_k) assign_values(upper, r.theta);
  }

  Checkpoint& ck = out.checkpoint;
  ck.meta["stage"] = "model";
  ck.meta["horizon"] = std::to_string(horizon);
  ck.meta["text_only"] = config.text_only ? "true" : "false";
  ck.meta["pareto"] = config.pareto ? "true" : "false";
  ck.meta["pretrained"] = pretrained ? "true" : "false";
  ck.meta["selected_k"] = std::to_string(out.selected_k);
  ck.meta["config_hash"] = config.hash();
  write_config(ck.meta, model.config());
  norm.write(ck.meta);
  ck.vocab = vocab.tokens();
  ck.tensors = model.params().clone();
  return out;
}

Predictor Predictor::from_checkpoint(const Checkpoint& checkpoint) {
  const auto stage = checkpoint.meta.find("stage");
  if (stage == checkpoint.meta.end() || stage->second != "model") {
    throw ValidationError("checkpoint does not hold a trained forecasting model");
  }
  Predictor p;
  try {
    p.horizon = parse_size("horizon", meta_at(checkpoint.meta, "horizon"));
    p.audio_enabled = !parse_bool("text_only", meta_at(checkpoint.meta, "text_only"));
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  data::horizon_index(p.horizon);
  p.vocab = text::Vocabulary::from_tokens(checkpoint.vocab);
  p.norm = Normalizer::read(checkpoint.meta);
  p.model = HierarchicalModel(read_config(checkpoint.meta), checkpoint.tensors.clone());
  return p;
}

std::vector<std::array<double, 2>> Predictor::predict(
    const std::vector<data::CallRecord>& records) const {
  const auto examples = prepare_examples(records, model, vocab, norm, horizon);
  auto preds = predict_normalized(model, examples, audio_enabled);
  for (auto& p : preds) {
    p[0] *= norm.return_scale;
    p[1] = p[1] * norm.volatility_std + norm.volatility_mean;
  }
  return preds;
}

HorizonMetrics score(std::size_t horizon, const std::vector<data::CallRecord>& records,
                     const std::vector<std::array<double, 2>>& predictions) {
  if (records.size() != predictions.size()) {
    throw DimensionError("score: prediction count does not match the records");
  }
  const std::size_t h = data::horizon_index(horizon);
  std::vector<int> predicted, actual;
  std::vector<double> vp, vt, rp, rt;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto l = data::compute_labels(records[i]);
    predicted.push_back(predicts_rise(predictions[i][0]) ? 1 : 0);
    actual.push_back(l.rise[h]);
    rp.push_back(predictions[i][0]);
    rt.push_back(l.ret[h]);
    vp.push_back(predictions[i][1]);
    vt.push_back(l.volatility[h]);
  }
  HorizonMetrics m;
  m.horizon = horizon;
  m.instances = records.size();
  if (records.empty()) return m;
  const auto cm = metrics::ConfusionMatrix::tally(predicted, actual);
  m.mcc = metrics::mcc(cm);
  m.f1 = metrics::f1(cm);
  m.volatility_mse = metrics::mse(vp, vt);
  m.return_mse = metrics::mse(rp, rt);
  return m;
}

void write_report(std::ostream& out, const std::vector<HorizonMetrics>& rows) {
  for (const auto& r : rows) {
    const std::string n = std::to_string(r.horizon);
    out << "horizon=" << n << " MCC_" << n << "=" << format_double(r.mcc) << " F1_" << n << "="
        << format_double(r.f1) << " volatility_MSE_" << n << "=" << format_double(r.volatility_mse)
        << " return_MSE_" << n << "=" << format_double(r.return_mse)
        << " instances=" << r.instances << "\n";
  }
}

// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const RunConfig& config,
                                const std::vector<data::CallRecord>& corpus) {
  config.validate();
  const data::Split split = data::split_chronological(corpus);
  ExperimentResult result;
  const Checkpoint* pretrained = nullptr;
  if (config.pretrain) {
    result.ncc = pretrain_ncc(config, split.train);
    result.mc = pretrain_mc(config, split.train, result.ncc->checkpoint);
    pretrained = &result.mc->checkpoint;
  }
  for (std::size_t h : config.horizons) {
    result.models.push_back(train_horizon(config, split, pretrained, h));
    const Predictor p = Predictor::from_checkpoint(result.models.back().checkpoint);
    result.test.push_back(score(h, split.test, p.predict(split.test)));
  }
  return result;
}

trading::TradeLedger simulate_model(const Predictor& predictor,
                                    const std::vector<data::CallRecord>& records,
                                    std::size_t holding_days) {
  const auto preds = predictor.predict(records);
  std::vector<trading::MarketEvent> events;
  std::vector<int> rise;
  for (std::size_t i = 0; i < records.size(); ++i) {
    events.push_back(data::market_event(records[i]));
    rise.push_back(predicts_rise(preds[i][0]) ? 1 : 0);
  }
  return trading::simulate(events, rise, holding_days);
}

}  // namespace numcast::pipeline
