#include "numcast/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "numcast/errors.hpp"

namespace numcast {

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("vocabulary size must be positive");
  if (token_dim == 0 || sentence_dim == 0) throw ConfigError("model widths must be positive");
  if (heads == 0 || token_dim % heads != 0 || sentence_dim % heads != 0) {
    throw ConfigError("head count must divide both model widths");
  }
  if (token_blocks < 2) {
    throw ConfigError("the token-level encoder needs at least 2 blocks (second-last layer pooling)");
  }
  if (sentence_blocks < 1) throw ConfigError("the sentence-level encoder needs a block");
  if (max_sentences == 0 || max_tokens < 2) throw ConfigError("sequence limits too small");
  if (ffn_multiplier == 0) throw ConfigError("feed-forward multiplier must be positive");
}

// --------------------------------------------------------------------------

Tensor& ParameterStore::add(const std::string& name, Tensor tensor) {
  if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  names_.push_back(name);
  return index_.emplace(name, std::move(tensor)).first->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("missing parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("missing parameter '" + name + "'");
  return it->second;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(names_.size());
  for (const auto& n : names_) out.push_back(index_.at(n));
  return out;
}

std::vector<Tensor> ParameterStore::select(const std::vector<std::string>& prefixes) const {
  std::vector<Tensor> out;
  for (const auto& n : names_) {
    for (const auto& p : prefixes) {
      if (n.starts_with(p)) {
        out.push_back(index_.at(n));
        break;
      }
    }
  }
  return out;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : index_) n += t.size();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy;
  for (const auto& n : names_) copy.add(n, index_.at(n).clone());
  return copy;
}

std::vector<double> flatten_values(const std::vector<Tensor>& tensors) {
  std::vector<double> out;
  for (const Tensor& t : tensors) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::vector<double> flatten_grads(const std::vector<Tensor>& tensors) {
  std::vector<double> out;
  for (const Tensor& t : tensors) {
    if (t.has_grad()) {
      out.insert(out.end(), t.grad().begin(), t.grad().end());
    } else {
      out.insert(out.end(), t.size(), 0.0);
    }
  }
  return out;
}

void assign_values(std::vector<Tensor>& tensors, std::span<const double> flat) {
  std::size_t offset = 0;
  for (Tensor& t : tensors) {
    if (offset + t.size() > flat.size()) throw DimensionError("assign_values: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data().begin());
    offset += t.size();
  }
  if (offset != flat.size()) throw DimensionError("assign_values: vector too long");
}

void zero_grads(std::vector<Tensor>& tensors) {
  for (Tensor& t : tensors) t.zero_grad();
}

void set_requires_grad(std::vector<Tensor>& tensors, bool flag) {
  for (Tensor& t : tensors) t.set_requires_grad(flag);
}

// --------------------------------------------------------------------------

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(rows * cols);
  for (double& v : data) v = dist(rng);
  return Tensor({rows, cols}, std::move(data), true);
}

Tensor zero_matrix(std::size_t rows, std::size_t cols) {
  return Tensor::zeros({rows, cols}, true);
}

Tensor key_mask_tensor(std::size_t n, const std::vector<bool>& key_mask) {
  std::vector<double> data(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!key_mask[j]) data[i * n + j] = kMaskedScore;
  return Tensor({n, n}, std::move(data));
}

}  // namespace

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& prefix,
                                          std::size_t dim, std::size_t heads,
                                          std::size_t ffn_dim, std::mt19937_64& rng) {
  const double s_in = 1.0 / std::sqrt(static_cast<double>(dim));
  const double s_ff = 1.0 / std::sqrt(static_cast<double>(ffn_dim));
  store.add(prefix + "w_qkv", random_matrix(dim, 3 * dim, s_in, rng));
  store.add(prefix + "b_qkv", zero_matrix(1, 3 * dim));
  store.add(prefix + "w_out", random_matrix(dim, dim, 0.5 * s_in, rng));
  store.add(prefix + "b_out", zero_matrix(1, dim));
  store.add(prefix + "w_ff1", random_matrix(dim, ffn_dim, s_in, rng));
  store.add(prefix + "b_ff1", zero_matrix(1, ffn_dim));
  store.add(prefix + "w_ff2", random_matrix(ffn_dim, dim, 0.5 * s_ff, rng));
  store.add(prefix + "b_ff2", zero_matrix(1, dim));
  return bind(store, prefix, heads);
}

TransformerBlock TransformerBlock::bind(ParameterStore& store, const std::string& prefix,
                                        std::size_t heads) {
  TransformerBlock b;
  b.w_qkv_ = store.get(prefix + "w_qkv");
  b.b_qkv_ = store.get(prefix + "b_qkv");
  b.w_out_ = store.get(prefix + "w_out");
  b.b_out_ = store.get(prefix + "b_out");
  b.w_ff1_ = store.get(prefix + "w_ff1");
  b.b_ff1_ = store.get(prefix + "b_ff1");
  b.w_ff2_ = store.get(prefix + "w_ff2");
  b.b_ff2_ = store.get(prefix + "b_ff2");
  b.heads_ = heads;
  const std::size_t dim = b.w_qkv_.rows();
  if (b.w_qkv_.cols() != 3 * dim || dim % heads != 0) {
    throw ValidationError("block '" + prefix + "' has inconsistent attention shapes");
  }
  return b;
}

Tensor TransformerBlock::forward(Tape& tape, const Tensor& x,
                                 const std::vector<bool>& key_mask) const {
  const std::size_t n = x.rows(), dim = x.cols();
  if (dim != w_qkv_.rows()) throw DimensionError("transformer block: input width mismatch");
  if (!key_mask.empty() && key_mask.size() != n) {
    throw DimensionError("transformer block: key mask length mismatch");
  }
  const std::size_t head_dim = dim / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor h = tape.layer_norm(x);
  Tensor qkv = tape.add_bias(tape.matmul(h, w_qkv_), b_qkv_);
  Tensor mask;
  if (!key_mask.empty()) mask = key_mask_tensor(n, key_mask);
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t i = 0; i < heads_; ++i) {
    Tensor q = tape.slice_cols(qkv, i * head_dim, head_dim);
    Tensor k = tape.slice_cols(qkv, dim + i * head_dim, head_dim);
    Tensor v = tape.slice_cols(qkv, 2 * dim + i * head_dim, head_dim);
    Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt);
    if (mask.defined()) scores = tape.add(scores, mask);
    heads.push_back(tape.matmul(tape.softmax(scores), v));
  }
  Tensor attended = heads.size() == 1 ? heads.front() : tape.concat_cols(heads);
  Tensor y = tape.add(x, tape.add_bias(tape.matmul(attended, w_out_), b_out_));

  Tensor h2 = tape.layer_norm(y);
  Tensor ff = tape.relu(tape.add_bias(tape.matmul(h2, w_ff1_), b_ff1_));
  ff = tape.add_bias(tape.matmul(ff, w_ff2_), b_ff2_);
  return tape.add(y, ff);
}

void TransformerBlock::make_identity() {
  for (Tensor* t : {&w_out_, &b_out_, &w_ff2_, &b_ff2_}) {
    std::fill(t->data().begin(), t->data().end(), 0.0);
  }
}

Tensor embed_tokens(Tape& tape, std::span<const std::size_t> ids,
                    const TokenEmbedding& embedding) {
  if (ids.size() > embedding.positions.rows()) {
    throw ContractError("embed_tokens: sequence of " + std::to_string(ids.size()) +
                        " tokens exceeds the position table");
  }
  Tensor tokens = tape.embedding_lookup(embedding.table, ids);
  Tensor positions = tape.slice_rows(embedding.positions, 0, ids.size());
  return tape.add(tokens, positions);
}

Tensor encode_sentence(Tape& tape, const Tensor& embedded,
                       const std::vector<TransformerBlock>& blocks) {
  if (blocks.size() < 2) {
    throw ConfigError("encode_sentence: need at least 2 blocks to pool the second-last layer");
  }
  Tensor x = embedded;
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) x = blocks[i].forward(tape, x);
  return tape.mean_pool(x);
}

Tensor fuse(Tape& tape, const Tensor& text, const Tensor& audio, const Tensor& projection,
            const Tensor& positions) {
  if (audio.cols() != kAudioFeatures) {
    throw ContractError("fuse: audio vectors must have " + std::to_string(kAudioFeatures) +
                        " features, got " + std::to_string(audio.cols()));
  }
  if (text.rows() != audio.rows()) throw DimensionError("fuse: text/audio row counts differ");
  if (text.rows() > positions.rows()) {
    throw ContractError("fuse: more sentences than sentence positions");
  }
  Tensor joined = tape.concat_cols({text, audio});
  Tensor projected = tape.matmul(joined, projection);
  return tape.add(projected, tape.slice_rows(positions, 0, text.rows()));
}

DocumentRepr pad_document(Tape& tape, const Tensor& fused, std::size_t max_sentences) {
  const std::size_t n = fused.rows();
  if (n == 0 || n > max_sentences) {
    throw ContractError("pad_document: document has " + std::to_string(n) +
                        " sentences, limit " + std::to_string(max_sentences));
  }
  DocumentRepr doc;
  doc.mask.assign(max_sentences, false);
  std::fill(doc.mask.begin(), doc.mask.begin() + static_cast<std::ptrdiff_t>(n), true);
  if (n == max_sentences) {
    doc.rows = fused;
  } else {
    doc.rows = tape.concat_rows({fused, Tensor::zeros({max_sentences - n, fused.cols()})});
  }
  return doc;
}

Tensor encode_document(Tape& tape, const DocumentRepr& doc,
                       const std::vector<TransformerBlock>& blocks) {
  if (doc.mask.size() != doc.rows.rows()) {
    throw ContractError("encode_document: padding mask does not match row count");
  }
  if (std::find(doc.mask.begin(), doc.mask.end(), true) == doc.mask.end()) {
    throw ContractError("encode_document: every sentence slot is padding");
  }
  Tensor x = doc.rows;
  for (const TransformerBlock& b : blocks) x = b.forward(tape, x, doc.mask);
  return tape.masked_mean_pool(x, doc.mask);
}

// --------------------------------------------------------------------------

HierarchicalModel::HierarchicalModel(const EncoderConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t dt = config_.token_dim, ds = config_.sentence_dim;
  store_.add("tok.embed", random_matrix(config_.vocab_size, dt, 0.5, rng));
  store_.add("tok.pos", random_matrix(config_.max_tokens, dt, 0.1, rng));
  for (std::size_t i = 0; i < config_.token_blocks; ++i) {
    TransformerBlock::create(store_, "tok.block" + std::to_string(i) + ".", dt, config_.heads,
                             dt * config_.ffn_multiplier, rng);
  }
  store_.add("fuse.w", random_matrix(dt + kAudioFeatures, ds,
                                     1.0 / std::sqrt(static_cast<double>(dt + kAudioFeatures)), rng));
  store_.add("sent.pos", random_matrix(config_.max_sentences, ds, 0.1, rng));
  for (std::size_t i = 0; i < config_.sentence_blocks; ++i) {
    TransformerBlock::create(store_, "sent.block" + std::to_string(i) + ".", ds, config_.heads,
                             ds * config_.ffn_multiplier, rng);
  }
  store_.add("head.ret.w", random_matrix(ds, 1, 0.01, rng));
  store_.add("head.ret.b", zero_matrix(1, 1));
  store_.add("head.vol.w", random_matrix(ds, 1, 0.01, rng));
  store_.add("head.vol.b", zero_matrix(1, 1));
  bind();
}

HierarchicalModel::HierarchicalModel(const EncoderConfig& config, ParameterStore store)
    : config_(config), store_(std::move(store)) {
  config_.validate();
  bind();
}

HierarchicalModel HierarchicalModel::clone() const {
  return HierarchicalModel(config_, store_.clone());
}

void HierarchicalModel::bind() {
  embedding_.table = store_.get("tok.embed");
  embedding_.positions = store_.get("tok.pos");
  if (embedding_.table.rows() != config_.vocab_size ||
      embedding_.table.cols() != config_.token_dim ||
      embedding_.positions.rows() != config_.max_tokens) {
    throw ValidationError("token embedding shapes do not match the model configuration");
  }
  token_blocks_.clear();
  for (std::size_t i = 0; i < config_.token_blocks; ++i) {
    token_blocks_.push_back(
        TransformerBlock::bind(store_, "tok.block" + std::to_string(i) + ".", config_.heads));
  }
  sentence_blocks_.clear();
  for (std::size_t i = 0; i < config_.sentence_blocks; ++i) {
    sentence_blocks_.push_back(
        TransformerBlock::bind(store_, "sent.block" + std::to_string(i) + ".", config_.heads));
  }
  fuse_w_ = store_.get("fuse.w");
  sentence_positions_ = store_.get("sent.pos");
  ret_w_ = store_.get("head.ret.w");
  ret_b_ = store_.get("head.ret.b");
  vol_w_ = store_.get("head.vol.w");
  vol_b_ = store_.get("head.vol.b");
  if (fuse_w_.rows() != config_.token_dim + kAudioFeatures ||
      fuse_w_.cols() != config_.sentence_dim ||
      sentence_positions_.rows() != config_.max_sentences) {
    throw ValidationError("fusion shapes do not match the model configuration");
  }
}

std::vector<Tensor> HierarchicalModel::token_layers(Tape& tape,
                                                    std::span<const std::size_t> ids) const {
  std::vector<Tensor> outputs;
  Tensor x = embed_tokens(tape, ids, embedding_);
  for (const TransformerBlock& b : token_blocks_) {
    x = b.forward(tape, x);
    outputs.push_back(x);
  }
  return outputs;
}

Tensor HierarchicalModel::sentence_texts(
    Tape& tape, const std::vector<std::vector<std::size_t>>& sentences) const {
  if (sentences.empty()) throw ContractError("sentence_texts: no sentences");
  std::vector<Tensor> rows;
  rows.reserve(sentences.size());
  for (const auto& ids : sentences) {
    rows.push_back(encode_sentence(tape, embed_tokens(tape, ids, embedding_), token_blocks_));
  }
  return rows.size() == 1 ? rows.front() : tape.concat_rows(rows);
}

Prediction HierarchicalModel::forward(Tape& tape, const EncodedDocument& doc,
                                      bool audio_enabled) const {
  const std::size_t n = std::min(doc.sentences.size(), config_.max_sentences);
  if (n == 0) throw ContractError("forward: document has no sentences");
  Tensor text;
  if (doc.text_cache.defined()) {
    text = doc.text_cache.rows() == n ? doc.text_cache : tape.slice_rows(doc.text_cache, 0, n);
  } else {
    std::vector<std::vector<std::size_t>> head(doc.sentences.begin(),
                                               doc.sentences.begin() + static_cast<std::ptrdiff_t>(n));
    text = sentence_texts(tape, head);
  }
  Tensor audio;
  if (audio_enabled) {
    audio = doc.audio.rows() == n ? doc.audio : tape.slice_rows(doc.audio, 0, n);
  } else {
    audio = Tensor::zeros({n, kAudioFeatures});
  }
  Tensor fused = fuse(tape, text, audio, fuse_w_, sentence_positions_);
  DocumentRepr repr = pad_document(tape, fused, config_.max_sentences);
  return predict(tape, encode_document(tape, repr, sentence_blocks_));
}

Prediction HierarchicalModel::predict(Tape& tape, const Tensor& pooled) const {
  return {tape.add(tape.matmul(pooled, ret_w_), ret_b_),
          tape.add(tape.matmul(pooled, vol_w_), vol_b_)};
}

TaskLosses task_losses(Tape& tape, const std::vector<Prediction>& predictions,
                       std::span<const double> return_targets,
                       std::span<const double> volatility_targets) {
  const std::size_t n = predictions.size();
  if (n == 0) throw ContractError("task_losses: empty batch");
  if (return_targets.size() != n || volatility_targets.size() != n) {
    throw DimensionError("task_losses: target count does not match the batch");
  }
  std::vector<Tensor> ret, vol;
  for (const Prediction& p : predictions) {
    ret.push_back(p.ret);
    vol.push_back(p.volatility);
  }
  auto sq_error = [&](const std::vector<Tensor>& rows, std::span<const double> y) {
    Tensor yhat = n == 1 ? rows.front() : tape.concat_rows(rows);
    Tensor diff = tape.sub(yhat, Tensor({n, 1}, std::vector<double>(y.begin(), y.end())));
    return tape.mean(tape.mul(diff, diff));
  };
  return {sq_error(ret, return_targets), sq_error(vol, volatility_targets)};
}

Tensor weighted_loss(Tape& tape, const TaskLosses& losses, double alpha1, double alpha2) {
  return tape.add(tape.scale(losses.ret, alpha1), tape.scale(losses.volatility, alpha2));
}

std::vector<std::string> HierarchicalModel::token_prefixes() { return {"tok."}; }
std::vector<std::string> HierarchicalModel::upper_prefixes() {
  return {"fuse.", "sent.", "head."};
}

// --------------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  out << "numcast-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& [k, v] : checkpoint.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos ||
        v.find_first_of("\n") != std::string::npos) {
      throw ContractError("checkpoint meta entries must be single-line, key without spaces");
    }
    out << "meta " << k << ' ' << v << '\n';
  }
  out << "vocab " << checkpoint.vocab.size() << '\n';
  for (const auto& t : checkpoint.vocab) out << t << '\n';
  out << std::setprecision(17);
  for (const auto& name : checkpoint.tensors.names()) {
    const Tensor& t = checkpoint.tensors.get(name);
    out << "tensor " << name << ' ' << t.shape().size();
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
    auto values = t.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out << ' ';
      out << values[i];
    }
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
  Checkpoint cp;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ValidationError("checkpoint line " + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) throw ValidationError("checkpoint is empty");
  ++line_no;
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != "numcast-checkpoint") fail("not a checkpoint file");
    if (version != kCheckpointVersion) fail("unsupported checkpoint version " + std::to_string(version));
  }
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      cp.meta[key] = value;
    } else if (kind == "vocab") {
      std::size_t count = 0;
      if (!(ls >> count)) fail("bad vocab count");
      cp.vocab.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) fail("truncated vocabulary");
        ++line_no;
        cp.vocab.push_back(line);
      }
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank) || rank == 0) fail("bad tensor header");
      Shape shape(rank);
      for (auto& d : shape) {
        if (!(ls >> d) || d == 0) fail("bad tensor dimension");
      }
      if (!std::getline(in, line)) fail("missing tensor values for " + name);
      ++line_no;
      std::istringstream vs(line);
      std::vector<double> values(shape_size(shape));
      for (double& v : values) {
        std::string tok;
        if (!(vs >> tok)) fail("too few values for tensor " + name);
        try {
          v = std::stod(tok);
        } catch (const std::exception&) {
          fail("unparsable value '" + tok + "' in tensor " + name);
        }
      }
      std::string extra;
      if (vs >> extra) fail("too many values for tensor " + name);
      cp.tensors.add(name, Tensor(std::move(shape), std::move(values), true));
    } else if (kind == "end") {
      ended = true;
      break;
    } else {
      fail("unknown record '" + kind + "'");
    }
  }
  if (!ended) throw ValidationError("checkpoint truncated (no end marker)");
  return cp;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

void write_config(std::map<std::string, std::string>& meta, const EncoderConfig& c) {
  meta["model.vocab_size"] = std::to_string(c.vocab_size);
  meta["model.token_dim"] = std::to_string(c.token_dim);
  meta["model.sentence_dim"] = std::to_string(c.sentence_dim);
  meta["model.token_blocks"] = std::to_string(c.token_blocks);
  meta["model.sentence_blocks"] = std::to_string(c.sentence_blocks);
  meta["model.heads"] = std::to_string(c.heads);
  meta["model.max_sentences"] = std::to_string(c.max_sentences);
  meta["model.max_tokens"] = std::to_string(c.max_tokens);
  meta["model.ffn_multiplier"] = std::to_string(c.ffn_multiplier);
}

EncoderConfig read_config(const std::map<std::string, std::string>& meta) {
  auto get = [&](const std::string& key) -> std::size_t {
    auto it = meta.find(key);
    if (it == meta.end()) throw ValidationError("checkpoint lacks '" + key + "'");
    try {
      return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
      throw ValidationError("checkpoint field '" + key + "' is not a count");
    }
  };
  EncoderConfig c;
  c.vocab_size = get("model.vocab_size");
  c.token_dim = get("model.token_dim");
  c.sentence_dim = get("model.sentence_dim");
  c.token_blocks = get("model.token_blocks");
  c.sentence_blocks = get("model.sentence_blocks");
  c.heads = get("model.heads");
  c.max_sentences = get("model.max_sentences");
  c.max_tokens = get("model.max_tokens");
  c.ffn_multiplier = get("model.ffn_multiplier");
  return c;
}

}  // namespace numcast
