#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "numcast/tensor.hpp"

namespace numcast {

inline constexpr std::size_t kAudioFeatures = 27;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t token_dim = 32;       // d_t
  std::size_t sentence_dim = 32;    // d_s
  std::size_t token_blocks = 2;
  std::size_t sentence_blocks = 2;
  std::size_t heads = 2;
  std::size_t max_sentences = 16;   // M
  std::size_t max_tokens = 32;      // including the end-of-sentence token
  std::size_t ffn_multiplier = 2;

  void validate() const;
};

/// Ordered named tensors. Insertion order is the flattening order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor> tensors() const;
  /// Tensors whose names start with any of the prefixes.
  std::vector<Tensor> select(const std::vector<std::string>& prefixes) const;
  std::size_t total_size() const;

  /// Deep copy; the result shares no storage with this store.
  ParameterStore clone() const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> index_;
};

/// Concatenated values of the tensors, in order.
std::vector<double> flatten_values(const std::vector<Tensor>& tensors);
/// Concatenated gradients; tensors without a gradient buffer contribute zeros.
std::vector<double> flatten_grads(const std::vector<Tensor>& tensors);
void assign_values(std::vector<Tensor>& tensors, std::span<const double> flat);
void zero_grads(std::vector<Tensor>& tensors);
void set_requires_grad(std::vector<Tensor>& tensors, bool flag);

/// Pre-norm transformer block without a final normalization, so zeroing both
/// output projections makes it an exact identity.
class TransformerBlock {
 public:
  TransformerBlock() = default;
  /// Creates the block's tensors in `store` under `prefix`.
  static TransformerBlock create(ParameterStore& store, const std::string& prefix,
                                 std::size_t dim, std::size_t heads,
                                 std::size_t ffn_dim, std::mt19937_64& rng);
  /// Rebinds to tensors that already exist in `store`.
  static TransformerBlock bind(ParameterStore& store, const std::string& prefix,
                               std::size_t heads);

  /// `key_mask[j] == false` removes row j from every attention distribution
  /// via a −1e9 additive mask. Empty mask = no masking.
  Tensor forward(Tape& tape, const Tensor& x, const std::vector<bool>& key_mask = {}) const;

  /// Zeroes attention and feed-forward output projections and biases.
  void make_identity();

 private:
  Tensor w_qkv_, b_qkv_, w_out_, b_out_, w_ff1_, b_ff1_, w_ff2_, b_ff2_;
  std::size_t heads_ = 1;
};

/// Additive attention mask: 0 for live keys, −1e9 for masked keys.
inline constexpr double kMaskedScore = -1e9;

/// Token embedding table e(·) plus learned position embeddings p_j.
struct TokenEmbedding {
  Tensor table;      // vocab × d
  Tensor positions;  // max_tokens × d
};

/// Row j = e(w_j) + p_j.
Tensor embed_tokens(Tape& tape, std::span<const std::size_t> ids,
                    const TokenEmbedding& embedding);

/// Mean over token positions of the second-last block's output.
Tensor encode_sentence(Tape& tape, const Tensor& embedded,
                       const std::vector<TransformerBlock>& blocks);

/// s_i rows for n sentences: [T | A]·W + P_{0..n-1}. `text` is n×d_t and
/// `audio` n×27; W is (d_t+27)×d_s; positions M×d_s.
Tensor fuse(Tape& tape, const Tensor& text, const Tensor& audio,
            const Tensor& projection, const Tensor& positions);

/// Fused sentence rows padded with zero rows to M, plus a live-row mask.
struct DocumentRepr {
  Tensor rows;
  std::vector<bool> mask;
};

DocumentRepr pad_document(Tape& tape, const Tensor& fused, std::size_t max_sentences);

/// Masked mean over real rows of the final sentence-level block's output.
Tensor encode_document(Tape& tape, const DocumentRepr& doc,
                       const std::vector<TransformerBlock>& blocks);

struct Prediction {
  Tensor ret;         // 1×1
  Tensor volatility;  // 1×1
};

/// Rise iff the predicted return is strictly positive.
inline bool predicts_rise(double predicted_return) { return predicted_return > 0.0; }

/// Mean squared errors of the two heads over a batch.
struct TaskLosses {
  Tensor ret;         // main task: n-day return
  Tensor volatility;  // auxiliary task: n-day log volatility
};

TaskLosses task_losses(Tape& tape, const std::vector<Prediction>& predictions,
                       std::span<const double> return_targets,
                       std::span<const double> volatility_targets);

/// α₁·L_return + α₂·L_volatility.
Tensor weighted_loss(Tape& tape, const TaskLosses& losses, double alpha1, double alpha2);

/// Per-document inputs to the hierarchical model.
struct EncodedDocument {
  std::vector<std::vector<std::size_t>> sentences;  // token ids, each ending in EOS
  Tensor audio;                                     // n×27, already normalized
  Tensor text_cache;                                // optional n×d_t of T_i rows
};

/// Token-level encoder → fusion → sentence-level encoder → two linear heads.
class HierarchicalModel {
 public:
  HierarchicalModel() = default;
  HierarchicalModel(const EncoderConfig& config, std::uint64_t seed);
  /// Adopts tensors from a store (e.g. a loaded checkpoint).
  HierarchicalModel(const EncoderConfig& config, ParameterStore store);

  HierarchicalModel clone() const;

  const EncoderConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  const TokenEmbedding& token_embedding() const { return embedding_; }
  const std::vector<TransformerBlock>& token_blocks() const { return token_blocks_; }
  const std::vector<TransformerBlock>& sentence_blocks() const { return sentence_blocks_; }
  std::vector<TransformerBlock>& mutable_token_blocks() { return token_blocks_; }
  std::vector<TransformerBlock>& mutable_sentence_blocks() { return sentence_blocks_; }

  /// n×d_t matrix of sentence text vectors T_i.
  Tensor sentence_texts(Tape& tape, const std::vector<std::vector<std::size_t>>& sentences) const;
  /// Outputs of each token-level block for one sentence.
  std::vector<Tensor> token_layers(Tape& tape, std::span<const std::size_t> ids) const;

  /// Full forward pass. Uses doc.text_cache when present. `audio_enabled =
  /// false` feeds zeros in place of the audio features.
  Prediction forward(Tape& tape, const EncodedDocument& doc, bool audio_enabled = true) const;
  Prediction predict(Tape& tape, const Tensor& pooled) const;

  /// Parameter name prefixes of the token-level encoder.
  static std::vector<std::string> token_prefixes();
  /// Parameter name prefixes above the token-level encoder.
  static std::vector<std::string> upper_prefixes();

 private:
  void bind();

  EncoderConfig config_;
  ParameterStore store_;
  TokenEmbedding embedding_;
  std::vector<TransformerBlock> token_blocks_;
  std::vector<TransformerBlock> sentence_blocks_;
  Tensor fuse_w_, sentence_positions_, ret_w_, ret_b_, vol_w_, vol_b_;
};

// Checkpoint: a versioned text manifest of metadata, vocabulary and named
// tensors. Values are written with 17 significant digits, so a save/load
// round trip is exact.
//
//   numcast-checkpoint 1
//   meta <key> <value>          (repeated)
//   vocab <count>
//   <token>                     (count lines)
//   tensor <name> <rank> <d1> ... <dr>
//   <values separated by spaces>
//   end
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> vocab;
  ParameterStore tensors;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint_file(const std::string& path);

void write_config(std::map<std::string, std::string>& meta, const EncoderConfig& config);
EncoderConfig read_config(const std::map<std::string, std::string>& meta);

}  // namespace numcast
