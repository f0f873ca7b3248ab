#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "numcast/encoder.hpp"
#include "numcast/errors.hpp"
#include "support.hpp"

using namespace numcast;
using numcast::testing::gradient_mismatch;
using numcast::testing::grad_of;
using numcast::testing::numeric_gradient;
using numcast::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<TransformerBlock> make_blocks(ParameterStore& store, std::size_t count,
                                          std::size_t dim, std::mt19937_64& rng) {
  std::vector<TransformerBlock> blocks;
  for (std::size_t i = 0; i < count; ++i)
    blocks.push_back(TransformerBlock::create(store, "b" + std::to_string(i) + ".", dim, 2,
                                              2 * dim, rng));
  return blocks;
}

EncodedDocument random_document(std::size_t sentences, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> tok(4, vocab - 1), len(2, 5);
  EncodedDocument doc;
  for (std::size_t i = 0; i < sentences; ++i) {
    std::vector<std::size_t> ids(len(rng));
    for (auto& id : ids) id = tok(rng);
    ids.push_back(2);
    doc.sentences.push_back(ids);
  }
  doc.audio = random_tensor(sentences, kAudioFeatures, rng, 1.0, false);
  return doc;
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.vocab_size = 12;
  c.token_dim = 8;
  c.sentence_dim = 8;
  c.max_sentences = 4;
  c.max_tokens = 8;
  return c;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("token embedding") {
  std::mt19937_64 rng(1);
  TokenEmbedding emb{Tensor::zeros({10, 4}), random_tensor(6, 4, rng, 1.0, false)};
  Tape tape;
  std::vector<std::size_t> ids{3, 7, 1};
  Tensor e = embed_tokens(tape, ids, emb);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 4; ++c) CHECK(e.at(j, c) == emb.positions.at(j, c));
  std::vector<std::size_t> one{5};
  CHECK(embed_tokens(tape, one, emb).rows() == 1);

  // Swapping two tokens changes only the token components of those rows.
  TokenEmbedding r{random_tensor(10, 4, rng, 1.0, false), emb.positions};
  std::vector<std::size_t> a{3, 7, 1, 9}, b{3, 9, 1, 7};
  Tensor ea = embed_tokens(tape, a, r), eb = embed_tokens(tape, b, r);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 4; ++c) {
      const double want = r.table.at(b[j], c) + r.positions.at(j, c);
      CHECK(eb.at(j, c) == want);
      if (j == 0 || j == 2) CHECK(ea.at(j, c) == eb.at(j, c));
    }
  std::vector<std::size_t> too_long(7, 1);
  CHECK_THROWS_AS(embed_tokens(tape, too_long, emb), ContractError);
}

TEST_CASE("identity blocks reduce sentence encoding to the mean row") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  auto blocks = make_blocks(store, 2, 6, rng);
  for (auto& b : blocks) b.make_identity();
  Tape tape;
  Tensor x = random_tensor(5, 6, rng, 1.0, false);
  Tensor t = encode_sentence(tape, x, blocks);
  Tensor mean = tape.mean_pool(x);
  for (std::size_t c = 0; c < 6; ++c) CHECK(t.data()[c] == doctest::Approx(mean.data()[c]).epsilon(1e-14));

  std::vector<double> row{0.3, -1.0, 2.0, 0.0, 0.5, 1.5};
  std::vector<double> rows;
  for (int i = 0; i < 4; ++i) rows.insert(rows.end(), row.begin(), row.end());
  Tensor constant({4, 6}, rows);
  Tensor tc = encode_sentence(tape, constant, blocks);
  for (std::size_t c = 0; c < 6; ++c) CHECK(tc.data()[c] == doctest::Approx(row[c]).epsilon(1e-14));

  std::vector<TransformerBlock> single(blocks.begin(), blocks.begin() + 1);
  CHECK_THROWS_AS(encode_sentence(tape, x, single), ConfigError);
}

TEST_CASE("sentence encoding is permutation invariant without positions") {
  std::mt19937_64 rng(3);
  ParameterStore store;
  auto blocks = make_blocks(store, 3, 8, rng);
  TokenEmbedding emb{random_tensor(20, 8, rng, 1.0, false), Tensor::zeros({10, 8})};
  std::vector<std::size_t> ids{4, 9, 13, 5, 2}, perm{13, 2, 4, 5, 9};
  Tape tape;
  Tensor a = encode_sentence(tape, embed_tokens(tape, ids, emb), blocks);
  Tensor b = encode_sentence(tape, embed_tokens(tape, perm, emb), blocks);
  for (std::size_t c = 0; c < 8; ++c) CHECK(a.data()[c] == doctest::Approx(b.data()[c]).epsilon(1e-12));
}

TEST_CASE("fusion") {
  std::mt19937_64 rng(4);
  Tape tape;
  Tensor text = random_tensor(3, 5, rng, 1.0, false);
  Tensor audio = random_tensor(3, kAudioFeatures, rng, 1.0, false);
  Tensor pos = random_tensor(4, 6, rng, 1.0, false);
  Tensor s = fuse(tape, text, audio, Tensor::zeros({5 + kAudioFeatures, 6}), pos);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 6; ++c) CHECK(s.at(i, c) == pos.at(i, c));

  const std::size_t d = 5 + kAudioFeatures;
  Tensor eye = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) eye.data()[i * d + i] = 1.0;
  Tensor cat = fuse(tape, text, audio, eye, Tensor::zeros({4, d}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(cat.at(i, c) == text.at(i, c));
    for (std::size_t c = 0; c < kAudioFeatures; ++c) CHECK(cat.at(i, 5 + c) == audio.at(i, c));
  }
  CHECK_THROWS_AS(fuse(tape, text, Tensor::zeros({3, 26}), eye, pos), ContractError);
}

TEST_CASE("fusion passes gradients to both text and audio") {
  std::mt19937_64 rng(5);
  Tensor text = random_tensor(2, 4, rng);
  Tensor audio = random_tensor(2, kAudioFeatures, rng);
  Tensor w = random_tensor(4 + kAudioFeatures, 3, rng, 0.3, false);
  Tensor pos = random_tensor(3, 3, rng, 1.0, false);
  auto loss = [&](Tape& t) {
    Tensor s = fuse(t, text, audio, w, pos);
    return t.sum(t.tanh(t.mul(s, s)));
  };
  Tape tape;
  tape.backward(loss(tape));
  for (const Tensor& x : {text, audio}) {
    auto analytic = grad_of(x);
    auto numeric = numeric_gradient([&] { Tape t; return loss(t).item(); }, x);
    CHECK(gradient_mismatch(analytic, numeric) <= 0.0);
    double norm = 0.0;
    for (double g : analytic) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("document encoding") {
  std::mt19937_64 rng(6);
  ParameterStore store;
  auto blocks = make_blocks(store, 2, 6, rng);
  Tape tape;

  Tensor one = random_tensor(1, 6, rng, 1.0, false);
  DocumentRepr single = pad_document(tape, one, 4);
  CHECK(single.rows.rows() == 4);
  CHECK(single.mask == std::vector<bool>{true, false, false, false});
  Tensor pooled = encode_document(tape, single, blocks);
  Tensor x = single.rows;
  for (const auto& b : blocks) x = b.forward(tape, x, single.mask);
  for (std::size_t c = 0; c < 6; ++c) CHECK(pooled.data()[c] == x.at(0, c));

  // Perturbing padded rows leaves the pooled vector bit-identical.
  Tensor two = random_tensor(2, 6, rng, 1.0, false);
  DocumentRepr doc = pad_document(tape, two, 4);
  Tensor base = encode_document(tape, doc, blocks);
  DocumentRepr noisy{doc.rows.clone(), doc.mask};
  for (std::size_t i = 12; i < 24; ++i) noisy.rows.data()[i] = 1e3 * std::sin(static_cast<double>(i));
  CHECK(values(encode_document(tape, noisy, blocks)) == values(base));

  for (auto& b : blocks) b.make_identity();
  Tensor mid = encode_document(tape, doc, blocks);
  for (std::size_t c = 0; c < 6; ++c)
    CHECK(mid.data()[c] == doctest::Approx(0.5 * (two.at(0, c) + two.at(1, c))).epsilon(1e-14));

  DocumentRepr empty{Tensor::zeros({4, 6}), {false, false, false, false}};
  CHECK_THROWS_AS(encode_document(tape, empty, blocks), ContractError);
  CHECK_THROWS_AS(pad_document(tape, Tensor::zeros({5, 6}), 4), ContractError);
}

TEST_CASE("prediction heads and the movement rule") {
  EncoderConfig c = tiny_config();
  HierarchicalModel model(c, 3);
  for (const char* n : {"head.ret.w", "head.ret.b", "head.vol.w", "head.vol.b"}) {
    auto d = model.params().get(n).data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  std::mt19937_64 rng(7);
  Tape tape;
  Prediction p = model.predict(tape, random_tensor(1, 8, rng, 1.0, false));
  CHECK(p.ret.item() == 0.0);
  CHECK(p.volatility.item() == 0.0);
  CHECK_FALSE(predicts_rise(p.ret.item()));
  CHECK(predicts_rise(0.03));

  HierarchicalModel m2(c, 4);
  Tensor pooled = random_tensor(1, 8, rng, 1.0, false);
  Tensor w = m2.params().get("head.ret.w");
  auto loss = [&](Tape& t) {
    Tensor d = t.sub(m2.predict(t, pooled).ret, Tensor::scalar(0.7));
    return t.mul(d, d);
  };
  w.zero_grad();
  Tape t2;
  t2.backward(loss(t2));
  auto numeric = numeric_gradient([&] { Tape t; return loss(t).item(); }, w);
  CHECK(gradient_mismatch(grad_of(w), numeric) <= 0.0);
}

TEST_CASE("model forward is deterministic, padding invariant, one output per document") {
  EncoderConfig c = tiny_config();
  HierarchicalModel a(c, 11), b(c, 11);
  std::mt19937_64 rng(8);
  std::vector<EncodedDocument> docs;
  for (std::size_t n : {1, 2, 3, 4, 6}) docs.push_back(random_document(n, c.vocab_size, rng));
  std::size_t count = 0;
  for (const auto& d : docs) {
    Tape t1, t2;
    Prediction pa = a.forward(t1, d), pb = b.forward(t2, d);
    CHECK(pa.ret.item() == pb.ret.item());
    CHECK(pa.volatility.item() == pb.volatility.item());
    ++count;
  }
  CHECK(count == docs.size());

  // Text-only mode equals feeding zero audio.
  EncodedDocument z = docs[1];
  z.audio = Tensor::zeros({2, kAudioFeatures});
  Tape t3, t4;
  CHECK(a.forward(t3, docs[1], false).ret.item() == a.forward(t4, z).ret.item());

  // A cached text matrix gives the same result as recomputing it.
  EncodedDocument cached = docs[2];
  Tape t5;
  cached.text_cache = a.sentence_texts(t5, cached.sentences);
  Tape t6, t7;
  CHECK(a.forward(t6, cached).ret.item() == a.forward(t7, docs[2]).ret.item());
}

TEST_CASE("end-to-end gradient of the weighted two-task loss") {
  EncoderConfig c = tiny_config();
  HierarchicalModel model(c, 21);
  std::mt19937_64 rng(9);
  std::vector<EncodedDocument> batch{random_document(3, c.vocab_size, rng),
                                     random_document(2, c.vocab_size, rng)};
  std::vector<double> yr{0.4, -0.2}, yv{-1.0, 0.5};
  auto loss = [&](Tape& t) {
    std::vector<Prediction> preds;
    for (const auto& d : batch) preds.push_back(model.forward(t, d));
    return weighted_loss(t, task_losses(t, preds, yr, yv), 0.3, 0.7);
  };
  auto params = model.params().tensors();
  zero_grads(params);
  Tape tape;
  tape.backward(loss(tape));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto numeric = numeric_gradient([&] { Tape t; return loss(t).item(); }, params[i]);
    INFO(model.params().names()[i]);
    CHECK(gradient_mismatch(grad_of(params[i]), numeric) <= 0.0);
  }
}

TEST_CASE("checkpoint round trip is exact") {
  EncoderConfig c = tiny_config();
  HierarchicalModel model(c, 5);
  Checkpoint cp;
  write_config(cp.meta, c);
  cp.meta["note"] = "two words";
  cp.vocab = {"[PAD]", "[UNK]", "[EOS]", "[MASK]", "x"};
  cp.tensors = model.params().clone();
  std::stringstream io;
  save_checkpoint(io, cp);
  Checkpoint back = load_checkpoint(io);
  CHECK(back.meta == cp.meta);
  CHECK(back.vocab == cp.vocab);
  CHECK(back.tensors.names() == cp.tensors.names());
  for (const auto& n : cp.tensors.names()) CHECK(values(back.tensors.get(n)) == values(cp.tensors.get(n)));
  EncoderConfig rc = read_config(back.meta);
  HierarchicalModel restored(rc, std::move(back.tensors));
  std::mt19937_64 rng(3);
  auto doc = random_document(3, c.vocab_size, rng);
  Tape t1, t2;
  CHECK(restored.forward(t1, doc).ret.item() == model.forward(t2, doc).ret.item());

  std::istringstream bad("numcast-checkpoint 9\nend\n");
  CHECK_THROWS_AS(load_checkpoint(bad), ValidationError);
  std::istringstream truncated("numcast-checkpoint 1\ntensor a 2 2 2\n1 2 3\n");
  CHECK_THROWS_AS(load_checkpoint(truncated), ValidationError);
}

TEST_CASE("configuration validation") {
  EncoderConfig c = tiny_config();
  c.token_blocks = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
