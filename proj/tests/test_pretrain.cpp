#include <doctest.h>

#include <cmath>
#include <random>

#include "numcast/dataio.hpp"
#include "numcast/errors.hpp"
#include "numcast/pretrain.hpp"
#include "support.hpp"

using namespace numcast;
using namespace numcast::pretrain;
using numcast::testing::gradient_mismatch;
using numcast::testing::grad_of;
using numcast::testing::numeric_gradient;
using numcast::testing::random_tensor;

namespace {

struct Fixture {
  std::vector<text::Tokens> sentences;
  text::Vocabulary vocab;
  EncoderConfig config;

  explicit Fixture(std::size_t calls, std::size_t dim = 16) {
    for (const auto& r : data::generate_synthetic({.seed = 21, .calls = calls})) {
      for (const auto& s : r.sentences) sentences.push_back(text::tokenize(s.text));
    }
    vocab = text::Vocabulary::build(sentences);
    config.vocab_size = vocab.size();
    config.token_dim = dim;
    config.sentence_dim = dim;
    config.max_tokens = 24;
    config.max_sentences = 4;
  }

  std::vector<NccExample> ncc_examples() const {
    std::vector<NccExample> out;
    for (const auto& inst : numerals::make_ncc_instances(sentences)) {
      if (inst.mask_index + 1 < config.max_tokens) out.push_back(encode_ncc(inst, vocab, config.max_tokens));
    }
    return out;
  }
};

}  // namespace

TEST_SUITE("pretrain") {
  TEST_CASE("zero category head predicts one half everywhere") {
    Fixture fx(4);
    HierarchicalModel model(fx.config, 1);
    ParameterStore heads;
    std::mt19937_64 rng(2);
    NccHead head = NccHead::create(heads, fx.config.token_dim, rng);
    std::fill(head.weight.data().begin(), head.weight.data().end(), 0.0);
    const auto examples = fx.ncc_examples();
    REQUIRE(!examples.empty());
    for (double p : classify_ncc(model, head, examples.front())) CHECK(p == 0.5);
  }

  TEST_CASE("masked example encoding") {
    Fixture fx(2);
    const auto inst = numerals::make_ncc_instances({text::tokenize("revenue was $205m in 2020")});
    REQUIRE(inst.size() == 2);
    const auto ex = encode_ncc(inst[0], fx.vocab, fx.config.max_tokens);
    CHECK(ex.ids[ex.mask_index] == fx.vocab.mask_id());
    CHECK(ex.ids.back() == fx.vocab.eos_id());
    CHECK(ex.targets[static_cast<std::size_t>(numerals::Category::kMonetary)] == 1.0);
    CHECK_THROWS_AS(encode_ncc(inst[1], fx.vocab, 3), ContractError);
  }

  TEST_CASE("category head gradients match finite differences") {
    Fixture fx(2, 8);
    HierarchicalModel model(fx.config, 4);
    ParameterStore heads;
    std::mt19937_64 rng(5);
    NccHead head = NccHead::create(heads, fx.config.token_dim, rng);
    const auto ex = fx.ncc_examples().front();
    auto loss = [&] {
      Tape tape;
      return tape.bce_with_logits(ncc_logits(tape, model, head, ex), ex.targets).item();
    };
    for (Tensor t : {head.weight, model.params().get("tok.block0.w_qkv"), model.params().get("tok.embed")}) {
      Tape tape;
      Tensor l = tape.bce_with_logits(ncc_logits(tape, model, head, ex), ex.targets);
      t.zero_grad();
      tape.backward(l);
      const auto analytic = grad_of(t);
      t.zero_grad();
      CHECK(gradient_mismatch(analytic, numeric_gradient(loss, t)) <= 0.0);
    }
  }

  TEST_CASE("probe with a zero scorer is uniform over positions") {
    ParameterStore store;
    std::mt19937_64 rng(3);
    BiLstmProbe probe = BiLstmProbe::create(store, 6, 4, rng);
    std::fill(probe.score_w.data().begin(), probe.score_w.data().end(), 0.0);
    const auto p = probe_magnitude(probe, random_tensor(5, 6, rng, 1.0, false));
    for (double x : p) CHECK(x == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_AS(probe_magnitude(probe, random_tensor(5, 7, rng, 1.0, false)), ContractError);
    CHECK_THROWS_AS(probe_magnitude(probe, random_tensor(4, 6, rng, 1.0, false)), ContractError);
  }

  TEST_CASE("probe log-probabilities normalize and their gradients match finite differences") {
    ParameterStore store;
    std::mt19937_64 rng(9);
    BiLstmProbe probe = BiLstmProbe::create(store, 5, 3, rng, 1.0);
    Tensor emb = random_tensor(5, 5, rng);
    {
      Tape tape;
      Tensor lp = probe_log_probs(tape, probe, emb);
      CHECK(lp.rows() == 1);
      CHECK(lp.cols() == 5);
      double total = 0.0;
      for (double x : lp.data()) total += std::exp(x);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto loss = [&] {
      Tape tape;
      return -tape.pick(probe_log_probs(tape, probe, emb), 0, 3).item();
    };
    for (Tensor t : {emb, probe.fw_x, probe.fw_h, probe.bw_h, probe.bw_b, probe.score_w}) {
      Tape tape;
      Tensor l = tape.scale(tape.pick(probe_log_probs(tape, probe, emb), 0, 3), -1.0);
      t.zero_grad();
      tape.backward(l);
      const auto analytic = grad_of(t);
      t.zero_grad();
      CHECK(gradient_mismatch(analytic, numeric_gradient(loss, t)) <= 0.0);
    }
  }

  TEST_CASE("numeral embedding equals the sentence encoding of the span alone") {
    Fixture fx(2, 8);
    HierarchicalModel model(fx.config, 6);
    const std::vector<std::size_t> ids{fx.vocab.id("$"), fx.vocab.id("12"), fx.vocab.id("m")};
    Tape tape;
    Tensor a = numeral_embedding(tape, model, ids);
    Tensor b = model.sentence_texts(tape, {ids});
    CHECK(a.rows() == 1);
    CHECK(a.cols() == fx.config.token_dim);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }

  TEST_CASE("magnitude stage leaves the final token block out") {
    Fixture fx(2, 8);
    HierarchicalModel model(fx.config, 6);
    const auto trainable = mc_trainable(model);
    const auto last = model.params().select({"tok.block1."});
    REQUIRE(!last.empty());
    for (const Tensor& t : trainable) {
      for (const Tensor& f : last) CHECK(t.data().data() != f.data().data());
    }
    CHECK(trainable.size() == model.params().select({"tok."}).size() - last.size());
  }

  TEST_CASE("category pre-training raises LRAP above the untrained encoder") {
    Fixture fx(30);
    HierarchicalModel model(fx.config, 7);
    ParameterStore heads;
    std::mt19937_64 rng(8);
    NccHead head = NccHead::create(heads, fx.config.token_dim, rng);
    auto examples = fx.ncc_examples();
    std::shuffle(examples.begin(), examples.end(), rng);
    const std::size_t cut = examples.size() * 4 / 5;
    const std::vector<NccExample> train(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(cut));
    const std::vector<NccExample> held(examples.begin() + static_cast<std::ptrdiff_t>(cut), examples.end());
    const double before = evaluate_ncc(model, head, held).lrap;
    auto trainable = model.params().select(HierarchicalModel::token_prefixes());
    trainable.push_back(head.weight);
    trainable.push_back(head.bias);
    const auto losses = train_ncc(model, head, trainable, train, {.epochs = 3, .lr = 3e-3, .seed = 1});
    const auto after = evaluate_ncc(model, head, held);
    MESSAGE("NCC LRAP " << before << " -> " << after.lrap);
    CHECK(losses.back() < losses.front());
    CHECK(after.lrap > before);
    CHECK(after.instances == held.size());
  }

  TEST_CASE("magnitude probe learns above chance and reports four columns") {
    Fixture fx(60);
    HierarchicalModel model(fx.config, 9);
    ParameterStore probes;
    std::mt19937_64 rng(10);
    BiLstmProbe probe = BiLstmProbe::create(probes, fx.config.token_dim, 16, rng);
    const auto draw = numerals::make_magnitude_instances(fx.sentences, 4, 3);
    std::vector<McExample> examples;
    for (const auto& inst : draw.instances) examples.push_back(encode_mc(inst, fx.vocab));
    REQUIRE(examples.size() > 50);
    const std::size_t cut = examples.size() * 4 / 5;
    const std::vector<McExample> train(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(cut));
    const std::vector<McExample> held(examples.begin() + static_cast<std::ptrdiff_t>(cut), examples.end());
    auto trainable = mc_trainable(model);
    for (const char* n : {"mc.fw_x", "mc.fw_h", "mc.fw_b", "mc.bw_x", "mc.bw_h", "mc.bw_b",
                          "mc.score_w", "mc.score_b"}) {
      trainable.push_back(probes.get(n));
    }
    train_mc(model, probe, trainable, train, {.epochs = 6, .lr = 5e-3, .seed = 2});
    const auto report = evaluate_mc(model, probe, held);
    CHECK(report.size() == 4);
    for (const char* k : {"monetary", "temporal", "percentage", "all"}) CHECK(report.contains(k));
    MESSAGE("MC accuracy all=" << report.at("all") << " monetary=" << report.at("monetary")
                               << " temporal=" << report.at("temporal")
                               << " percentage=" << report.at("percentage"));
    CHECK(report.at("all") > 0.3);
  }
}
