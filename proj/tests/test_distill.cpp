#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "dlrlock/distill.hpp"
#include "test_util.hpp"

using namespace dlrlock;

namespace {

// Tiny teacher shared by the distillation tests.
TransformerParams tiny_teacher(std::uint64_t seed = 7) {
  ToyModelConfig cfg;
  cfg.d = 16;
  cfg.d_ff = 32;
  cfg.n_layers = 2;
  cfg.heads = 2;
  cfg.n_max = 24;
  return init_transformer(cfg, Rng(seed));
}

ByteCorpus tiny_corpus() {
  ByteCorpus c;
  const std::string text =
      "the quick brown fox jumps over the lazy dog again and again until the words repeat "
      "the quick brown fox jumps over the lazy dog again and again until the words repeat "
      "a byte level model learns letter patterns from repeated text samples easily enough";
  c.bytes.assign(text.begin(), text.end());
  c.hash = fnv1a64(text);
  return c;
}

}  // namespace

TEST_CASE("relative mse examples") {
  Matrix f{{3.0, 4.0}};
  Matrix g{{3.0, 0.0}};
  REQUIRE(relative_mse_value(g, f) == Catch::Approx(0.64).margin(1e-15));
  REQUIRE(relative_mse_value(f, f) == 0.0);
  Matrix z{{0.0, 0.0}};
  REQUIRE(relative_mse_value(z, f) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("relative mse excludes zero-norm teacher rows") {
  Matrix f{{3.0, 4.0}, {0.0, 0.0}};
  Matrix g{{3.0, 0.0}, {1.0, 1.0}};
  std::size_t excluded = 0;
  REQUIRE(relative_mse_value(g, f, &excluded) == Catch::Approx(0.64).margin(1e-15));
  REQUIRE(excluded == 1);
}

TEST_CASE("topk_kl: equal distributions give zero for any k") {
  std::vector<double> l{0.3, -1.0, 2.0, 0.0};
  for (std::size_t k = 1; k <= 4; ++k)
    REQUIRE(topk_kl(l, l, k) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("topk_kl hand example: restricted sum") {
  // logits = log p reproduce the given probabilities exactly
  std::vector<double> pt{0.7, 0.2, 0.1}, ps{0.6, 0.3, 0.1};
  std::vector<double> lt, ls;
  for (double v : pt) lt.push_back(std::log(v));
  for (double v : ps) ls.push_back(std::log(v));
  const double want = 0.7 * std::log(7.0 / 6.0) + 0.2 * std::log(2.0 / 3.0);
  REQUIRE(topk_kl(lt, ls, 2) == Catch::Approx(want).margin(1e-12));
  REQUIRE(topk_kl(lt, ls, 2) == Catch::Approx(0.026813).margin(5e-6));
}

TEST_CASE("topk_kl with k = vocab is the full KL and non-negative") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> lt(16), ls(16);
    for (auto& v : lt) v = rng.normal(0, 1);
    for (auto& v : ls) v = rng.normal(0, 1);
    const double kl = topk_kl(lt, ls, 16);
    REQUIRE(kl >= -1e-12);
  }
}

TEST_CASE("topk_kl_mean gradient matches finite differences") {
  Rng rng(6);
  Matrix logits = rng_fill(rng, 3, 8, NormalDist{0.0, 1.0});
  Matrix tprobs = softmax_rows_value(rng_fill(rng, 3, 8, NormalDist{0.0, 1.0}));
  auto rep = testutil::fd_check_input(
      [&](Tape& t, const Var& x) { return ops::topk_kl_mean(t, x, tprobs, 3); }, logits);
  REQUIRE(rep.max_rel_err <= 1e-6);
}

TEST_CASE("collect_states: one-token input yields one row of dimension d") {
  TransformerParams teacher = tiny_teacher();
  HiddenStateCache c = collect_states_from_sequences(teacher, {{42}}, 0);
  REQUIRE(c.states.rows() == 1);
  REQUIRE(c.states.cols() == teacher.d);
  REQUIRE_THROWS_AS(collect_states_from_sequences(teacher, {{1}}, 5), ValueError);
}

TEST_CASE("collect_states deterministic and cache round-trips") {
  TransformerParams teacher = tiny_teacher();
  ByteCorpus corpus = tiny_corpus();
  CollectConfig cc;
  cc.n_tokens = 64;
  cc.seq_len = 8;
  cc.seed = 11;
  HiddenStateCache a = collect_states(teacher, corpus, 1, cc);
  HiddenStateCache b = collect_states(teacher, corpus, 1, cc);
  REQUIRE(testutil::bit_equal(a.states, b.states));
  REQUIRE(a.states.cols() == teacher.d);
  REQUIRE(a.states.rows() >= 64);

  const std::string path = "/tmp/dlrlock_test_cache.bin";
  save_state_cache(path, a);
  HiddenStateCache back = load_state_cache(path);
  REQUIRE(testutil::bit_equal(a.states, back.states));
  REQUIRE(back.layer == 1);
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("phase1: step-0 loss equals the identity-initialization loss exactly") {
  TransformerParams teacher = tiny_teacher();
  // one-row cache so every batch is that row
  HiddenStateCache cache = collect_states_from_sequences(teacher, {{97}}, 0);
  Phase1Config cfg;
  cfg.steps = 1;
  cfg.batch = 1;
  cfg.record_every = 1;
  Phase1Result res = phase1_modulewise(teacher.ffn[0].swiglu, cache, 2, 4, cfg);
  Matrix z(1, teacher.d);
  std::copy(cache.states.row(0), cache.states.row(0) + teacher.d, z.row(0));
  Matrix f = teacher_block_value(teacher.ffn[0].swiglu, z);
  REQUIRE(res.initial_loss == relative_mse_value(z, f));
}

TEST_CASE("phase1: loss decreases and runs are seed-deterministic") {
  TransformerParams teacher = tiny_teacher();
  ByteCorpus corpus = tiny_corpus();
  CollectConfig cc;
  cc.n_tokens = 128;
  cc.seq_len = 8;
  HiddenStateCache cache = collect_states(teacher, corpus, 0, cc);
  Phase1Config cfg;
  cfg.steps = 300;
  cfg.batch = 8;
  cfg.lr = 3e-3;
  cfg.seed = 5;
  Phase1Result a = phase1_modulewise(teacher.ffn[0].swiglu, cache, 2, 8, cfg);
  Phase1Result b = phase1_modulewise(teacher.ffn[0].swiglu, cache, 2, 8, cfg);
  REQUIRE(!a.diverged);
  REQUIRE(a.final_loss <= a.initial_loss);
  REQUIRE(a.trajectory.series.size() == b.trajectory.series.size());
  for (std::size_t i = 0; i < a.trajectory.series.size(); ++i)
    REQUIRE(a.trajectory.series[i].loss == b.trajectory.series[i].loss);
  for (std::size_t l = 0; l < a.student.layers.size(); ++l) {
    REQUIRE(testutil::bit_equal(a.student.layers[l].v->value, b.student.layers[l].v->value));
    REQUIRE(testutil::bit_equal(a.student.layers[l].u->value, b.student.layers[l].u->value));
  }
}

TEST_CASE("phase2: frozen parameters never change, gradients never reach them") {
  TransformerParams teacher = tiny_teacher(21);
  TransformerParams student = clone_model(teacher);
  Rng rng(3);
  for (std::size_t l = 0; l < student.n_layers; ++l) {
    student.ffn[l].kind = FfnBlock::Kind::dlr;
    student.ffn[l].dlr = init_dlrnet(student.d, 2, 6, rng.substream("s", l));
  }
  ByteCorpus corpus = tiny_corpus();
  Phase2Config cfg;
  cfg.steps = 10;
  cfg.batch = 2;
  cfg.seq_len = 8;
  cfg.top_k = 16;
  Matrix tok_before = student.tok_emb->value;
  Matrix wq_before = student.attn[0].wq->value;
  Matrix gain_before = student.final_gain->value;
  Phase2Result res = phase2_logits(student, teacher, corpus, cfg);
  REQUIRE(!res.diverged);
  REQUIRE(testutil::bit_equal(student.tok_emb->value, tok_before));
  REQUIRE(testutil::bit_equal(student.attn[0].wq->value, wq_before));
  REQUIRE(testutil::bit_equal(student.final_gain->value, gain_before));
}

TEST_CASE("phase2 with student equal to teacher stays at zero loss") {
  // a DLR-FFN "teacher" identical to the student: KL starts at 0 and only
  // AdamW weight decay can move parameters
  ToyModelConfig cfg;
  cfg.d = 12;
  cfg.d_ff = 24;
  cfg.n_layers = 1;
  cfg.heads = 2;
  cfg.n_max = 16;
  TransformerParams student = init_transformer(cfg, Rng(31));
  Rng rng(32);
  student.ffn[0].kind = FfnBlock::Kind::dlr;
  student.ffn[0].dlr = init_dlrnet(cfg.d, 2, 5, rng);
  for (auto& lp : student.ffn[0].dlr.layers) lp.alpha->value(0, 0) = 0.1;
  TransformerParams teacher = clone_model(student);

  ByteCorpus corpus = tiny_corpus();
  Phase2Config p2;
  p2.steps = 15;
  p2.batch = 2;
  p2.seq_len = 8;
  p2.top_k = 8;
  p2.weight_decay = 0.0;
  Phase2Result res = phase2_logits(student, teacher, corpus, p2);
  REQUIRE(res.heldout_kl_before == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(res.heldout_kl_after <= 1e-10);
  for (const auto& p : res.trajectory.series) REQUIRE(p.loss <= 1e-10);
}

TEST_CASE("evaluate_perplexity: uniform predictor gives vocab, evaluation is deterministic") {
  ToyModelConfig cfg;
  cfg.d = 8;
  cfg.d_ff = 16;
  cfg.n_layers = 1;
  cfg.heads = 1;
  cfg.n_max = 16;
  TransformerParams m = init_transformer(cfg, Rng(9));
  m.head->value = Matrix(cfg.vocab, cfg.d, 0.0);  // constant logits -> uniform
  ByteCorpus corpus = tiny_corpus();
  const auto held = corpus.heldout_tokens();
  const double ppl = evaluate_perplexity(m, held, 8);
  REQUIRE(ppl == Catch::Approx(256.0).epsilon(1e-9));
  REQUIRE(evaluate_perplexity(m, held, 8) == ppl);
}
