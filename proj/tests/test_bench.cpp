#include <catch2/catch_amalgamated.hpp>

#include "dlrlock/bench.hpp"
#include "dlrlock/distill.hpp"
#include "test_util.hpp"

using namespace dlrlock;

namespace {

ByteCorpus bench_corpus() {
  ByteCorpus c;
  std::string text;
  for (int i = 0; i < 50; ++i) text += "timing harness corpus with enough bytes to sample. ";
  c.bytes.assign(text.begin(), text.end());
  c.hash = fnv1a64(text);
  return c;
}

TransformerParams bench_model() {
  ToyModelConfig cfg;
  cfg.d = 16;
  cfg.d_ff = 32;
  cfg.n_layers = 2;
  cfg.heads = 2;
  cfg.n_max = 24;
  return init_transformer(cfg, Rng(3));
}

}  // namespace

TEST_CASE("inference mode: zero backward and optimizer spans, zero saved elements") {
  ByteCorpus corpus = bench_corpus();
  TransformerParams m = bench_model();
  BenchStepConfig cfg;
  cfg.steps = 4;
  cfg.warmup = 1;
  cfg.batch = 1;
  cfg.seq_len = 8;
  TimingReport rep = time_step_split(m, corpus, cfg, TapeMode::inference);
  REQUIRE(rep.steps.size() == 4);
  REQUIRE(rep.mean_backward() == 0.0);
  REQUIRE(rep.mean_optimizer() == 0.0);
  REQUIRE(rep.mean_forward() > 0.0);

  // any program in inference mode allocates no saved buffers
  Tape t(TapeMode::inference);
  std::vector<std::size_t> toks{1, 2, 3, 4, 5};
  transformer_logits(t, m, toks);
  REQUIRE(t.meter().saved_elements() == 0);
  REQUIRE(t.meter().peak_elements() == 0);
}

TEST_CASE("train mode: phases measured, aggregates consistent") {
  ByteCorpus corpus = bench_corpus();
  TransformerParams m = bench_model();
  BenchStepConfig cfg;
  cfg.steps = 6;
  cfg.warmup = 2;
  cfg.batch = 1;
  cfg.seq_len = 8;
  TimingReport rep = time_step_split(m, corpus, cfg, TapeMode::train_full);
  REQUIRE(rep.steps.size() == 6);
  REQUIRE(rep.mean_backward() > 0.0);
  REQUIRE(rep.backward_fraction() > 0.0);
  REQUIRE(rep.backward_fraction() < 1.0);
  REQUIRE(rep.training_overhead_ratio() > 0.0);
  REQUIRE(rep.p50_total() <= rep.p95_total() + 1e-12);
  // total covers the measured phases
  for (const auto& s : rep.steps)
    REQUIRE(s.total_s + 1e-9 >= s.forward_s + s.backward_s + s.optimizer_s);
}

TEST_CASE("repeated timing runs: p50 stable within a factor of 2") {
  // desk-scale stability sanity; generous bound because CI machines are noisy
  ByteCorpus corpus = bench_corpus();
  TransformerParams m = bench_model();
  BenchStepConfig cfg;
  cfg.steps = 8;
  cfg.warmup = 2;
  cfg.batch = 1;
  cfg.seq_len = 16;
  std::vector<double> p50s;
  for (int rep = 0; rep < 3; ++rep)
    p50s.push_back(time_step_split(m, corpus, cfg, TapeMode::train_full).p50_total());
  const double mx = *std::max_element(p50s.begin(), p50s.end());
  const double mn = *std::min_element(p50s.begin(), p50s.end());
  REQUIRE(mn > 0.0);
  REQUIRE(mx / mn < 2.0);
}

TEST_CASE("phase-1 layer runs are schedule independent") {
  ToyModelConfig ac;
  ac.d = 16;
  ac.d_ff = 32;
  ac.n_layers = 2;
  ac.heads = 2;
  ac.n_max = 24;
  TransformerParams teacher = init_transformer(ac, Rng(7));
  ByteCorpus corpus = bench_corpus();
  LockConfig lc;
  lc.rank = 2;
  lc.collect.n_tokens = 64;
  lc.collect.seq_len = 8;
  lc.phase1.steps = 40;
  lc.phase1.batch = 8;
  lc.phase2.steps = 10;
  lc.phase2.batch = 2;
  lc.phase2.seq_len = 8;
  lc.phase2.top_k = 16;

  lc.jobs = 1;
  LockResult seq = lock_model(teacher, corpus, lc);
  lc.jobs = 2;
  LockResult par = lock_model(teacher, corpus, lc);

  REQUIRE(seq.phase1.size() == par.phase1.size());
  for (std::size_t l = 0; l < seq.phase1.size(); ++l) {
    REQUIRE(seq.phase1[l].final_loss == par.phase1[l].final_loss);
    const auto& a = seq.phase1[l].student;
    const auto& b = par.phase1[l].student;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      REQUIRE(testutil::bit_equal(a.layers[i].v->value, b.layers[i].v->value));
      REQUIRE(testutil::bit_equal(a.layers[i].u->value, b.layers[i].u->value));
      REQUIRE(testutil::bit_equal(a.layers[i].alpha->value, b.layers[i].alpha->value));
    }
  }
  REQUIRE(seq.locked_ppl == par.locked_ppl);
}
