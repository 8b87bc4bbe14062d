// Step-timing harness: phase spans wrap only the tape calls (forward,
// backward) and the optimizer update. Warmup steps run but are excluded from
// aggregates; inference mode reports zero backward and optimizer spans.
#pragma once

#include "dlrlock/blocks.hpp"
#include "dlrlock/data.hpp"
#include "dlrlock/optim.hpp"
#include "dlrlock/timing.hpp"

namespace dlrlock {

struct BenchStepConfig {
  std::size_t steps = 30;
  std::size_t warmup = 5;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  std::size_t checkpoint_interval = 0;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

inline TimingReport time_step_split(TransformerParams& model, const ByteCorpus& corpus,
                                    const BenchStepConfig& cfg, TapeMode mode) {
  TimingReport rep;
  rep.warmup = cfg.warmup;
  const double resolution = clock_resolution_s();
  Rng rng = Rng(cfg.seed).substream("bench");
  auto params = collect_params(model);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, 0.0});
  ForwardOptions fopt;
  fopt.checkpoint_interval = cfg.checkpoint_interval;

  for (std::size_t step = 0; step < cfg.steps + cfg.warmup; ++step) {
    StepTiming st;
    PhaseTimer total, phase;
    total.begin();

    phase.begin();
    Tape tape(mode);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      auto w = corpus.sample_train_window(rng, cfg.seq_len);
      std::vector<std::size_t> input(w.begin(), w.end() - 1);
      std::vector<std::size_t> target(w.begin() + 1, w.end());
      Var logits = transformer_logits(tape, model, input, fopt);
      Var ce = ops::cross_entropy_mean(tape, logits, target);
      loss = ops::add(tape, loss, ops::scale(tape, ce, 1.0 / static_cast<double>(cfg.batch)));
    }
    st.forward_s = phase.end();

    if (mode != TapeMode::inference) {
      phase.begin();
      GradStore grads = tape.backward(loss);
      clip_grad_norm(grads, 1.0);
      st.backward_s = phase.end();
      phase.begin();
      opt.step(params, grads, cfg.lr);
      st.optimizer_s = phase.end();
    }
    st.total_s = total.end();
    if (step >= cfg.warmup) {
      rep.steps.push_back(st);
      if (st.forward_s < 100.0 * resolution) rep.resolution_warning = true;
    }
  }
  return rep;
}

}  // namespace dlrlock
