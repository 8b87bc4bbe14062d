// Chain programs and segment checkpointing. A chain is a sequence of unary
// stages (layer applications) on a single activation matrix; checkpointed
// execution saves only segment-boundary states during forward and recomputes
// segment interiors one at a time during backward. Gradients are bit-identical
// to plain backprop because every stage is deterministic and the reverse
// traversal consumes segments in the same order plain backprop would.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dlrlock/tape.hpp"

namespace dlrlock {

struct Stage {
  std::function<Var(Tape&, const Var&)> apply;
  std::string scope;          // label for per-layer memory attribution
  bool deterministic = true;  // non-deterministic stages cannot be checkpointed
};

using ChainProgram = std::vector<Stage>;

inline Var run_chain(Tape& t, const ChainProgram& prog, Var x) {
  for (const auto& st : prog) {
    t.push_scope(st.scope);
    x = st.apply(t, x);
    t.pop_scope();
  }
  return x;
}

// Evenly spaced checkpointing over a chain. `interval` stages per segment;
// interval >= chain length degenerates to one segment. The returned Var is a
// single node whose backward replays each segment on a recomputation tape
// that shares this tape's memory meter.
inline Var checkpoint_chain(Tape& t, const ChainProgram& prog, const Var& input,
                            std::size_t interval) {
  if (interval == 0) throw ValueError("checkpoint_chain: interval must be >= 1");
  for (const auto& st : prog)
    if (!st.deterministic)
      throw ValueError("checkpoint_chain: stage '" + st.scope +
                       "' is not deterministic; cannot recompute");
  if (prog.empty()) return input;

  if (!t.recording()) {
    Tape scratch(TapeMode::inference, t.meter_ptr());
    Var x = t.constant(input.value);
    return t.constant(run_chain(scratch, prog, x).value);
  }

  // Forward: compute values segment by segment with no recording, saving each
  // segment's input state.
  struct Segment {
    std::size_t first, last;  // stage range [first, last)
    ValuePtr boundary;        // input state of the segment
  };
  auto segments = std::make_shared<std::vector<Segment>>();
  auto ledger = std::make_shared<std::vector<ValuePtr>>();
  ValuePtr state = input.value;
  for (std::size_t s = 0; s < prog.size(); s += interval) {
    const std::size_t last = std::min(s + interval, prog.size());
    t.push_scope("checkpoint");
    t.save_buffer(state, ledger.get());
    t.pop_scope();
    segments->push_back(Segment{s, last, state});
    Tape scratch(TapeMode::inference, t.meter_ptr());
    Var x = scratch.constant(state);
    for (std::size_t k = s; k < last; ++k) x = prog[k].apply(scratch, x);
    state = x.value;
  }

  Matrix out = *state;
  auto mode = t.mode();
  auto meter = t.meter_ptr();
  auto program = std::make_shared<ChainProgram>(prog);
  Var in_ref = input;
  in_ref.value.reset();  // routing only; value retained via segment 0 boundary
  return t.make_op(
      std::move(out), {input}, {},
      [segments, ledger, program, mode, meter, in_ref](const Matrix& g, BackwardCtx& ctx) {
        Matrix upstream = g;
        for (std::size_t si = segments->size(); si-- > 0;) {
          const Segment& seg = (*segments)[si];
          Tape sub(mode, meter);
          Var x = sub.input(*seg.boundary, true);
          Var first = x;
          for (std::size_t k = seg.first; k < seg.last; ++k) {
            sub.push_scope((*program)[k].scope);
            x = (*program)[k].apply(sub, x);
            sub.pop_scope();
          }
          Matrix grad_in;
          sub.backward_into(x, upstream, ctx.store(), &grad_in, &first);
          upstream = std::move(grad_in);
          sub.release_buffer(seg.boundary);  // boundary consumed
        }
        ctx.to_var(in_ref, std::move(upstream));
      });
}

}  // namespace dlrlock
