// Shared helpers for the unit tests: finite-difference gradient oracles.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dlrlock/tape.hpp"

namespace testutil {

using dlrlock::GradStore;
using dlrlock::Matrix;
using dlrlock::ParamPtr;
using dlrlock::Tape;
using dlrlock::TapeMode;
using dlrlock::Var;

// Builds a scalar loss from one differentiable input.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

// Central finite differences of fn w.r.t. the input matrix, compared against
// the tape gradient. Returns the worst relative error over entries.
inline FdReport fd_check_input(const ScalarFn& fn, const Matrix& x0, double eps = 1e-6) {
  Tape t(TapeMode::train_full);
  Var x = t.input(x0, true);
  Var loss = fn(t, x);
  GradStore gs;
  Matrix analytic;
  t.backward_into(loss, Matrix{{1.0}}, gs, &analytic, &x);

  FdReport rep;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Matrix xp = x0, xm = x0;
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    Tape tp(TapeMode::inference), tm(TapeMode::inference);
    const double fp = fn(tp, tp.input(xp)).scalar();
    const double fm = fn(tm, tm.input(xm)).scalar();
    const double fd = (fp - fm) / (2.0 * eps);
    rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic.data()[i], fd));
    rep.max_abs_err = std::max(rep.max_abs_err, std::abs(analytic.data()[i] - fd));
  }
  return rep;
}

// Same oracle for a parameter of the model: the builder uses the parameter
// internally; we perturb its value entries.
inline FdReport fd_check_param(const std::function<Var(Tape&)>& fn, const ParamPtr& p,
                               double eps = 1e-6) {
  Tape t(TapeMode::train_full);
  Var loss = fn(t);
  GradStore gs = t.backward(loss);
  const Matrix* g = gs.find(p->id);
  Matrix analytic = g ? *g : Matrix(p->value.rows(), p->value.cols());

  FdReport rep;
  for (std::size_t i = 0; i < p->value.size(); ++i) {
    const double orig = p->value.data()[i];
    p->value.data()[i] = orig + eps;
    Tape tp(TapeMode::inference);
    const double fp = fn(tp).scalar();
    p->value.data()[i] = orig - eps;
    Tape tm(TapeMode::inference);
    const double fm = fn(tm).scalar();
    p->value.data()[i] = orig;
    const double fd = (fp - fm) / (2.0 * eps);
    rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic.data()[i], fd));
    rep.max_abs_err = std::max(rep.max_abs_err, std::abs(analytic.data()[i] - fd));
  }
  return rep;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return dlrlock::max_abs(a - b);
}

inline bool bit_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace testutil
