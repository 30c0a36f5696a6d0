#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pointssl/model.hpp"
#include "pointssl/rng.hpp"
#include "pointssl/tensor.hpp"
#include "pointssl/train.hpp"

namespace pointssl {

// Central finite differences against an analytic gradient. `forward` must be
// a pure function of the flat parameter vector.
struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
};

// Mixed relative/absolute error: plain relative error for gradients of
// ordinary magnitude, with a 1e-2 denominator floor so that coordinates whose
// true gradient is (near) zero are judged by absolute disagreement instead.
// Central differences of an O(1) forward carry ~1e-9 of cancellation noise,
// which is not evidence against a zero analytic gradient (e.g. a bias that a
// following batch-norm mean subtraction cancels exactly).
inline double fd_rel_error(double fd, double an) {
  const double denom = std::max({1e-2, std::abs(fd), std::abs(an)});
  return std::abs(fd - an) / denom;
}

template <typename Forward>
GradCheckReport check_gradient(Forward&& forward, Eigen::VectorXd x, const Eigen::VectorXd& analytic,
                               double step = 1e-5, double tol = 1e-4) {
  GradCheckReport rep;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + step;
    const double hi = forward(x);
    x(i) = keep - step;
    const double lo = forward(x);
    x(i) = keep;
    const double fd = (hi - lo) / (2.0 * step);
    rep.max_rel_error = std::max(rep.max_rel_error, fd_rel_error(fd, analytic(i)));
  }
  rep.pass = rep.max_rel_error < tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Finite-difference suite over every differentiable op and the full
// predictor(projector(encoder(x))) chain. Each case builds a scalar loss
// sum(w . f(x)) with fixed random weights so the whole Jacobian is exercised.

struct OpCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradientSuiteResult {
  std::vector<OpCheckResult> ops;
  bool all_pass = true;
};

GradientSuiteResult run_gradient_suite(std::uint64_t seed, int trials_per_op = 100, double step = 1e-5,
                                       double tol = 1e-4);

}  // namespace pointssl
