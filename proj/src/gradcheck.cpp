#include "pointssl/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

namespace pointssl {

namespace {

using Vec = Eigen::VectorXd;
using T = Tensor<double>;

Vec random_vec(RngStream& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Scalar loss sum(w . out) so every output entry feeds the check.
double weighted(const T& out, const Vec& w) { return out.data().dot(w); }

T weighted_loss(const T& out, const Vec& w) { return sum(mul(out, T(out.shape(), w))); }

}  // namespace

GradientSuiteResult run_gradient_suite(std::uint64_t seed, int trials_per_op, double step, double tol) {
  GradientSuiteResult result;
  RngStream root(seed);

  auto add_result = [&](const std::string& name, double err) {
    result.ops.push_back({name, err, err < tol});
    result.all_pass = result.all_pass && err < tol;
  };

  // Each op case splits a flat parameter vector into op inputs (bound as tape
  // leaves when a tape is given) and returns the op output tensor.
  struct Driver {
    // sample returns (param vector, loss-weight size hint via out tensor)
    std::function<Vec(RngStream&)> sample;
    std::function<T(const Vec&, Tape<double>*, std::vector<T>*)> forward;
  };

  auto run_driver = [&](const std::string& name, std::uint64_t salt, const Driver& d) {
    RngStream op_rng = root.child(salt);
    double worst = 0.0;
    for (int trial = 0; trial < trials_per_op; ++trial) {
      RngStream trial_rng = op_rng.child(static_cast<std::uint64_t>(trial));
      Vec x0 = d.sample(trial_rng);

      // One no-tape evaluation fixes the output size for the loss weights.
      T probe = d.forward(x0, nullptr, nullptr);
      Vec w = random_vec(trial_rng, probe.size());

      Tape<double> tape;
      std::vector<T> leaves;
      T out = d.forward(x0, &tape, &leaves);
      T loss = weighted_loss(out, w);
      tape.backward(loss);
      Vec analytic(x0.size());
      Eigen::Index at = 0;
      for (const T& leaf : leaves) {
        analytic.segment(at, leaf.size()) = tape.grad(leaf).data();
        at += leaf.size();
      }

      auto forward_value = [&](const Vec& x) { return weighted(d.forward(x, nullptr, nullptr), w); };
      const GradCheckReport rep = check_gradient(forward_value, x0, analytic, step, tol);
      worst = std::max(worst, rep.max_rel_error);
    }
    add_result(name, worst);
  };

  // Helper: turn the next `n` entries of the flat vector into a tensor,
  // either as a tape leaf (recorded in `leaves`) or as a constant.
  auto take = [](const Vec& x, Eigen::Index& at, Shape shape, Tape<double>* tape, std::vector<T>* leaves) {
    const Eigen::Index n = shape_size(shape);
    Vec vals = x.segment(at, n);
    at += n;
    if (!tape) return T(std::move(shape), std::move(vals));
    T leaf = tape->leaf(std::move(shape), std::move(vals));
    if (leaves) leaves->push_back(leaf);
    return leaf;
  };

  // matmul -------------------------------------------------------------
  {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 3>>();
    d.sample = [dims](RngStream& rng) {
      (*dims) = {rng.uniform_int(1, 5), rng.uniform_int(1, 5), rng.uniform_int(1, 5)};
      return random_vec(rng, (*dims)[0] * (*dims)[1] + (*dims)[1] * (*dims)[2]);
    };
    d.forward = [dims, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      T a = take(x, at, {(*dims)[0], (*dims)[1]}, tape, leaves);
      T b = take(x, at, {(*dims)[1], (*dims)[2]}, tape, leaves);
      return matmul(a, b);
    };
    run_driver("matmul", 1, d);
  }

  // elementwise --------------------------------------------------------
  auto elementwise_driver = [&](const std::string& name, std::uint64_t salt, auto op, bool scalar_rhs) {
    Driver d;
    auto n = std::make_shared<Eigen::Index>(0);
    d.sample = [n, scalar_rhs](RngStream& rng) {
      *n = rng.uniform_int(1, 9);
      return random_vec(rng, scalar_rhs ? *n + 1 : 2 * (*n));
    };
    d.forward = [n, take, op, scalar_rhs](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      T a = take(x, at, {*n}, tape, leaves);
      T b = take(x, at, {scalar_rhs ? 1 : *n}, tape, leaves);
      return op(a, b);
    };
    run_driver(name, salt, d);
  };
  elementwise_driver("add", 2, [](const T& a, const T& b) { return add(a, b); }, false);
  elementwise_driver("add_scalar_broadcast", 3, [](const T& a, const T& b) { return add(a, b); }, true);
  elementwise_driver("sub", 4, [](const T& a, const T& b) { return sub(a, b); }, false);
  elementwise_driver("mul", 5, [](const T& a, const T& b) { return mul(a, b); }, false);
  elementwise_driver("mul_scalar_broadcast", 6, [](const T& a, const T& b) { return mul(a, b); }, true);

  {
    Driver d;
    auto n = std::make_shared<Eigen::Index>(0);
    d.sample = [n](RngStream& rng) {
      *n = rng.uniform_int(1, 9);
      return random_vec(rng, *n);
    };
    d.forward = [n, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return scale(take(x, at, {*n}, tape, leaves), 1.7);
    };
    run_driver("scale", 7, d);

    d.forward = [n, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return add_scalar(take(x, at, {*n}, tape, leaves), -0.3);
    };
    run_driver("add_scalar", 8, d);

    // relu: keep samples away from the kink at 0.
    d.sample = [n](RngStream& rng) {
      *n = rng.uniform_int(1, 9);
      Vec v = random_vec(rng, *n);
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) < 1e-3) v(i) = v(i) < 0 ? -1e-3 : 1e-3;
      return v;
    };
    d.forward = [n, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return relu(take(x, at, {*n}, tape, leaves));
    };
    run_driver("relu", 9, d);
  }

  // add_rowvector --------------------------------------------------------
  {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 2>>();
    d.sample = [dims](RngStream& rng) {
      (*dims) = {rng.uniform_int(1, 5), rng.uniform_int(1, 5)};
      return random_vec(rng, (*dims)[0] * (*dims)[1] + (*dims)[1]);
    };
    d.forward = [dims, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      T a = take(x, at, {(*dims)[0], (*dims)[1]}, tape, leaves);
      T b = take(x, at, {(*dims)[1]}, tape, leaves);
      return add_rowvector(a, b);
    };
    run_driver("add_rowvector", 10, d);
  }

  // batch_norm -----------------------------------------------------------
  auto bn_driver = [&](const std::string& name, std::uint64_t salt, BnMode mode) {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 2>>();
    d.sample = [dims, mode](RngStream& rng) {
      (*dims) = {rng.uniform_int(mode == BnMode::Train ? 2 : 1, 7), rng.uniform_int(1, 5)};
      const Eigen::Index r = (*dims)[0], c = (*dims)[1];
      Vec v(r * c + 2 * c);
      v.head(r * c) = random_vec(rng, r * c);
      for (Eigen::Index j = 0; j < c; ++j) v(r * c + j) = rng.uniform(0.5, 1.5);        // gamma
      for (Eigen::Index j = 0; j < c; ++j) v(r * c + c + j) = rng.uniform(-0.5, 0.5);  // beta
      return v;
    };
    d.forward = [dims, take, mode](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      const Eigen::Index r = (*dims)[0], c = (*dims)[1];
      T xs = take(x, at, {r, c}, tape, leaves);
      T gamma = take(x, at, {c}, tape, leaves);
      T beta = take(x, at, {c}, tape, leaves);
      BnState<double> state = BnState<double>::init(c);
      state.running_mean.setConstant(0.1);
      state.running_var.setConstant(0.8);
      return mode == BnMode::Train ? batch_norm_train(xs, gamma, beta, state)
                                   : batch_norm_eval(xs, gamma, beta, state);
    };
    run_driver(name, salt, d);
  };
  bn_driver("batch_norm_train", 11, BnMode::Train);
  bn_driver("batch_norm_eval", 12, BnMode::Eval);

  // max_over_points (tie-free samples) ------------------------------------
  {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 3>>();
    d.sample = [dims](RngStream& rng) {
      (*dims) = {rng.uniform_int(1, 4), rng.uniform_int(1, 6), rng.uniform_int(1, 4)};
      const Eigen::Index B = (*dims)[0], N = (*dims)[1], dd = (*dims)[2];
      for (;;) {
        Vec v = random_vec(rng, B * N * dd);
        bool ok = true;
        for (Eigen::Index b = 0; b < B && ok; ++b) {
          for (Eigen::Index j = 0; j < dd && ok; ++j) {
            double best = -1e300, second = -1e300;
            for (Eigen::Index n = 0; n < N; ++n) {
              const double val = v((b * N + n) * dd + j);
              if (val > best) {
                second = best;
                best = val;
              } else if (val > second) {
                second = val;
              }
            }
            if (N > 1 && best - second < 1e-3) ok = false;
          }
        }
        if (ok) return v;
      }
    };
    d.forward = [dims, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return max_over_points(take(x, at, {(*dims)[0], (*dims)[1], (*dims)[2]}, tape, leaves));
    };
    run_driver("max_over_points", 13, d);
  }

  // l2_normalize (rows away from zero) ------------------------------------
  {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 2>>();
    d.sample = [dims](RngStream& rng) {
      (*dims) = {rng.uniform_int(1, 5), rng.uniform_int(1, 5)};
      const Eigen::Index r = (*dims)[0], c = (*dims)[1];
      for (;;) {
        Vec v = random_vec(rng, r * c);
        bool ok = true;
        for (Eigen::Index i = 0; i < r && ok; ++i)
          if (v.segment(i * c, c).norm() < 0.3) ok = false;
        if (ok) return v;
      }
    };
    d.forward = [dims, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return l2_normalize(take(x, at, {(*dims)[0], (*dims)[1]}, tape, leaves));
    };
    run_driver("l2_normalize", 14, d);
  }

  // reductions -------------------------------------------------------------
  {
    Driver d;
    auto n = std::make_shared<Eigen::Index>(0);
    d.sample = [n](RngStream& rng) {
      *n = rng.uniform_int(1, 9);
      return random_vec(rng, *n);
    };
    d.forward = [n, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return sum(take(x, at, {*n}, tape, leaves));
    };
    run_driver("sum", 15, d);
    d.forward = [n, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return mean(take(x, at, {*n}, tape, leaves));
    };
    run_driver("mean", 16, d);
  }

  // softmax cross-entropy ---------------------------------------------------
  {
    Driver d;
    auto dims = std::make_shared<std::array<Eigen::Index, 2>>();
    auto labels = std::make_shared<std::vector<int>>();
    d.sample = [dims, labels](RngStream& rng) {
      (*dims) = {rng.uniform_int(1, 6), rng.uniform_int(2, 6)};
      labels->clear();
      for (Eigen::Index i = 0; i < (*dims)[0]; ++i)
        labels->push_back(rng.uniform_int(0, static_cast<int>((*dims)[1])));
      return random_vec(rng, (*dims)[0] * (*dims)[1], -2.0, 2.0);
    };
    d.forward = [dims, labels, take](const Vec& x, Tape<double>* tape, std::vector<T>* leaves) {
      Eigen::Index at = 0;
      return softmax_cross_entropy(take(x, at, {(*dims)[0], (*dims)[1]}, tape, leaves), *labels);
    };
    run_driver("softmax_cross_entropy", 18, d);
  }

  // Full chain: byol_loss(predict(project(encode(x))), fixed target) --------
  {
    RngStream op_rng = root.child(17);
    double worst = 0.0;
    const int chain_trials = trials_per_op;
    for (int trial = 0; trial < chain_trials; ++trial) {
      ModelConfig mc;
      mc.encoder_widths = {4, 5};
      mc.projector_hidden = 8;
      mc.projector_dim = 4;
      const Eigen::Index B = 2, N = 3;

      DualNetState<double> state;
      Vec x0;
      RowMat<double> target(B, mc.projector_dim);
      T target_t;

      auto forward_loss = [&](DualNetState<double>& s, const Vec& xv, Tape<double>* tape, ParamSet<double>* bound,
                              Tensor<double>* x_leaf) {
        T x = tape ? tape->leaf({B, N, 3}, xv) : T({B, N, 3}, xv);
        if (x_leaf) *x_leaf = x;
        T z = project(s.online_projector, encode(x, s.online_encoder, BnMode::Train, tape, bound), BnMode::Train,
                      tape, bound);
        T p = predict(s.predictor, z, BnMode::Train, tape, bound);
        return byol_loss(p, target_t);
      };

      // Tiny heads can zero out a whole row through relu, which parks the
      // loss on the normalization singularity; sample instances away from it,
      // the same way the max check samples away from ties.
      for (std::uint64_t attempt = 0;; ++attempt) {
        RngStream trial_rng = op_rng.child(static_cast<std::uint64_t>(trial)).child(attempt);
        RngStream init_rng = trial_rng.child(0);
        state = init_dual_net<double>(init_rng, mc);
        RngStream data_rng = trial_rng.child(1);
        x0 = random_vec(data_rng, B * N * 3);
        for (Eigen::Index i = 0; i < target.size(); ++i)
          target(i / target.cols(), i % target.cols()) = data_rng.uniform(-1.0, 1.0);
        target_t = T::from_matrix(target);

        T x = T({B, N, 3}, x0);
        T z = project(state.online_projector, encode(x, state.online_encoder, BnMode::Train), BnMode::Train);
        T p = predict(state.predictor, z, BnMode::Train);
        double min_norm = std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < B; ++r) min_norm = std::min(min_norm, p.mat().row(r).norm());
        if (min_norm > 5e-2) break;
      }

      Tape<double> tape;
      ParamSet<double> bound;
      T x_leaf;
      T loss = forward_loss(state, x0, &tape, &bound, &x_leaf);
      tape.backward(loss);

      // Central difference with step refinement: a coarse estimate can be
      // invalid near a relu kink crossed by the +/- h evaluations, or carry
      // large truncation error where a near-degenerate batch-norm variance
      // blows up the curvature. Smaller steps give strictly better estimates
      // in both cases, while a genuine backward bug disagrees at every step
      // size (a finite analytic offset cannot shrink with h).
      auto coord_error = [&](const std::function<double(double)>& eval_at, double analytic_g) {
        auto central = [&](double h) { return (eval_at(h) - eval_at(-h)) / (2.0 * h); };
        double err = fd_rel_error(central(step), analytic_g);
        for (double div : {8.0, 64.0, 512.0}) {
          if (err < tol) break;
          err = fd_rel_error(central(step / div), analytic_g);
        }
        return err;
      };

      // Finite differences over the input and every bound parameter, nudging
      // the live parameter storage through the binding pointers. Train-mode
      // outputs depend only on batch statistics, so the running-stat updates
      // that re-evaluation triggers do not disturb the values under test.
      Vec x_grad = tape.grad(x_leaf).data();
      for (Eigen::Index i = 0; i < x0.size(); ++i) {
        auto eval_at = [&](double delta) {
          Vec xp = x0;
          xp(i) += delta;
          return forward_loss(state, xp, nullptr, nullptr, nullptr).value();
        };
        worst = std::max(worst, coord_error(eval_at, x_grad(i)));
      }
      for (const auto& p : bound) {
        const Vec g = tape.grad(p.leaf).data();
        for (Eigen::Index i = 0; i < p.size; ++i) {
          const double keep = p.dst[i];
          auto eval_at = [&](double delta) {
            p.dst[i] = keep + delta;
            const double v = forward_loss(state, x0, nullptr, nullptr, nullptr).value();
            p.dst[i] = keep;
            return v;
          };
          worst = std::max(worst, coord_error(eval_at, g(i)));
        }
      }
    }
    add_result("encoder_projector_predictor_chain", worst);
  }

  return result;
}

}  // namespace pointssl
