#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pointssl {

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Shape = std::vector<Eigen::Index>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline Eigen::Index shape_size(const Shape& s) {
  Eigen::Index n = 1;
  for (auto e : s) n *= e;
  return n;
}

template <typename Scalar>
class Tape;

// Dense tensor over a flat row-major buffer. Copies share storage; every op
// allocates a fresh result. A tensor created through a tape remembers its
// node id so backward() can route gradients to it.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, VecX<Scalar> data) : shape_(std::move(shape)) {
    for (auto e : shape_) {
      if (e <= 0) throw std::invalid_argument("tensor shape " + shape_str(shape_) + " has a non-positive extent");
    }
    if (data.size() != shape_size(shape_))
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape_));
    data_ = std::make_shared<const VecX<Scalar>>(std::move(data));
  }

  static Tensor scalar_value(Scalar v) {
    VecX<Scalar> d(1);
    d(0) = v;
    return Tensor({1}, std::move(d));
  }

  static Tensor from_matrix(const RowMat<Scalar>& m) {
    return Tensor({m.rows(), m.cols()}, Eigen::Map<const VecX<Scalar>>(m.data(), m.size()));
  }

  static Tensor from_rowvec(const RowVec<Scalar>& v) { return Tensor({v.size()}, v.transpose()); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Eigen::Index dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Eigen::Index size() const { return data_ ? data_->size() : 0; }
  bool is_scalar() const { return size() == 1; }

  Scalar value() const {
    if (!is_scalar()) throw std::invalid_argument("value() requires a scalar tensor, got shape " + shape_str(shape_));
    return (*data_)(0);
  }

  const VecX<Scalar>& data() const { return *data_; }

  // Rank-2 row-major view; rank-1 tensors map to a single row.
  Eigen::Map<const RowMat<Scalar>> mat() const {
    if (rank() == 1) return {data_->data(), 1, shape_[0]};
    if (rank() != 2) throw std::invalid_argument("mat() requires a rank-2 tensor, got shape " + shape_str(shape_));
    return {data_->data(), shape_[0], shape_[1]};
  }

  bool requires_grad() const { return requires_grad_; }
  Tape<Scalar>* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr && node_ >= 0; }

  // Same storage, detached from any tape.
  Tensor detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

  // Same storage and tape node under a new shape.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    for (auto e : shape) {
      if (e <= 0) throw std::invalid_argument("reshape: shape " + shape_str(shape) + " has a non-positive extent");
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

 private:
  template <typename S>
  friend class Tape;

  Shape shape_{};
  std::shared_ptr<const VecX<Scalar>> data_{};
  Tape<Scalar>* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  return x.reshaped(std::move(shape));
}

// Reverse-mode tape. Nodes are appended in execution order, so parents always
// precede children; backward() sweeps once from the loss node to node 0.
// Rebuilt per training step.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const VecX<Scalar>&)>;

  Tensor<Scalar> leaf(Shape shape, VecX<Scalar> data, bool requires_grad = true) {
    Tensor<Scalar> t(std::move(shape), std::move(data));
    if (requires_grad) {
      t.tape_ = this;
      t.node_ = record(t.size(), {});
      t.requires_grad_ = true;
    }
    return t;
  }

  Tensor<Scalar> leaf_matrix(const RowMat<Scalar>& m, bool requires_grad = true) {
    return leaf({m.rows(), m.cols()}, Eigen::Map<const VecX<Scalar>>(m.data(), m.size()), requires_grad);
  }

  Tensor<Scalar> leaf_rowvec(const RowVec<Scalar>& v, bool requires_grad = true) {
    return leaf({v.size()}, v.transpose(), requires_grad);
  }

  int record(Eigen::Index out_size, BackwardFn fn) {
    nodes_.push_back(Node{out_size, std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Tensor<Scalar> make_result(Shape shape, VecX<Scalar> data, BackwardFn fn) {
    Tensor<Scalar> t(std::move(shape), std::move(data));
    t.tape_ = this;
    t.node_ = record(t.size(), std::move(fn));
    return t;
  }

  std::size_t node_count() const { return nodes_.size(); }

  void backward(const Tensor<Scalar>& loss) {
    if (loss.tape() != this || !loss.on_tape())
      throw std::invalid_argument("backward: loss tensor is not recorded on this tape");
    if (!loss.is_scalar())
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    grads_.assign(nodes_.size(), VecX<Scalar>{});
    grads_[static_cast<std::size_t>(loss.node())] = VecX<Scalar>::Ones(1);
    for (int i = loss.node(); i >= 0; --i) {
      auto& g = grads_[static_cast<std::size_t>(i)];
      if (g.size() == 0) continue;
      if (nodes_[static_cast<std::size_t>(i)].backward) nodes_[static_cast<std::size_t>(i)].backward(*this, g);
    }
  }

  // Accumulate `g` into the gradient buffer of `node`; no-op for detached parents.
  template <typename Expr>
  void accumulate(int node, const Expr& g) {
    if (node < 0) return;
    auto& buf = grads_[static_cast<std::size_t>(node)];
    if (buf.size() == 0) buf = VecX<Scalar>::Zero(nodes_[static_cast<std::size_t>(node)].size);
    buf += g;
  }

  template <typename Expr>
  void accumulate_mat(int node, const Expr& g) {
    if (node < 0) return;
    RowMat<Scalar> m = g;
    accumulate(node, Eigen::Map<const VecX<Scalar>>(m.data(), m.size()));
  }

  // Gradient of a tensor after backward(); zero if the tensor was unreachable.
  Tensor<Scalar> grad(const Tensor<Scalar>& t) const {
    if (t.tape() != this || !t.on_tape())
      throw std::invalid_argument("grad: tensor is not recorded on this tape");
    const auto& buf = grads_.at(static_cast<std::size_t>(t.node()));
    if (buf.size() == 0) return Tensor<Scalar>(t.shape(), VecX<Scalar>::Zero(t.size()));
    return Tensor<Scalar>(t.shape(), buf);
  }

 private:
  struct Node {
    Eigen::Index size;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<VecX<Scalar>> grads_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>* merge_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Tape<Scalar>* ta = a.on_tape() ? a.tape() : nullptr;
  Tape<Scalar>* tb = b.on_tape() ? b.tape() : nullptr;
  if (ta && tb && ta != tb) throw std::invalid_argument("operands belong to different tapes");
  return ta ? ta : tb;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops: equal shapes, or one operand a scalar tensor.

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Tape<Scalar>* tape = detail::merge_tape(a, b);
  if (a.shape() == b.shape()) {
    VecX<Scalar> out = a.data() + b.data();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb](Tape<Scalar>& t, const VecX<Scalar>& g) {
      t.accumulate(pa, g);
      t.accumulate(pb, g);
    });
  }
  if (b.is_scalar()) {
    VecX<Scalar> out = a.data().array() + b.value();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb](Tape<Scalar>& t, const VecX<Scalar>& g) {
      t.accumulate(pa, g);
      if (pb >= 0) t.accumulate(pb, VecX<Scalar>::Constant(1, g.sum()));
    });
  }
  if (a.is_scalar()) return add(b, a);
  throw std::invalid_argument("add: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Tape<Scalar>* tape = detail::merge_tape(a, b);
  if (a.shape() == b.shape()) {
    VecX<Scalar> out = a.data() - b.data();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb](Tape<Scalar>& t, const VecX<Scalar>& g) {
      t.accumulate(pa, g);
      t.accumulate(pb, -g);
    });
  }
  if (b.is_scalar()) {
    VecX<Scalar> out = a.data().array() - b.value();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb](Tape<Scalar>& t, const VecX<Scalar>& g) {
      t.accumulate(pa, g);
      if (pb >= 0) t.accumulate(pb, VecX<Scalar>::Constant(1, -g.sum()));
    });
  }
  if (a.is_scalar()) {
    VecX<Scalar> out = a.value() - b.data().array();
    if (!tape) return Tensor<Scalar>(b.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(b.shape(), std::move(out), [pa, pb](Tape<Scalar>& t, const VecX<Scalar>& g) {
      if (pa >= 0) t.accumulate(pa, VecX<Scalar>::Constant(1, g.sum()));
      t.accumulate(pb, -g);
    });
  }
  throw std::invalid_argument("sub: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  Tape<Scalar>* tape = detail::merge_tape(a, b);
  if (a.shape() == b.shape()) {
    VecX<Scalar> out = (a.data().array() * b.data().array()).matrix();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb, a, b](Tape<Scalar>& t, const VecX<Scalar>& g) {
      if (pa >= 0) t.accumulate(pa, (g.array() * b.data().array()).matrix());
      if (pb >= 0) t.accumulate(pb, (g.array() * a.data().array()).matrix());
    });
  }
  if (b.is_scalar()) {
    VecX<Scalar> out = a.data() * b.value();
    if (!tape) return Tensor<Scalar>(a.shape(), std::move(out));
    const int pa = a.node(), pb = b.node();
    return tape->make_result(a.shape(), std::move(out), [pa, pb, a, b](Tape<Scalar>& t, const VecX<Scalar>& g) {
      if (pa >= 0) t.accumulate(pa, g * b.value());
      if (pb >= 0) t.accumulate(pb, VecX<Scalar>::Constant(1, g.dot(a.data())));
    });
  }
  if (a.is_scalar()) return mul(b, a);
  throw std::invalid_argument("mul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  VecX<Scalar> out = a.data() * c;
  if (!a.on_tape()) return Tensor<Scalar>(a.shape(), std::move(out));
  const int pa = a.node();
  return a.tape()->make_result(a.shape(), std::move(out), [pa, c](Tape<Scalar>& t, const VecX<Scalar>& g) {
    t.accumulate(pa, g * c);
  });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar c) {
  VecX<Scalar> out = a.data().array() + c;
  if (!a.on_tape()) return Tensor<Scalar>(a.shape(), std::move(out));
  const int pa = a.node();
  return a.tape()->make_result(a.shape(), std::move(out), [pa](Tape<Scalar>& t, const VecX<Scalar>& g) {
    t.accumulate(pa, g);
  });
}

// relu gradient is 0 at exactly 0 (subgradient convention, kept deterministic).
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  VecX<Scalar> out = a.data().cwiseMax(Scalar(0));
  if (!a.on_tape()) return Tensor<Scalar>(a.shape(), std::move(out));
  const int pa = a.node();
  return a.tape()->make_result(a.shape(), std::move(out), [pa, a](Tape<Scalar>& t, const VecX<Scalar>& g) {
    t.accumulate(pa, (g.array() * (a.data().array() > Scalar(0)).template cast<Scalar>()).matrix());
  });
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " * " +
                                shape_str(b.shape()));
  const Eigen::Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Eigen::Map<const RowMat<Scalar>> A(a.data().data(), m, k);
  Eigen::Map<const RowMat<Scalar>> B(b.data().data(), k, n);
  RowMat<Scalar> C = A * B;
  Tape<Scalar>* tape = detail::merge_tape(a, b);
  VecX<Scalar> out = Eigen::Map<const VecX<Scalar>>(C.data(), C.size());
  if (!tape) return Tensor<Scalar>({m, n}, std::move(out));
  const int pa = a.node(), pb = b.node();
  return tape->make_result({m, n}, std::move(out), [pa, pb, a, b, m, k, n](Tape<Scalar>& t, const VecX<Scalar>& g) {
    Eigen::Map<const RowMat<Scalar>> G(g.data(), m, n);
    Eigen::Map<const RowMat<Scalar>> A(a.data().data(), m, k);
    Eigen::Map<const RowMat<Scalar>> B(b.data().data(), k, n);
    if (pa >= 0) t.accumulate_mat(pa, G * B.transpose());
    if (pb >= 0) t.accumulate_mat(pb, A.transpose() * G);
  });
}

// y[i,j] = x[i,j] + bias[j]
template <typename Scalar>
Tensor<Scalar> add_rowvector(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw std::invalid_argument("add_rowvector: incompatible shapes " + shape_str(x.shape()) + " and " +
                                shape_str(bias.shape()));
  const Eigen::Index r = x.dim(0), c = x.dim(1);
  RowMat<Scalar> Y = Eigen::Map<const RowMat<Scalar>>(x.data().data(), r, c);
  Y.rowwise() += bias.data().transpose();
  Tape<Scalar>* tape = detail::merge_tape(x, bias);
  VecX<Scalar> out = Eigen::Map<const VecX<Scalar>>(Y.data(), Y.size());
  if (!tape) return Tensor<Scalar>({r, c}, std::move(out));
  const int px = x.node(), pb = bias.node();
  return tape->make_result({r, c}, std::move(out), [px, pb, r, c](Tape<Scalar>& t, const VecX<Scalar>& g) {
    t.accumulate(px, g);
    if (pb >= 0) {
      Eigen::Map<const RowMat<Scalar>> G(g.data(), r, c);
      t.accumulate(pb, G.colwise().sum().transpose());
    }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization over the row axis of an [R x C] tensor.

enum class BnMode { Train, Eval };

template <typename Scalar>
struct BnState {
  RowVec<Scalar> gamma;
  RowVec<Scalar> beta;
  RowVec<Scalar> running_mean;
  RowVec<Scalar> running_var;
  Scalar momentum = Scalar(0.9);  // retention of the previous running stats
  Scalar eps = Scalar(1e-5);

  static BnState init(Eigen::Index width) {
    BnState s;
    s.gamma = RowVec<Scalar>::Ones(width);
    s.beta = RowVec<Scalar>::Zero(width);
    s.running_mean = RowVec<Scalar>::Zero(width);
    s.running_var = RowVec<Scalar>::Ones(width);
    return s;
  }
};

namespace detail {

template <typename Scalar>
Tape<Scalar>* merge_tape3(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const Tensor<Scalar>& c) {
  Tape<Scalar>* t = merge_tape(a, b);
  Tape<Scalar>* tc = c.on_tape() ? c.tape() : nullptr;
  if (t && tc && t != tc) throw std::invalid_argument("operands belong to different tapes");
  return t ? t : tc;
}

// Shared affine-normalization path; `mean`/`inv_std` are treated as constants
// w.r.t. x (the eval-mode rule).
template <typename Scalar>
Tensor<Scalar> batch_norm_affine(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                                 const RowVec<Scalar>& mean, const RowVec<Scalar>& inv_std) {
  const Eigen::Index r = x.dim(0), c = x.dim(1);
  Eigen::Map<const RowMat<Scalar>> X(x.data().data(), r, c);
  RowMat<Scalar> centered = X.rowwise() - mean;
  RowMat<Scalar> xhat = (centered.array().rowwise() * inv_std.array()).matrix();
  RowVec<Scalar> gamma_vals = gamma.data().transpose();
  RowMat<Scalar> Y = (xhat.array().rowwise() * gamma_vals.array()).matrix();
  Y.rowwise() += beta.data().transpose();
  Tape<Scalar>* tape = merge_tape3(x, gamma, beta);
  VecX<Scalar> out = Eigen::Map<const VecX<Scalar>>(Y.data(), Y.size());
  if (!tape) return Tensor<Scalar>({r, c}, std::move(out));
  const int px = x.node(), pg = gamma.node(), pb = beta.node();
  auto xhat_saved = std::make_shared<const RowMat<Scalar>>(std::move(xhat));
  RowVec<Scalar> dscale = (gamma_vals.array() * inv_std.array()).matrix();
  return tape->make_result({r, c}, std::move(out),
                           [px, pg, pb, r, c, xhat_saved, dscale](Tape<Scalar>& t, const VecX<Scalar>& g) {
    Eigen::Map<const RowMat<Scalar>> G(g.data(), r, c);
    if (pg >= 0) t.accumulate(pg, ((G.array() * xhat_saved->array()).colwise().sum()).matrix().transpose());
    if (pb >= 0) t.accumulate(pb, G.colwise().sum().transpose());
    if (px >= 0) t.accumulate_mat(px, (G.array().rowwise() * dscale.array()).matrix());
  });
}

}  // namespace detail

// Train mode: normalizes by batch statistics, updates running stats in-place.
template <typename Scalar>
Tensor<Scalar> batch_norm_train(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                                BnState<Scalar>& state) {
  if (x.rank() != 2)
    throw std::invalid_argument("batch_norm: expects a rank-2 tensor, got " + shape_str(x.shape()));
  const Eigen::Index r = x.dim(0), c = x.dim(1);
  if (r < 2)
    throw std::invalid_argument("batch_norm: train mode requires at least 2 rows, got " + std::to_string(r));
  Eigen::Map<const RowMat<Scalar>> X(x.data().data(), r, c);
  RowVec<Scalar> mean = X.colwise().mean();
  RowMat<Scalar> centered = X.rowwise() - mean;
  RowVec<Scalar> var = centered.array().square().colwise().mean();
  state.running_mean = state.momentum * state.running_mean + (Scalar(1) - state.momentum) * mean;
  state.running_var = state.momentum * state.running_var + (Scalar(1) - state.momentum) * var;
  RowVec<Scalar> inv_std = (var.array() + state.eps).rsqrt().matrix();

  RowMat<Scalar> xhat = (centered.array().rowwise() * inv_std.array()).matrix();
  RowVec<Scalar> gamma_vals = gamma.data().transpose();
  RowMat<Scalar> Y = (xhat.array().rowwise() * gamma_vals.array()).matrix();
  Y.rowwise() += beta.data().transpose();
  Tape<Scalar>* tape = detail::merge_tape3(x, gamma, beta);
  VecX<Scalar> out = Eigen::Map<const VecX<Scalar>>(Y.data(), Y.size());
  if (!tape) return Tensor<Scalar>({r, c}, std::move(out));

  const int px = x.node(), pg = gamma.node(), pb = beta.node();
  auto xhat_saved = std::make_shared<const RowMat<Scalar>>(std::move(xhat));
  return tape->make_result({r, c}, std::move(out),
                           [px, pg, pb, r, c, xhat_saved, inv_std, gamma_vals](Tape<Scalar>& t,
                                                                               const VecX<Scalar>& g) {
    Eigen::Map<const RowMat<Scalar>> G(g.data(), r, c);
    const RowMat<Scalar>& xhat = *xhat_saved;
    if (pg >= 0) t.accumulate(pg, ((G.array() * xhat.array()).colwise().sum()).matrix().transpose());
    if (pb >= 0) t.accumulate(pb, G.colwise().sum().transpose());
    if (px >= 0) {
      RowMat<Scalar> dxhat = (G.array().rowwise() * gamma_vals.array()).matrix();
      RowVec<Scalar> sum_dxhat = dxhat.colwise().sum();
      RowVec<Scalar> sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum().matrix();
      RowMat<Scalar> dx = Scalar(r) * dxhat;
      dx.rowwise() -= sum_dxhat;
      dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
      dx.array().rowwise() *= (inv_std / Scalar(r)).array();
      t.accumulate_mat(px, dx);
    }
  });
}

// Eval mode: normalizes by running statistics; pure.
template <typename Scalar>
Tensor<Scalar> batch_norm_eval(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                               const BnState<Scalar>& state) {
  if (x.rank() != 2)
    throw std::invalid_argument("batch_norm: expects a rank-2 tensor, got " + shape_str(x.shape()));
  RowVec<Scalar> inv_std = (state.running_var.array() + state.eps).rsqrt().matrix();
  return detail::batch_norm_affine(x, gamma, beta, state.running_mean, inv_std);
}

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          BnState<Scalar>& state, BnMode mode) {
  return mode == BnMode::Train ? batch_norm_train(x, gamma, beta, state) : batch_norm_eval(x, gamma, beta, state);
}

// ---------------------------------------------------------------------------

// Per-feature maximum over the middle axis of a [B x N x d] tensor. Ties break
// toward the lowest point index, so gradients are deterministic.
template <typename Scalar>
Tensor<Scalar> max_over_points(const Tensor<Scalar>& x) {
  if (x.rank() != 3)
    throw std::invalid_argument("max_over_points: expects a rank-3 tensor, got " + shape_str(x.shape()));
  const Eigen::Index B = x.dim(0), N = x.dim(1), d = x.dim(2);
  if (N < 1) throw std::invalid_argument("max_over_points: needs at least one point");
  VecX<Scalar> out(B * d);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(B * d));
  const auto& v = x.data();
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index j = 0; j < d; ++j) {
      Scalar best = v((b * N) * d + j);
      Eigen::Index best_n = 0;
      for (Eigen::Index n = 1; n < N; ++n) {
        const Scalar cand = v((b * N + n) * d + j);
        if (cand > best) {
          best = cand;
          best_n = n;
        }
      }
      out(b * d + j) = best;
      argmax[static_cast<std::size_t>(b * d + j)] = best_n;
    }
  }
  if (!x.on_tape()) return Tensor<Scalar>({B, d}, std::move(out));
  const int px = x.node();
  auto idx = std::make_shared<const std::vector<Eigen::Index>>(std::move(argmax));
  const Eigen::Index total = x.size();
  return x.tape()->make_result({B, d}, std::move(out),
                               [px, idx, B, N, d, total](Tape<Scalar>& t, const VecX<Scalar>& g) {
    VecX<Scalar> dx = VecX<Scalar>::Zero(total);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index j = 0; j < d; ++j)
        dx((b * N + (*idx)[static_cast<std::size_t>(b * d + j)]) * d + j) += g(b * d + j);
    t.accumulate(px, dx);
  });
}

// Row-wise L2 normalization of a [R x C] tensor. Near-zero rows are rejected
// rather than clamped: they signal a degenerate embedding.
template <typename Scalar>
Tensor<Scalar> l2_normalize(const Tensor<Scalar>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("l2_normalize: expects a rank-2 tensor, got " + shape_str(x.shape()));
  const Eigen::Index r = x.dim(0), c = x.dim(1);
  Eigen::Map<const RowMat<Scalar>> X(x.data().data(), r, c);
  VecX<Scalar> norms = X.rowwise().norm();
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!(norms(i) > Scalar(1e-12)))
      throw std::invalid_argument("l2_normalize: row " + std::to_string(i) + " has near-zero norm");
  }
  RowMat<Scalar> Y = (X.array().colwise() / norms.array()).matrix();
  VecX<Scalar> out = Eigen::Map<const VecX<Scalar>>(Y.data(), Y.size());
  if (!x.on_tape()) return Tensor<Scalar>({r, c}, std::move(out));
  const int px = x.node();
  auto y_saved = std::make_shared<const RowMat<Scalar>>(std::move(Y));
  return x.tape()->make_result({r, c}, std::move(out),
                               [px, y_saved, norms, r, c](Tape<Scalar>& t, const VecX<Scalar>& g) {
    Eigen::Map<const RowMat<Scalar>> G(g.data(), r, c);
    const RowMat<Scalar>& Y = *y_saved;
    VecX<Scalar> row_dots = (G.array() * Y.array()).rowwise().sum().matrix();
    RowMat<Scalar> dx = G - (Y.array().colwise() * row_dots.array()).matrix();
    dx = (dx.array().colwise() / norms.array()).matrix();
    t.accumulate_mat(px, dx);
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  VecX<Scalar> out(1);
  out(0) = x.data().sum();
  if (!x.on_tape()) return Tensor<Scalar>({1}, std::move(out));
  const int px = x.node();
  const Eigen::Index n = x.size();
  return x.tape()->make_result({1}, std::move(out), [px, n](Tape<Scalar>& t, const VecX<Scalar>& g) {
    t.accumulate(px, VecX<Scalar>::Constant(n, g(0)));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

// Mean softmax cross-entropy of [B x C] logits against integer labels,
// computed via the log-sum-exp shift. Backward is (softmax - onehot) / B.
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("softmax_cross_entropy: expects rank-2 logits, got " + shape_str(logits.shape()));
  const Eigen::Index r = logits.dim(0), c = logits.dim(1);
  if (static_cast<Eigen::Index>(labels.size()) != r)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(r) + " rows");
  Eigen::Map<const RowMat<Scalar>> L(logits.data().data(), r, c);
  RowMat<Scalar> probs(r, c);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < r; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(c) + ")");
    const Scalar m = L.row(i).maxCoeff();
    const RowVec<Scalar> shifted = L.row(i).array() - m;
    const Scalar lse = m + std::log(shifted.array().exp().sum());
    probs.row(i) = (L.row(i).array() - lse).exp();
    total += lse - L(i, y);
  }
  VecX<Scalar> out(1);
  out(0) = total / static_cast<Scalar>(r);
  if (!logits.on_tape()) return Tensor<Scalar>({1}, std::move(out));
  const int pl = logits.node();
  auto probs_saved = std::make_shared<const RowMat<Scalar>>(std::move(probs));
  auto labels_saved = std::make_shared<const std::vector<int>>(labels);
  return logits.tape()->make_result({1}, std::move(out),
                                    [pl, probs_saved, labels_saved, r, c](Tape<Scalar>& t, const VecX<Scalar>& g) {
    RowMat<Scalar> d = *probs_saved;
    for (Eigen::Index i = 0; i < r; ++i) d(i, (*labels_saved)[static_cast<std::size_t>(i)]) -= Scalar(1);
    d *= g(0) / static_cast<Scalar>(r);
    t.accumulate_mat(pl, d);
  });
}

}  // namespace pointssl
