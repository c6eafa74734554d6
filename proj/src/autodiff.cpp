#include "mmasr/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace mmasr {

namespace {

template <typename Scalar>
std::string dims(const Var<Scalar>& v) {
  std::ostringstream s;
  s << '[' << v.rows() << 'x' << v.cols() << ']';
  return s.str();
}

template <typename Scalar>
void require_same_tape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw StateError(std::string(op) + ": operands live on different tapes");
}

enum class Broadcast { none, column, scalar };

template <typename Scalar>
Broadcast broadcast_kind(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (b.rows() == a.rows() && b.cols() == 1) return Broadcast::column;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + dims(a) + " and " + dims(b));
}

template <typename Scalar>
Matrix<Scalar> expand(const Matrix<Scalar>& b, Eigen::Index rows, Eigen::Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::none: return b;
    case Broadcast::column: return b.replicate(1, cols);
    case Broadcast::scalar: return Matrix<Scalar>::Constant(rows, cols, b(0, 0));
  }
  return b;
}

template <typename Scalar>
Matrix<Scalar> reduce(const Matrix<Scalar>& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::none: return g;
    case Broadcast::column: return g.rowwise().sum();
    case Broadcast::scalar: return Matrix<Scalar>::Constant(1, 1, g.sum());
  }
  return g;
}

void check_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1) throw DimensionError(std::string(op) + ": axis must be 0 or 1");
}

}  // namespace

// --- Tape ------------------------------------------------------------------

template <typename Scalar>
Tape<Scalar>::Tape(bool record_gradients) : record_(record_gradients) {}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::push(Node node) {
  if (check_finite_ && !node.value.allFinite())
    throw NumericError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  nodes_.push_back(std::move(node));
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::variable(Mat value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::parameter(const Parameter<Scalar>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<Scalar>(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = record_ && p.trainable;
  n.param = &p;
  Var<Scalar> v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Mat value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var<Scalar>>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Mat value, std::span<const Var<Scalar>> inputs, BackwardFn backward) {
  if (backward_done_) throw StateError("tape: cannot record new ops after backward()");
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw StateError("tape: input belongs to another tape");
      n.requires_grad = n.requires_grad || in.requires_grad();
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <typename Scalar>
GradientMap<Scalar> Tape<Scalar>::backward(const Var<Scalar>& loss) {
  if (!record_) throw StateError("backward: tape was created without gradient recording");
  if (backward_done_) throw StateError("backward: already run on this tape; re-run the forward pass");
  if (&loss.tape() != this) throw StateError("backward: loss belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw DimensionError("backward: loss must be 1x1, got " + dims(loss));
  backward_done_ = true;

  if (nodes_[loss.id()].requires_grad) {
    nodes_[loss.id()].grad = Mat::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  GradientMap<Scalar> out;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.requires_grad && n.grad.size() != 0) out.emplace(param->name, n.grad);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> Tape<Scalar>::gradient(const Var<Scalar>& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// --- linear algebra ---------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner extents differ, " + dims(a) + " * " + dims(b));
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  Broadcast kind = broadcast_kind(a, b, "add");
  Matrix<Scalar> out = a.value() + expand(b.value(), a.rows(), a.cols(), kind);
  return a.tape().record(std::move(out), {a, b}, [a, b, kind](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, reduce(g, kind));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  Broadcast kind = broadcast_kind(a, b, "sub");
  Matrix<Scalar> out = a.value() - expand(b.value(), a.rows(), a.cols(), kind);
  return a.tape().record(std::move(out), {a, b}, [a, b, kind](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -reduce(g, kind));
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  Broadcast kind = broadcast_kind(a, b, "mul");
  Matrix<Scalar> bb = expand(b.value(), a.rows(), a.cols(), kind);
  Matrix<Scalar> out = a.value().cwiseProduct(bb);
  return a.tape().record(std::move(out), {a, b}, [a, b, kind](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(expand(b.value(), a.rows(), a.cols(), kind)));
    if (b.requires_grad()) t.accumulate(b, reduce<Scalar>(g.cwiseProduct(a.value()), kind));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, double factor) {
  const auto f = static_cast<Scalar>(factor);
  Matrix<Scalar> out = a.value() * f;
  return a.tape().record(std::move(out), {a},
                         [a, f](Tape<Scalar>& t, const Matrix<Scalar>& g) { t.accumulate(a, g * f); });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct(
                        a.value().unaryExpr([](Scalar x) { return x > Scalar(0) ? Scalar(1) : Scalar(0); })));
  });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  Matrix<Scalar> out =
      a.value().unaryExpr([&](Scalar x) { return Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2)); });
  return a.tape().record(std::move(out), {a}, [a, inv_sqrt2](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Scalar inv_sqrt_2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
    Matrix<Scalar> d = a.value().unaryExpr([&](Scalar x) {
      Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * inv_sqrt2));
      return cdf + x * inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return a.tape().record(out, {a}, [a, out](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct((Scalar(1) - out.array().square()).matrix()));
  });
}

// --- normalization ------------------------------------------------------------

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis) {
  check_axis(axis, "softmax");
  Matrix<Scalar> out(x.rows(), x.cols());
  if (axis == 0) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      auto col = x.value().col(c);
      auto e = (col.array() - col.maxCoeff()).exp();
      out.col(c) = e / e.sum();
    }
  } else {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      auto row = x.value().row(r);
      auto e = (row.array() - row.maxCoeff()).exp();
      out.row(r) = e / e.sum();
    }
  }
  return x.tape().record(out, {x}, [x, out, axis](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> gy = g.cwiseProduct(out);
    Matrix<Scalar> dx(out.rows(), out.cols());
    if (axis == 0)
      dx = gy - out * gy.colwise().sum().asDiagonal();
    else
      dx = gy - gy.rowwise().sum().asDiagonal() * out;
    t.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& x, int axis) {
  check_axis(axis, "log_softmax");
  Matrix<Scalar> out(x.rows(), x.cols());
  if (axis == 0) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      auto col = x.value().col(c);
      Scalar m = col.maxCoeff();
      Scalar lse = m + std::log((col.array() - m).exp().sum());
      out.col(c) = col.array() - lse;
    }
  } else {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      auto row = x.value().row(r);
      Scalar m = row.maxCoeff();
      Scalar lse = m + std::log((row.array() - m).exp().sum());
      out.row(r) = row.array() - lse;
    }
  }
  return x.tape().record(out, {x}, [x, out, axis](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> p = out.array().exp().matrix();
    Matrix<Scalar> dx(out.rows(), out.cols());
    if (axis == 0)
      dx = g - p * g.colwise().sum().asDiagonal();
    else
      dx = g - g.rowwise().sum().asDiagonal() * p;
    t.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias, double eps) {
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const Eigen::Index d = x.rows();
  if (gain.rows() != d || gain.cols() != 1 || bias.rows() != d || bias.cols() != 1)
    throw DimensionError("layer_norm: input " + dims(x) + " needs gain/bias of [" + std::to_string(d) +
                         "x1], got " + dims(gain) + " and " + dims(bias));
  const Eigen::Index n = x.cols();
  Matrix<Scalar> xhat(d, n);
  Matrix<Scalar> inv_std(1, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    auto col = x.value().col(c);
    Scalar mu = col.mean();
    Scalar var = (col.array() - mu).square().mean();
    inv_std(0, c) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps));
    xhat.col(c) = (col.array() - mu) * inv_std(0, c);
  }
  Matrix<Scalar> out = gain.value().asDiagonal() * xhat;
  out.colwise() += bias.value().col(0);
  return x.tape().record(
      std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(xhat).rowwise().sum());
        if (bias.requires_grad()) t.accumulate(bias, g.rowwise().sum());
        if (!x.requires_grad()) return;
        Matrix<Scalar> dxhat = gain.value().asDiagonal() * g;
        Matrix<Scalar> dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index c = 0; c < dx.cols(); ++c) {
          Scalar m1 = dxhat.col(c).mean();
          Scalar m2 = dxhat.col(c).cwiseProduct(xhat.col(c)).mean();
          dx.col(c) = (dxhat.col(c).array() - m1 - xhat.col(c).array() * m2) * inv_std(0, c);
        }
        t.accumulate(x, dx);
      });
}

// --- structure ----------------------------------------------------------------

template <typename Scalar>
Var<Scalar> concat(std::span<const Var<Scalar>> parts, int axis) {
  check_axis(axis, "concat");
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Var<Scalar>& first = parts.front();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    require_same_tape(first, p, "concat");
    bool ok = axis == 0 ? p.cols() == first.cols() : p.rows() == first.rows();
    if (!ok)
      throw DimensionError("concat: shape " + dims(p) + " does not match " + dims(first) + " off axis " +
                           std::to_string(axis));
    total += axis == 0 ? p.rows() : p.cols();
  }
  Matrix<Scalar> out = axis == 0 ? Matrix<Scalar>(total, first.cols()) : Matrix<Scalar>(first.rows(), total);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    if (axis == 0) {
      out.middleRows(at, p.rows()) = p.value();
      at += p.rows();
    } else {
      out.middleCols(at, p.cols()) = p.value();
      at += p.cols();
    }
  }
  std::vector<Var<Scalar>> inputs(parts.begin(), parts.end());
  return first.tape().record(std::move(out), parts, [inputs, offsets, axis](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto& p = inputs[i];
      if (!p.requires_grad()) continue;
      if (axis == 0)
        t.accumulate(p, g.middleRows(offsets[i], p.rows()));
      else
        t.accumulate(p, g.middleCols(offsets[i], p.cols()));
    }
  });
}

template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, int axis, Eigen::Index start, Eigen::Index length) {
  check_axis(axis, "slice");
  const Eigen::Index extent = axis == 0 ? x.rows() : x.cols();
  if (start < 0 || length < 0 || start + length > extent)
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + dims(x) + " on axis " + std::to_string(axis));
  Matrix<Scalar> out = axis == 0 ? Matrix<Scalar>(x.value().middleRows(start, length))
                                 : Matrix<Scalar>(x.value().middleCols(start, length));
  return x.tape().record(std::move(out), {x}, [x, axis, start, length](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    if (axis == 0)
      dx.middleRows(start, length) = g;
    else
      dx.middleCols(start, length) = g;
    t.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x) {
  Matrix<Scalar> out = x.value().transpose();
  return x.tape().record(std::move(out), {x},
                         [x](Tape<Scalar>& t, const Matrix<Scalar>& g) { t.accumulate(x, g.transpose()); });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.value().size())
    throw DimensionError("reshape: cannot view " + dims(x) + " as [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "]");
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(x.value().data(), rows, cols);
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(x, Eigen::Map<const Matrix<Scalar>>(g.data(), x.rows(), x.cols()));
  });
}

template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, Eigen::Index rows, Eigen::Index cols,
                   std::shared_ptr<const std::vector<std::ptrdiff_t>> index) {
  if (static_cast<Eigen::Index>(index->size()) != rows * cols)
    throw DimensionError("gather: index table has " + std::to_string(index->size()) + " entries for [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "] output");
  const std::ptrdiff_t n = x.value().size();
  Matrix<Scalar> out(rows, cols);
  const Scalar* src = x.value().data();
  Scalar* dst = out.data();
  for (std::size_t i = 0; i < index->size(); ++i) {
    std::ptrdiff_t j = (*index)[i];
    if (j >= n) throw IndexError("gather: source index " + std::to_string(j) + " out of range for " + dims(x));
    dst[i] = j < 0 ? Scalar(0) : src[j];
  }
  return x.tape().record(std::move(out), {x}, [x, index](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    Scalar* d = dx.data();
    const Scalar* gs = g.data();
    for (std::size_t i = 0; i < index->size(); ++i)
      if ((*index)[i] >= 0) d[(*index)[i]] += gs[i];
    t.accumulate(x, dx);
  });
}

template <typename Scalar>
Var<Scalar> replicate_cols(const Var<Scalar>& x, Eigen::Index n) {
  if (x.cols() != 1) throw DimensionError("replicate_cols: expected a column, got " + dims(x));
  Matrix<Scalar> out = x.value().replicate(1, n);
  return x.tape().record(std::move(out), {x},
                         [x](Tape<Scalar>& t, const Matrix<Scalar>& g) { t.accumulate(x, g.rowwise().sum()); });
}

template <typename Scalar>
Var<Scalar> mean_cols(const Var<Scalar>& x) {
  const Eigen::Index n = x.cols();
  Matrix<Scalar> out = x.value().rowwise().mean();
  return x.tape().record(std::move(out), {x}, [x, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(x, (g / static_cast<Scalar>(n)).replicate(1, n));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Matrix<Scalar> out = Matrix<Scalar>::Constant(1, 1, x.value().sum());
  return x.tape().record(std::move(out), {x}, [x](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(x, Matrix<Scalar>::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ParameterError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const auto s = static_cast<Scalar>(1.0 / (1.0 - p));
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : Scalar(0);
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  return x.tape().record(std::move(out), {x}, [x, mask](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(x, g.cwiseProduct(mask));
  });
}

template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, std::span<const int> targets, double label_smoothing,
                          int pad_id, Reduction reduction) {
  const Eigen::Index vocab = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != logits.cols())
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         dims(logits));
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ParameterError("cross_entropy: label smoothing must be in [0, 1)");
  std::size_t counted = 0;
  for (int y : targets) {
    if (y == pad_id) continue;
    if (y < 0 || y >= vocab)
      throw IndexError("cross_entropy: target id " + std::to_string(y) + " outside vocabulary of " +
                       std::to_string(vocab));
    ++counted;
  }
  const Scalar eps = static_cast<Scalar>(label_smoothing);
  const Scalar uniform = eps / static_cast<Scalar>(vocab);
  const Scalar norm = reduction == Reduction::mean && counted > 0 ? Scalar(1) / static_cast<Scalar>(counted)
                                                                  : Scalar(1);

  // Columnwise log-softmax.
  Matrix<Scalar> logp(vocab, logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.value().col(c);
    Scalar m = col.maxCoeff();
    Scalar lse = m + std::log((col.array() - m).exp().sum());
    logp.col(c) = col.array() - lse;
  }
  Scalar loss = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    int y = targets[static_cast<std::size_t>(c)];
    if (y == pad_id) continue;
    loss -= (Scalar(1) - eps) * logp(y, c) + uniform * logp.col(c).sum();
  }
  loss *= norm;
  std::vector<int> ys(targets.begin(), targets.end());
  return logits.tape().record(
      Matrix<Scalar>::Constant(1, 1, loss), {logits},
      [logits, logp, ys, pad_id, eps, uniform, norm](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        Matrix<Scalar> d = Matrix<Scalar>::Zero(logp.rows(), logp.cols());
        for (Eigen::Index c = 0; c < logp.cols(); ++c) {
          int y = ys[static_cast<std::size_t>(c)];
          if (y == pad_id) continue;
          d.col(c) = logp.col(c).array().exp() - uniform;
          d(y, c) -= Scalar(1) - eps;
        }
        t.accumulate(logits, d * (norm * g(0, 0)));
      });
}

// --- instantiation -------------------------------------------------------------

#define MMASR_INSTANTIATE_AUTODIFF(S)                                                                       \
  template class Tape<S>;                                                                                   \
  template Var<S> matmul<S>(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                                     \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                                     \
  template Var<S> mul<S>(const Var<S>&, const Var<S>&);                                                     \
  template Var<S> scale<S>(const Var<S>&, double);                                                          \
  template Var<S> relu<S>(const Var<S>&);                                                                   \
  template Var<S> gelu<S>(const Var<S>&);                                                                   \
  template Var<S> tanh<S>(const Var<S>&);                                                                   \
  template Var<S> softmax<S>(const Var<S>&, int);                                                           \
  template Var<S> log_softmax<S>(const Var<S>&, int);                                                       \
  template Var<S> layer_norm<S>(const Var<S>&, const Var<S>&, const Var<S>&, double);                       \
  template Var<S> concat<S>(std::span<const Var<S>>, int);                                                  \
  template Var<S> slice<S>(const Var<S>&, int, Eigen::Index, Eigen::Index);                                 \
  template Var<S> transpose<S>(const Var<S>&);                                                              \
  template Var<S> reshape<S>(const Var<S>&, Eigen::Index, Eigen::Index);                                    \
  template Var<S> gather<S>(const Var<S>&, Eigen::Index, Eigen::Index,                                      \
                            std::shared_ptr<const std::vector<std::ptrdiff_t>>);                            \
  template Var<S> replicate_cols<S>(const Var<S>&, Eigen::Index);                                           \
  template Var<S> mean_cols<S>(const Var<S>&);                                                              \
  template Var<S> sum<S>(const Var<S>&);                                                                    \
  template Var<S> dropout<S>(const Var<S>&, double, Rng&);                                                  \
  template Var<S> cross_entropy<S>(const Var<S>&, std::span<const int>, double, int, Reduction);

MMASR_INSTANTIATE_AUTODIFF(float)
MMASR_INSTANTIATE_AUTODIFF(double)

#undef MMASR_INSTANTIATE_AUTODIFF

}  // namespace mmasr
