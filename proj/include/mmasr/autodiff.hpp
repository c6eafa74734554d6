#pragma once

// Reverse-mode automatic differentiation over dense row-major Eigen
// matrices. Every value on a tape is rank 2; sequences are laid out with
// features along rows and positions along columns (D x T), so a bias of
// shape D x 1 broadcasts along the trailing singleton axis.
//
// A Tape records each op's output and a closure that pushes the output
// gradient back to the op's inputs. Ops are free functions taking Var
// handles; the tape that owns the operands owns the result.

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "mmasr/errors.hpp"
#include "mmasr/parameters.hpp"

namespace mmasr {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;

  const Matrix<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape<Scalar>;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
using GradientMap = std::map<std::string, Matrix<Scalar>>;

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, const Mat&)>;

  // With record_gradients=false the tape keeps values only (inference).
  explicit Tape(bool record_gradients = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value);
  Var<Scalar> variable(Mat value);
  // Trainable parameters become gradient leaves; frozen ones are constants.
  // Repeated calls for the same parameter return the same node.
  Var<Scalar> parameter(const Parameter<Scalar>& p);

  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward);
  Var<Scalar> record(Mat value, std::span<const Var<Scalar>> inputs, BackwardFn backward);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(const Var<Scalar>& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Runs the reverse sweep once. Returns gradients keyed by parameter name
  // for every trainable parameter reachable from the loss.
  GradientMap<Scalar> backward(const Var<Scalar>& loss);

  // Gradient of any node after backward(); zeros when unreachable.
  Mat gradient(const Var<Scalar>& v) const;

  bool recording() const { return record_; }
  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }
  void set_check_finite(bool enabled) { check_finite_ = enabled; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
    const Parameter<Scalar>* param = nullptr;
  };

  Var<Scalar> push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, std::size_t> param_nodes_;
  bool record_ = true;
  bool backward_done_ = false;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::value() const {
  return tape_->value(id_);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return tape_->requires_grad(id_);
}

enum class Reduction { mean, sum };

// --- ops -------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);

// Binary elementwise ops: b has a's shape, shape rows x 1 (broadcast along
// columns) or 1 x 1.
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, double factor);
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a);
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a);
template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a);

// axis 0 normalizes each column, axis 1 each row.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis);
template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& x, int axis);

// Normalizes each column (feature vector) of a D x T matrix; gain and bias are D x 1.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       double eps = 1e-5);

template <typename Scalar>
Var<Scalar> concat(std::span<const Var<Scalar>> parts, int axis);
template <typename Scalar>
Var<Scalar> concat(std::initializer_list<Var<Scalar>> parts, int axis) {
  std::vector<Var<Scalar>> v(parts);
  return concat<Scalar>(std::span<const Var<Scalar>>(v), axis);
}
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& x, int axis, Eigen::Index start, Eigen::Index length);

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x);

// Reinterprets the row-major element sequence with a new shape.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Eigen::Index rows, Eigen::Index cols);

// out.flat[i] = x.flat[index[i]], or 0 where index[i] < 0. Covers im2col,
// reshapes and embedding lookups.
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, Eigen::Index rows, Eigen::Index cols,
                   std::shared_ptr<const std::vector<std::ptrdiff_t>> index);

// D x 1 -> D x n by repeating the column.
template <typename Scalar>
Var<Scalar> replicate_cols(const Var<Scalar>& x, Eigen::Index n);
// D x n -> D x 1 column mean.
template <typename Scalar>
Var<Scalar> mean_cols(const Var<Scalar>& x);

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x);

// Inverted dropout; identity when p == 0.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double p, Rng& rng);

// logits: V x T (one column per position). Positions whose target equals
// pad_id are skipped. With smoothing e the target distribution is
// (1 - e) * onehot + e / V.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, std::span<const int> targets,
                          double label_smoothing, int pad_id, Reduction reduction = Reduction::mean);

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

}  // namespace mmasr
