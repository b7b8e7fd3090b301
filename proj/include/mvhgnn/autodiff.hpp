#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mvhgnn/matrix.hpp"

namespace mvhgnn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Matrix grad() const;  // zeros when nothing flowed back
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order of the DAG, so backward() walks the node list from the
/// root down and visits every node once.
///
/// With recording off, ops still compute forward values but keep no
/// parents or backward closures; backward() then has nothing to do.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  // Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(Var root);
  void zero_grad();

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Op-implementation surface.
  Var push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);
  Matrix& grad_accumulator(std::size_t id);
  const Matrix& incoming_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated on first accumulation
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

// Differentiable ops. Binary elementwise ops accept `b` with the same shape
// as `a`, or a 1 x cols row, rows x 1 column, or 1 x 1 scalar broadcast.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var softmax_rows(Var a);
// Softmax restricted to entries where support(r, c) != 0; other entries are
// exactly zero. Every row needs at least one supported entry.
Var masked_softmax_rows(Var a, const Matrix& support);
Var log_softmax_rows(Var a);
Var row_l2_normalize(Var a);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
// Per-column standardization over rows with learnable affine (gamma, beta 1 x cols).
Var feature_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var max_over_rows(Var a);
Var mean_over_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> indices);
// out(i, 0) = a(i, columns[i])
Var pick(Var a, std::span<const std::size_t> columns);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace mvhgnn
