#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D double matrix; vectors are 1 x n rows. A Tape records
// one forward pass. Parameters are bound to the tape by address, and after
// backward() their gradients are read back with gradient() or accumulated into
// a ParameterSet. The tape never mutates parameters, so forward passes over a
// const ParameterSet are safe to run concurrently on distinct tapes.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace cmg {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named, ordered parameter storage with stable element addresses.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix value);
  Parameter& operator[](std::size_t i) { return items_[i]; }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);

  void zero_grad();
  double grad_norm() const;
  void scale_grad(double factor);

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::deque<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Binds a parameter; repeated calls with the same parameter return the same node.
  Var param(const Parameter& p);
  /// Records an op output. `backward` receives the output gradient and must
  /// push contributions to its inputs through accumulate().
  Var record(Matrix value, bool requires_grad, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }
  void accumulate(const Var& v, const Matrix& g);

  /// Reverse sweep from a 1x1 root.
  void backward(const Var& root);

  /// Gradient of the last backward() w.r.t. a bound parameter; nullptr if unbound or unreached.
  const Matrix* gradient(const Parameter& p) const;
  /// Adds tape gradients into each parameter's grad (allocating zeros as needed).
  void accumulate_into(ParameterSet& params) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (n x m) .* row (1 x m) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// out(i, j) = col_a(i) + col_b(j) for n x 1 and m x 1 inputs.
Var outer_add(const Var& col_a, const Var& col_b);

// Elementwise nonlinearities.
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
Var log(const Var& a);

// Row-wise normalizations.
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Softmax over entries with mask(i, j) != 0; masked entries get probability 0.
/// Every row must have at least one unmasked entry.
Var masked_softmax_rows(const Var& a, const Matrix& mask);
/// Zero-mean, unit-variance per row, without affine terms.
Var layer_norm_rows(const Var& a, double eps = 1e-5);

// Shape manipulation.
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var row(const Var& a, Eigen::Index i);
Var gather_rows(const Var& a, std::span<const int> indices);

// Reductions.
Var sum(const Var& a);
Var mean_rows(const Var& a);
/// Column-wise maximum over rows (1 x m); gradient routes to the first argmax.
Var max_rows(const Var& a);
Var pick(const Var& a, Eigen::Index r, Eigen::Index c);
/// Frobenius norm as 1x1; gradient at 0 is taken as 0.
Var norm(const Var& a);

// Losses.
/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets of the same shape.
Var bce_with_logits_mean(const Var& logits, const Matrix& targets);

}  // namespace ad
}  // namespace cmg
