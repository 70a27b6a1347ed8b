#include "cmg/autodiff.hpp"

#include <cmath>
#include <limits>

#include "cmg/errors.hpp"

namespace cmg {

std::size_t ParameterSet::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw ValidationError("duplicate parameter name: " + name);
  const std::size_t id = items_.size();
  index_.emplace(name, id);
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  items_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return id;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& p : items_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

void ParameterSet::scale_grad(double factor) {
  for (auto& p : items_) p.grad *= factor;
}

namespace ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::param(const Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Var v = record(p.value, true, nullptr);
  bound_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), requires_grad});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ValidationError("backward root belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw ValidationError("backward root must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

const Matrix* Tape::gradient(const Parameter& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.size() == 0 ? nullptr : &n.grad;
}

void Tape::accumulate_into(ParameterSet& params) const {
  for (auto& p : params) {
    const Matrix* g = gradient(p);
    if (!g) continue;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad += *g;
  }
}

namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ValidationError("vars belong to different tapes");
}

void require_shape(bool ok, const char* op, const Var& a, const Var& b) {
  if (!ok) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr(f);
  return t.record(std::move(out), t.requires_grad(a), [a, df](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d(i) = g(i) * df(x(i));
    t.accumulate(a, d);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul", a, b);
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b.id()).transpose());
                    if (t.requires_grad(b)) t.accumulate(b, t.value(a.id()).transpose() * g);
                  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  return t.record(a.value().transpose(), t.requires_grad(a),
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, g);
                  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    if (t.requires_grad(b)) t.accumulate(b, -g);
                  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b.id())));
                    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a.id())));
                  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, t.requires_grad(a),
                  [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value().array() + s;
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(row),
                  [a, row](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
                  });
}

Var mul_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "mul_row", a, row);
  Tape& t = *a.tape();
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(row),
                  [a, row](Tape& t, const Matrix& g) {
                    const Matrix& x = t.value(a.id());
                    const Matrix& r = t.value(row.id());
                    if (t.requires_grad(a)) {
                      Matrix ga = g.array().rowwise() * r.row(0).array();
                      t.accumulate(a, ga);
                    }
                    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(x).colwise().sum());
                  });
}

Var outer_add(const Var& col_a, const Var& col_b) {
  require_same_tape(col_a, col_b);
  require_shape(col_a.cols() == 1 && col_b.cols() == 1, "outer_add", col_a, col_b);
  Tape& t = *col_a.tape();
  const Eigen::Index n = col_a.rows(), m = col_b.rows();
  Matrix out = col_a.value().replicate(1, m) + col_b.value().transpose().replicate(n, 1);
  return t.record(std::move(out), t.requires_grad(col_a) || t.requires_grad(col_b),
                  [col_a, col_b](Tape& t, const Matrix& g) {
                    if (t.requires_grad(col_a)) t.accumulate(col_a, g.rowwise().sum());
                    if (t.requires_grad(col_b)) t.accumulate(col_b, g.colwise().sum().transpose());
                  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

namespace {
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return t.record(out, t.requires_grad(a), [a, out](Tape& t, const Matrix& g) {
    Matrix d(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double dot = g.row(r).dot(out.row(r));
      d.row(r) = out.row(r).array() * (g.row(r).array() - dot);
    }
    t.accumulate(a, d);
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    const double lse = mx + std::log((out.row(r).array() - mx).exp().sum());
    out.row(r).array() -= lse;
  }
  return t.record(out, t.requires_grad(a), [a, out](Tape& t, const Matrix& g) {
    Matrix d(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double gs = g.row(r).sum();
      d.row(r) = g.row(r).array() - out.row(r).array().exp() * gs;
    }
    t.accumulate(a, d);
  });
}

Var masked_softmax_rows(const Var& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw ValidationError("masked_softmax_rows: mask shape");
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) throw ValidationError("masked_softmax_rows: row with no unmasked entry");
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0) z += (out(r, c) = std::exp(x(r, c) - mx));
    out.row(r) /= z;
  }
  return t.record(out, t.requires_grad(a), [a, out](Tape& t, const Matrix& g) {
    Matrix d(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double dot = g.row(r).dot(out.row(r));
      d.row(r) = out.row(r).array() * (g.row(r).array() - dot);
    }
    t.accumulate(a, d);
  });
}

Var layer_norm_rows(const Var& a, double eps) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  const Eigen::Index n = x.cols();
  Matrix out(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  return t.record(out, t.requires_grad(a), [a, out, inv_std, n](Tape& t, const Matrix& g) {
    Matrix d(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double gm = g.row(r).mean();
      const double gy = g.row(r).dot(out.row(r)) / static_cast<double>(n);
      d.row(r) = inv_std(r) * (g.row(r).array() - gm - out.row(r).array() * gy);
    }
    t.accumulate(a, d);
  });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("hcat of nothing");
  Tape& t = *parts[0].tape();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require_shape(p.rows() == parts[0].rows(), "hcat", parts[0], p);
    cols += p.cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& p : inputs) {
      const Eigen::Index c = t.value(p.id()).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("vcat of nothing");
  Tape& t = *parts[0].tape();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    require_shape(p.cols() == parts[0].cols(), "vcat", parts[0], p);
    rows += p.rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), rg, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& p : inputs) {
      const Eigen::Index r = t.value(p.id()).rows();
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, r));
      at += r;
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ValidationError("slice_cols out of range");
  Tape& t = *a.tape();
  return t.record(a.value().middleCols(start, count), t.requires_grad(a),
                  [a, start, count](Tape& t, const Matrix& g) {
                    const Matrix& x = t.value(a.id());
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleCols(start, count) = g;
                    t.accumulate(a, d);
                  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ValidationError("slice_rows out of range");
  Tape& t = *a.tape();
  return t.record(a.value().middleRows(start, count), t.requires_grad(a),
                  [a, start, count](Tape& t, const Matrix& g) {
                    const Matrix& x = t.value(a.id());
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleRows(start, count) = g;
                    t.accumulate(a, d);
                  });
}

Var row(const Var& a, Eigen::Index i) { return slice_rows(a, i, 1); }

Var gather_rows(const Var& a, std::span<const int> indices) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), x.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= x.rows()) throw ValidationError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(k)) = x.row(indices[k]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(out), t.requires_grad(a), [a, idx](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) d.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(a, d);
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    t.accumulate(a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ValidationError("mean_rows of empty matrix");
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.rows());
  return t.record(a.value().colwise().mean(), t.requires_grad(a), [a, n](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    t.accumulate(a, (g / n).replicate(x.rows(), 1));
  });
}

Var max_rows(const Var& a) {
  if (a.rows() == 0) throw ValidationError("max_rows of empty matrix");
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(best, c)) best = r;
    arg[static_cast<std::size_t>(c)] = best;
    out(0, c) = x(best, c);
  }
  return t.record(std::move(out), t.requires_grad(a), [a, arg](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) d(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(a, d);
  });
}

Var pick(const Var& a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw ValidationError("pick out of range");
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value()(r, c);
  return t.record(std::move(out), t.requires_grad(a), [a, r, c](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    d(r, c) = g(0, 0);
    t.accumulate(a, d);
  });
}

Var norm(const Var& a) {
  Tape& t = *a.tape();
  const double n = a.value().norm();
  Matrix out(1, 1);
  out(0, 0) = n;
  return t.record(std::move(out), t.requires_grad(a), [a, n](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a.id());
    if (n == 0.0) return;
    t.accumulate(a, x * (g(0, 0) / n));
  });
}

Var bce_with_logits_mean(const Var& logits, const Matrix& targets) {
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols())
    throw ValidationError("bce_with_logits_mean: target shape mismatch");
  Tape& t = *logits.tape();
  const double count = static_cast<double>(x.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = x(i);
    total += std::max(z, 0.0) - z * targets(i) + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / count;
  return t.record(std::move(out), t.requires_grad(logits), [logits, targets, count](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(logits.id());
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d(i) = (sigmoid_scalar(x(i)) - targets(i)) * g(0, 0) / count;
    t.accumulate(logits, d);
  });
}

}  // namespace ad
}  // namespace cmg
