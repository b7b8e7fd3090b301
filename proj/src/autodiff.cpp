#include "mvhgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvhgnn {

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw Error(ErrorCode::kDimension, "scalar() on " + v.shape_string());
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  require_finite(value, "variable");
  nodes_.push_back(Node{std::move(value), {}, {}, {}, recording_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  require_finite(value, "tape op");
  bool needs = false;
  if (recording_) {
    for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  }
  Node node{std::move(value), {}, {}, {}, needs};
  if (needs) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Matrix();
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error(ErrorCode::kArgument, "root belongs to another tape");
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw Error(ErrorCode::kDimension, "backward root must be 1x1, got " + rv.shape_string());
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad_accumulator(root.id())(0, 0) += 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

namespace {

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  throw Error(ErrorCode::kDimension,
              std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " + a.shape_string());
}

inline double bval(const Matrix& b, Broadcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Broadcast::kSame: return b(r, c);
    case Broadcast::kRow: return b(0, c);
    case Broadcast::kCol: return b(r, 0);
    case Broadcast::kScalar: return b(0, 0);
  }
  return 0.0;
}

inline double& bref(Matrix& b, Broadcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Broadcast::kSame: return b(r, c);
    case Broadcast::kRow: return b(0, c);
    case Broadcast::kCol: return b(r, 0);
    case Broadcast::kScalar: return b(0, 0);
  }
  return b(0, 0);
}

void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error(ErrorCode::kArgument, "operands live on different tapes");
}

// Elementwise unary op: forward f(x), backward g * df(x, y).
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = f(x.data()[i]);
  const std::size_t pa = a.id();
  return t.push(std::move(y), {pa}, [pa, df](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    const Matrix& xv = tape.value(pa);
    const Matrix& yv = tape.value(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * df(xv.data()[i], yv.data()[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const std::size_t pa = a.id(), pb = b.id();
  return t.push(matmul(a.value(), b.value()), {pa, pb}, [pa, pb](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    if (tape.requires_grad(pa)) tape.grad_accumulator(pa) += matmul(g, tape.value(pb).transposed());
    if (tape.requires_grad(pb)) tape.grad_accumulator(pb) += matmul(tape.value(pa).transposed(), g);
  });
}

namespace {

// Elementwise binary op with broadcasting of b. dfa/dfb give the partials
// with respect to each operand at (x, y).
template <typename F, typename DFA, typename DFB>
Var binary(Var a, Var b, const char* name, F f, DFA dfa, DFB dfb) {
  check_same_tape(a, b);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const Broadcast kind = broadcast_kind(x, y, name);
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = f(x(r, c), bval(y, kind, r, c));
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape()->push(std::move(out), {pa, pb}, [=](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    const Matrix& xv = tape.value(pa);
    const Matrix& yv = tape.value(pb);
    if (tape.requires_grad(pa)) {
      Matrix& ga = tape.grad_accumulator(pa);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * dfa(xv(r, c), bval(yv, kind, r, c));
    }
    if (tape.requires_grad(pb)) {
      Matrix& gb = tape.grad_accumulator(pb);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          bref(gb, kind, r, c) += g(r, c) * dfb(xv(r, c), bval(yv, kind, r, c));
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var transpose(Var a) {
  const std::size_t pa = a.id();
  return a.tape()->push(a.value().transposed(), {pa}, [pa](Tape& tape, std::size_t self) {
    tape.grad_accumulator(pa) += tape.incoming_grad(self).transposed();
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t pa = a.id();
  return a.tape()->push(Matrix(1, 1, s), {pa}, [pa](Tape& tape, std::size_t self) {
    const double g = tape.incoming_grad(self)(0, 0);
    for (double& v : tape.grad_accumulator(pa).data()) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw Error(ErrorCode::kDimension, "mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (double v : x.row(r)) out(r, 0) += v;
  const std::size_t pa = a.id();
  return a.tape()->push(std::move(out), {pa}, [pa](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (double& v : ga.row(r)) v += g(r, 0);
  });
}

namespace {

// Shared softmax backward: dx = y * (g - <g, y>) per row.
Tape::BackwardFn softmax_backward(std::size_t pa) {
  return [pa](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    const Matrix& y = tape.value(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double gy = dot(g.row(r), y.row(r));
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - gy);
    }
  };
}

}  // namespace

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    if (xr.empty()) continue;
    const double mx = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (std::size_t c = 0; c < xr.size(); ++c) z += (y(r, c) = std::exp(xr[c] - mx));
    for (double& v : y.row(r)) v /= z;
  }
  return a.tape()->push(std::move(y), {a.id()}, softmax_backward(a.id()));
}

Var masked_softmax_rows(Var a, const Matrix& support) {
  const Matrix& x = a.value();
  if (!x.same_shape(support)) throw Error(ErrorCode::kDimension, "softmax support mask shape");
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (support(r, c) != 0.0) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) throw Error(ErrorCode::kDegenerateInput, "softmax row with empty support");
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (support(r, c) != 0.0) z += (y(r, c) = std::exp(x(r, c) - mx));
    for (double& v : y.row(r)) v /= z;
  }
  return a.tape()->push(std::move(y), {a.id()}, softmax_backward(a.id()));
}

Var log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    if (xr.empty()) continue;
    const double mx = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (double v : xr) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < xr.size(); ++c) y(r, c) = xr[c] - lse;
  }
  const std::size_t pa = a.id();
  return a.tape()->push(std::move(y), {pa}, [pa](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    const Matrix& y = tape.value(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gs = 0.0;
      for (double v : g.row(r)) gs += v;
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
    }
  });
}

Var row_l2_normalize(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  Matrix norms(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double n = l2_norm(x.row(r));
    if (!(n > 0.0)) throw Error(ErrorCode::kDegenerateInput, "zero-norm row in l2 normalization");
    norms(r, 0) = n;
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / n;
  }
  const std::size_t pa = a.id();
  return a.tape()->push(std::move(y), {pa}, [pa, norms = std::move(norms)](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    const Matrix& y = tape.value(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double gy = dot(g.row(r), y.row(r));
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * gy) / norms(r, 0);
    }
  });
}

Var feature_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n == 0) throw Error(ErrorCode::kDimension, "feature_norm of empty matrix");
  if (gamma.rows() != 1 || gamma.cols() != d || !beta.value().same_shape(gamma.value())) {
    throw Error(ErrorCode::kDimension, "feature_norm affine must be 1x" + std::to_string(d));
  }
  Matrix xhat(n, d);
  Matrix inv_std(1, d);
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += xv(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(n);
    inv_std(0, c) = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < n; ++r) xhat(r, c) = (xv(r, c) - mu) * inv_std(0, c);
  }
  Matrix y(n, d);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y(r, c) = gv(0, c) * xhat(r, c) + bv(0, c);

  const std::size_t px = x.id(), pg = gamma.id(), pb = beta.id();
  return x.tape()->push(
      std::move(y), {px, pg, pb},
      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tape, std::size_t self) {
        const Matrix& g = tape.incoming_grad(self);
        const std::size_t rows = g.rows(), cols = g.cols();
        if (tape.requires_grad(pg) || tape.requires_grad(pb)) {
          Matrix dgamma(1, cols), dbeta(1, cols);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              dgamma(0, c) += g(r, c) * xhat(r, c);
              dbeta(0, c) += g(r, c);
            }
          if (tape.requires_grad(pg)) tape.grad_accumulator(pg) += dgamma;
          if (tape.requires_grad(pb)) tape.grad_accumulator(pb) += dbeta;
        }
        if (!tape.requires_grad(px)) return;
        const Matrix& gam = tape.value(pg);
        Matrix& gx = tape.grad_accumulator(px);
        const double inv_n = 1.0 / static_cast<double>(rows);
        for (std::size_t c = 0; c < cols; ++c) {
          double s = 0.0, sx = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            const double dxhat = g(r, c) * gam(0, c);
            s += dxhat;
            sx += dxhat * xhat(r, c);
          }
          for (std::size_t r = 0; r < rows; ++r) {
            const double dxhat = g(r, c) * gam(0, c);
            gx(r, c) += inv_std(0, c) * (dxhat - inv_n * s - xhat(r, c) * inv_n * sx);
          }
        }
      });
}

Var max_over_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw Error(ErrorCode::kDimension, "max over zero rows");
  Matrix y(1, x.cols());
  std::vector<std::size_t> argmax(x.cols(), 0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(argmax[c], c)) argmax[c] = r;  // strict: ties keep the lowest row
    y(0, c) = x(argmax[c], c);
  }
  const std::size_t pa = a.id();
  return a.tape()->push(std::move(y), {pa}, [pa, argmax = std::move(argmax)](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t c = 0; c < argmax.size(); ++c) ga(argmax[c], c) += g(0, c);
  });
}

Var mean_over_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw Error(ErrorCode::kDimension, "mean over zero rows");
  const std::size_t rows = x.rows();
  return matmul(a.tape()->constant(Matrix(1, rows, 1.0 / static_cast<double>(rows))), a);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kArgument, "concat of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != rows) throw Error(ErrorCode::kDimension, "concat_cols row mismatch");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offsets[k] + c) = v(r, c);
  }
  return parts[0].tape()->push(std::move(out), ids, [ids, offsets](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      Matrix& gk = tape.grad_accumulator(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kArgument, "concat of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) throw Error(ErrorCode::kDimension, "concat_rows column mismatch");
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * cols));
  }
  return parts[0].tape()->push(std::move(out), ids, [ids, offsets](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      Matrix& gk = tape.grad_accumulator(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(offsets[k] + r, c);
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t pa = a.id();
  return a.tape()->push(gather_rows(a.value(), idx), {pa}, [pa, idx](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(idx[i], c) += g(i, c);
  });
}

Var pick(Var a, std::span<const std::size_t> columns) {
  const Matrix& x = a.value();
  if (columns.size() != x.rows()) throw Error(ErrorCode::kDimension, "pick needs one column per row");
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (cols[r] >= x.cols()) throw Error(ErrorCode::kArgument, "pick column out of range");
    out(r, 0) = x(r, cols[r]);
  }
  const std::size_t pa = a.id();
  return a.tape()->push(std::move(out), {pa}, [pa, cols](Tape& tape, std::size_t self) {
    const Matrix& g = tape.incoming_grad(self);
    Matrix& ga = tape.grad_accumulator(pa);
    for (std::size_t r = 0; r < cols.size(); ++r) ga(r, cols[r]) += g(r, 0);
  });
}

}  // namespace mvhgnn
