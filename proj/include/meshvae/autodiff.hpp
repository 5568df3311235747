#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meshvae/sparse.hpp"

namespace meshvae::ad {

class Tape;

struct Node {
  Eigen::MatrixXd data;
  Eigen::MatrixXd grad;
  bool requires_grad = false;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(Tape&, const Node&)> backward;
};

/// Handle into a Tape. Cheap to copy; valid for the life of the tape.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Eigen::MatrixXd& data() const;
  const Eigen::MatrixXd& grad() const;
  Eigen::Index rows() const { return data().rows(); }
  Eigen::Index cols() const { return data().cols(); }
  bool requires_grad() const;
};

/// Reverse-mode tape. The graph is append-only; node ids are already a
/// topological order, so backward is one reverse sweep over ids.
class Tape {
 public:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  /// Each node's backward runs exactly once.
  void backward(const Value& root) {
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.data.rows() != 1 || r.data.cols() != 1)
      throw std::invalid_argument("backward: root must be a 1x1 scalar");
    for (Node& n : nodes_) {
      if (n.requires_grad) n.grad.setZero(n.data.rows(), n.data.cols());
    }
    if (!r.requires_grad) return;
    r.grad(0, 0) = 1.0;
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.requires_grad && n.backward) n.backward(*this, n);
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

inline const Eigen::MatrixXd& Value::data() const { return tape->node(id).data; }
inline const Eigen::MatrixXd& Value::grad() const { return tape->node(id).grad; }
inline bool Value::requires_grad() const { return tape->node(id).requires_grad; }

inline Value constant(Tape& tape, Eigen::MatrixXd data) {
  Node n;
  n.data = std::move(data);
  n.requires_grad = false;
  return Value{&tape, tape.push(std::move(n))};
}

inline Value parameter(Tape& tape, Eigen::MatrixXd data) {
  Node n;
  n.data = std::move(data);
  n.grad.setZero(n.data.rows(), n.data.cols());
  n.requires_grad = true;
  return Value{&tape, tape.push(std::move(n))};
}

namespace detail {
inline void check_same_tape(const Value& a, const Value& b) {
  if (a.tape != b.tape) throw std::invalid_argument("values belong to different tapes");
}
}  // namespace detail

inline Value matmul(Value a, Value b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Node n;
  n.data = a.data() * b.data();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  int ai = a.id, bi = b.id;
  n.backward = [ai, bi](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    Node& pb = t.node(bi);
    if (pa.requires_grad) pa.grad.noalias() += self.grad * pb.data.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.data.transpose() * self.grad;
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// Constant sparse matrix times dense value.
inline Value spmm(const SparseMatrix& s, Value x) {
  if (x.rows() != s.cols()) throw std::invalid_argument("spmm: inner dimension mismatch");
  Node n;
  n.data = s.apply(x.data());
  n.requires_grad = x.requires_grad();
  int xi = x.id;
  // The sparse operand outlives the tape in this codebase (cached per level),
  // captured by copy to keep the graph self-contained anyway.
  SparseMatrix sc = s;
  n.backward = [xi, sc = std::move(sc)](Tape& t, const Node& self) {
    Node& px = t.node(xi);
    if (px.requires_grad) px.grad += sc.apply_transpose(self.grad);
  };
  return Value{x.tape, x.tape->push(std::move(n))};
}

/// Same-shape add, or bias add where b is a 1 x F row broadcast over a's rows.
inline Value add(Value a, Value b) {
  detail::check_same_tape(a, b);
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols()))
    throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.data = broadcast ? (a.data().rowwise() + b.data().row(0)).eval()
                     : (a.data() + b.data()).eval();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  int ai = a.id, bi = b.id;
  n.backward = [ai, bi, broadcast](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    Node& pb = t.node(bi);
    if (pa.requires_grad) pa.grad += self.grad;
    if (pb.requires_grad) {
      if (broadcast)
        pb.grad.row(0) += self.grad.colwise().sum();
      else
        pb.grad += self.grad;
    }
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value sub(Value a, Value b) {
  detail::check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.data = a.data() - b.data();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  int ai = a.id, bi = b.id;
  n.backward = [ai, bi](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    Node& pb = t.node(bi);
    if (pa.requires_grad) pa.grad += self.grad;
    if (pb.requires_grad) pb.grad -= self.grad;
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value mul(Value a, Value b) {
  detail::check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.data = a.data().cwiseProduct(b.data());
  n.requires_grad = a.requires_grad() || b.requires_grad();
  int ai = a.id, bi = b.id;
  n.backward = [ai, bi](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    Node& pb = t.node(bi);
    if (pa.requires_grad) pa.grad += self.grad.cwiseProduct(pb.data);
    if (pb.requires_grad) pb.grad += self.grad.cwiseProduct(pa.data);
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value scale(Value a, double s) {
  Node n;
  n.data = s * a.data();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai, s](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad += s * self.grad;
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value elu(Value a, double alpha = 1.0) {
  Node n;
  n.data = a.data().unaryExpr(
      [alpha](double x) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); });
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai, alpha](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (!pa.requires_grad) return;
    // d/dx = 1 for x > 0, alpha*e^x = elu(x) + alpha otherwise.
    pa.grad += self.grad.cwiseProduct(pa.data.binaryExpr(
        self.data, [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; }));
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value vexp(Value a) {
  Node n;
  n.data = a.data().array().exp();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad += self.grad.cwiseProduct(self.data);
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value vlog(Value a) {
  Node n;
  n.data = a.data().array().log();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad += self.grad.cwiseQuotient(pa.data);
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value square(Value a) {
  Node n;
  n.data = a.data().array().square();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad += 2.0 * self.grad.cwiseProduct(pa.data);
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// Absolute value; subgradient at 0 is 0.
inline Value vabs(Value a) {
  Node n;
  n.data = a.data().array().abs();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (!pa.requires_grad) return;
    pa.grad += self.grad.cwiseProduct(pa.data.unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }));
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value sum(Value a) {
  Node n;
  n.data.setConstant(1, 1, a.data().sum());
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad.array() += self.grad(0, 0);
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

inline Value mean(Value a) {
  Node n;
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  n.data.setConstant(1, 1, a.data().sum() * inv);
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai, inv](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (pa.requires_grad) pa.grad.array() += self.grad(0, 0) * inv;
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// Euclidean norm of each row: N x F -> N x 1.
/// A zero row gets zero gradient (the norm is nondifferentiable there).
inline Value row_norms(Value a) {
  Node n;
  n.data = a.data().rowwise().norm();
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (!pa.requires_grad) return;
    for (Eigen::Index i = 0; i < pa.data.rows(); ++i) {
      double norm = self.data(i, 0);
      if (norm > 0.0) pa.grad.row(i) += (self.grad(i, 0) / norm) * pa.data.row(i);
    }
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// out.row(k) = a.row(idx[k]); indices constant, backward scatter-adds.
inline Value gather_rows(Value a, std::vector<int> idx) {
  for (int i : idx) {
    if (i < 0 || i >= a.rows()) throw std::invalid_argument("gather_rows: index out of range");
  }
  Node n;
  n.data.resize(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) n.data.row(static_cast<Eigen::Index>(k)) = a.data().row(idx[k]);
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai, idx = std::move(idx)](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (!pa.requires_grad) return;
    for (std::size_t k = 0; k < idx.size(); ++k)
      pa.grad.row(idx[k]) += self.grad.row(static_cast<Eigen::Index>(k));
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// Row-major reshape; purely structural, the VJP is the inverse reshape.
inline Value reshape(Value a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols())
    throw std::invalid_argument("reshape: element count mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Node n;
  RowMajor rm = a.data();
  n.data = Eigen::Map<const RowMajor>(rm.data(), rows, cols);
  n.requires_grad = a.requires_grad();
  int ai = a.id;
  n.backward = [ai](Tape& t, const Node& self) {
    Node& pa = t.node(ai);
    if (!pa.requires_grad) return;
    RowMajor g = self.grad;
    pa.grad += Eigen::Map<const RowMajor>(g.data(), pa.data.rows(), pa.data.cols());
  };
  return Value{a.tape, a.tape->push(std::move(n))};
}

/// Min-index selection, treated as constant in backward: for each row of
/// `from`, the index of the nearest row of `to` by squared Euclidean
/// distance. Ties pick the lowest index.
inline std::vector<int> nearest_rows(const Eigen::MatrixXd& from, const Eigen::MatrixXd& to) {
  if (from.cols() != to.cols())
    throw std::invalid_argument("nearest_rows: column count mismatch");
  if (to.rows() == 0) throw std::invalid_argument("nearest_rows: empty target");
  std::vector<int> idx(static_cast<std::size_t>(from.rows()));
  if (from.cols() == 3) {
    // Hot path for vertex matrices: scan contiguous column arrays instead
    // of building per-pair row expressions.
    const Eigen::Index nf = from.rows(), nt = to.rows();
    const double *fx = from.data(), *fy = fx + nf, *fz = fy + nf;
    const double *tx = to.data(), *ty = tx + nt, *tz = ty + nt;
    for (Eigen::Index i = 0; i < nf; ++i) {
      const double xi = fx[i], yi = fy[i], zi = fz[i];
      int best = 0;
      double best_d = (xi - tx[0]) * (xi - tx[0]) + (yi - ty[0]) * (yi - ty[0]) +
                      (zi - tz[0]) * (zi - tz[0]);
      for (Eigen::Index j = 1; j < nt; ++j) {
        const double dx = xi - tx[j], dy = yi - ty[j], dz = zi - tz[j];
        const double d = dx * dx + dy * dy + dz * dz;
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(j);
        }
      }
      idx[static_cast<std::size_t>(i)] = best;
    }
    return idx;
  }
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    int best = 0;
    double best_d = (from.row(i) - to.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < to.rows(); ++j) {
      double d = (from.row(i) - to.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    idx[static_cast<std::size_t>(i)] = best;
  }
  return idx;
}

// ---- Compositions over the op set (no new primitives) ----

inline Value add_scalar(Value a, double c) {
  Eigen::MatrixXd cm = Eigen::MatrixXd::Constant(a.rows(), a.cols(), c);
  return add(a, constant(*a.tape, std::move(cm)));
}

/// min(x, c) = (x + c - |x - c|) / 2, elementwise against a scalar.
inline Value min_scalar(Value a, double c) {
  Value shifted = add_scalar(a, -c);
  return add_scalar(scale(sub(shifted, vabs(shifted)), 0.5), c);
}

/// max(x, c) = (x + c + |x - c|) / 2, elementwise against a scalar.
inline Value max_scalar(Value a, double c) {
  Value shifted = add_scalar(a, -c);
  return add_scalar(scale(add(shifted, vabs(shifted)), 0.5), c);
}

inline Value clamp(Value a, double lo, double hi) {
  return min_scalar(max_scalar(a, lo), hi);
}

/// 1/x for strictly positive entries, as exp(-log(x)).
inline Value reciprocal_positive(Value a) { return vexp(scale(vlog(a), -1.0)); }

/// Broadcast an N x 1 column across F columns via matmul with constant ones.
inline Value broadcast_cols(Value col, Eigen::Index f) {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, f);
  return matmul(col, constant(*col.tape, std::move(ones)));
}

/// Max relative error between analytic gradients and central differences.
/// f evaluates a fresh graph at the supplied leaf values and must also
/// deposit analytic leaf gradients when asked.
struct GradientCheckResult {
  double max_rel_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// `f(points) -> scalar` is re-evaluated under perturbation of every entry
/// of every leaf; `analytic` holds d(f)/d(leaf) at the base point.
inline GradientCheckResult check_gradient(
    const std::function<double(const std::vector<Eigen::MatrixXd>&)>& f,
    const std::vector<Eigen::MatrixXd>& point,
    const std::vector<Eigen::MatrixXd>& analytic, double eps) {
  if (eps <= 0.0 || eps > 1e-3) throw std::invalid_argument("check_gradient: eps out of range");
  if (point.size() != analytic.size())
    throw std::invalid_argument("check_gradient: gradient list size mismatch");
  GradientCheckResult res;
  std::vector<Eigen::MatrixXd> work = point;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (Eigen::Index i = 0; i < work[p].rows(); ++i) {
      for (Eigen::Index j = 0; j < work[p].cols(); ++j) {
        const double saved = work[p](i, j);
        work[p](i, j) = saved + eps;
        const double up = f(work);
        work[p](i, j) = saved - eps;
        const double down = f(work);
        work[p](i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double exact = analytic[p](i, j);
        const double rel = std::abs(exact - numeric) / (std::abs(exact) + 1e-12);
        if (rel > res.max_rel_error) {
          res.max_rel_error = rel;
          res.worst_analytic = exact;
          res.worst_numeric = numeric;
        }
      }
    }
  }
  return res;
}

}  // namespace meshvae::ad
