#include "fbsde/tape.hpp"

#include <cmath>
#include <string>

#include "fbsde/errors.hpp"

namespace fbsde::ad {

int AdValue::rows() const { return value().rows(); }
int AdValue::cols() const { return value().cols(); }

const Tensor& AdValue::value() const { return tape_->node(idx_).value; }

AdValue Tape::push(Node n) {
  if (nodes_.size() == nodes_.capacity())
    nodes_.reserve(nodes_.empty() ? 1024 : 2 * nodes_.capacity());
  nodes_.push_back(std::move(n));
  return AdValue(this, (int)nodes_.size() - 1);
}

void Tape::check_same_tape(const AdValue& v) const {
  if (v.tape() != this)
    throw ShapeError("tape: operand recorded on a different tape");
}

AdValue Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

AdValue Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(std::move(n));
}

AdValue Tape::constant(double v) { return constant(Tensor::scalar(v)); }

bool Tape::is_leaf(const AdValue& v) const {
  return v.tape() == this && nodes_[v.index()].op == Op::kLeaf;
}

#define FBSDE_BINARY_OP(method, opkind, kernel)                     \
  AdValue Tape::method(AdValue a, AdValue b) {                      \
    check_same_tape(a);                                             \
    check_same_tape(b);                                             \
    Node n;                                                         \
    n.op = opkind;                                                  \
    n.a = a.index();                                                \
    n.b = b.index();                                                \
    n.value = kernel(a.value(), b.value());                         \
    return push(std::move(n));                                      \
  }

FBSDE_BINARY_OP(add, Op::kAdd, t_add)
FBSDE_BINARY_OP(sub, Op::kSub, t_sub)
FBSDE_BINARY_OP(mul, Op::kMul, t_mul)
FBSDE_BINARY_OP(mul_scalar, Op::kMulScalar, t_mul_scalar)
FBSDE_BINARY_OP(matmul_nn, Op::kMatmulNN, t_matmul_nn)
FBSDE_BINARY_OP(matmul_nt, Op::kMatmulNT, t_matmul_nt)
FBSDE_BINARY_OP(matmul_tn, Op::kMatmulTN, t_matmul_tn)
FBSDE_BINARY_OP(add_rowvec, Op::kAddRowVec, t_add_rowvec)
FBSDE_BINARY_OP(mul_rowvec, Op::kMulRowVec, t_mul_rowvec)
FBSDE_BINARY_OP(mul_colvec, Op::kMulColVec, t_mul_colvec)

#undef FBSDE_BINARY_OP

#define FBSDE_UNARY_OP(method, opkind, kernel)            \
  AdValue Tape::method(AdValue a) {                       \
    check_same_tape(a);                                   \
    Node n;                                               \
    n.op = opkind;                                        \
    n.a = a.index();                                      \
    n.value = kernel(a.value());                          \
    return push(std::move(n));                            \
  }

FBSDE_UNARY_OP(cos, Op::kCos, t_cos)
FBSDE_UNARY_OP(exp, Op::kExp, t_exp)
FBSDE_UNARY_OP(tanh, Op::kTanh, t_tanh)
FBSDE_UNARY_OP(square, Op::kSquare, t_square)
FBSDE_UNARY_OP(sum, Op::kSum, t_sum)
FBSDE_UNARY_OP(row_sum, Op::kRowSum, t_row_sum)
FBSDE_UNARY_OP(col_sum, Op::kColSum, t_col_sum)
FBSDE_UNARY_OP(transpose, Op::kTranspose, t_transpose)

#undef FBSDE_UNARY_OP

AdValue Tape::sin(AdValue a) {
  check_same_tape(a);
  Node n;
  n.op = Op::kSin;
  n.a = a.index();
  t_sincos(a.value(), n.value, n.aux);
  return push(std::move(n));
}

AdValue Tape::scale(AdValue a, double c) {
  check_same_tape(a);
  Node n;
  n.op = Op::kScale;
  n.a = a.index();
  n.attr = c;
  n.value = t_scale(a.value(), c);
  return push(std::move(n));
}

AdValue Tape::bcast(AdValue s, int rows, int cols) {
  check_same_tape(s);
  Node n;
  n.op = Op::kBcast;
  n.a = s.index();
  n.i0 = rows;
  n.i1 = cols;
  n.value = t_bcast(s.value(), rows, cols);
  return push(std::move(n));
}

AdValue Tape::bcast_rows(AdValue v, int m) {
  check_same_tape(v);
  Node n;
  n.op = Op::kBcastRows;
  n.a = v.index();
  n.i0 = m;
  n.value = t_bcast_rows(v.value(), m);
  return push(std::move(n));
}

AdValue Tape::bcast_cols(AdValue v, int ncols) {
  check_same_tape(v);
  Node n;
  n.op = Op::kBcastCols;
  n.a = v.index();
  n.i0 = ncols;
  n.value = t_bcast_cols(v.value(), ncols);
  return push(std::move(n));
}

AdValue Tape::slice_cols(AdValue x, int c0, int ncols) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSliceCols;
  n.a = x.index();
  n.i0 = c0;
  n.i1 = ncols;
  n.value = t_slice_cols(x.value(), c0, ncols);
  return push(std::move(n));
}

AdValue Tape::pad_cols(AdValue x, int c0, int total) {
  check_same_tape(x);
  Node n;
  n.op = Op::kPadCols;
  n.a = x.index();
  n.i0 = c0;
  n.i1 = total;
  n.value = t_pad_cols(x.value(), c0, total);
  return push(std::move(n));
}

AdValue Tape::slice_rows(AdValue x, int r0, int nrows) {
  check_same_tape(x);
  Node n;
  n.op = Op::kSliceRows;
  n.a = x.index();
  n.i0 = r0;
  n.i1 = nrows;
  n.value = t_slice_rows(x.value(), r0, nrows);
  return push(std::move(n));
}

AdValue Tape::pad_rows(AdValue x, int r0, int total) {
  check_same_tape(x);
  Node n;
  n.op = Op::kPadRows;
  n.a = x.index();
  n.i0 = r0;
  n.i1 = total;
  n.value = t_pad_rows(x.value(), r0, total);
  return push(std::move(n));
}

AdValue Tape::mean(AdValue a) {
  const double inv = 1.0 / (double)a.value().size();
  return scale(sum(a), inv);
}

void Tape::reset() { nodes_.clear(); }

AdValue Tape::grad_wrt_input(AdValue expr, AdValue input_leaf) {
  check_same_tape(expr);
  check_same_tape(input_leaf);
  if (!expr.is_scalar())
    throw ShapeError("grad_wrt_input: expression is not scalar");
  if (nodes_[input_leaf.index()].op != Op::kLeaf)
    throw ShapeError("grad_wrt_input: input is not a leaf of this tape");

  const int root = expr.index();
  const int leaf = input_leaf.index();
  const Tensor& lv = nodes_[leaf].value;
  if (root < leaf) return constant(Tensor(lv.rows(), lv.cols()));

  // Nodes below the leaf cannot depend on it; restrict the sweep to the
  // window [leaf, root] and to nodes actually reachable from the leaf.
  const int span = root - leaf + 1;
  std::vector<uint8_t> reach(span, 0);
  reach[0] = 1;
  for (int i = leaf + 1; i <= root; ++i) {
    const Node& n = nodes_[i];
    reach[i - leaf] = (n.a >= leaf && reach[n.a - leaf]) ||
                      (n.b >= leaf && reach[n.b - leaf]);
  }
  if (!reach[span - 1]) return constant(Tensor(lv.rows(), lv.cols()));

  std::vector<AdValue> adj(span);
  adj[span - 1] = constant(1.0);
  for (int i = root; i > leaf; --i) {
    if (!reach[i - leaf]) continue;
    AdValue g = adj[i - leaf];
    if (!g.valid()) continue;
    const Node n = nodes_[i];  // copy: pushes below may reallocate nodes_
    const AdValue va(this, n.a), vb(this, n.b), self(this, i);
    auto accum = [&](int tgt, AdValue contrib) {
      if (tgt < leaf || !reach[tgt - leaf]) return;
      AdValue& slot = adj[tgt - leaf];
      slot = slot.valid() ? add(slot, contrib) : contrib;
    };
    const bool need_a = n.a >= leaf && reach[n.a - leaf];
    const bool need_b = n.b >= leaf && reach[n.b - leaf];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        if (need_a) accum(n.a, g);
        if (need_b) accum(n.b, g);
        break;
      case Op::kSub:
        if (need_a) accum(n.a, g);
        if (need_b) accum(n.b, scale(g, -1.0));
        break;
      case Op::kMul:
        if (need_a) accum(n.a, mul(g, vb));
        if (need_b) accum(n.b, mul(g, va));
        break;
      case Op::kScale:
        if (need_a) accum(n.a, scale(g, n.attr));
        break;
      case Op::kMulScalar:
        if (need_a) accum(n.a, sum(mul(g, vb)));
        if (need_b) accum(n.b, mul_scalar(va, g));
        break;
      case Op::kSin:
        if (need_a) {
          Node cn;
          cn.op = Op::kCos;
          cn.a = n.a;
          cn.value = n.aux;                  // cos(A) cached at the sin node
          cn.aux = t_scale(n.value, -1.0);   // -sin(A) for its own backward
          accum(n.a, mul(g, push(std::move(cn))));
        }
        break;
      case Op::kCos:
        if (need_a) accum(n.a, scale(mul(g, sin(va)), -1.0));
        break;
      case Op::kExp:
        if (need_a) accum(n.a, mul(g, self));
        break;
      case Op::kTanh:
        if (need_a) accum(n.a, sub(g, mul(g, square(self))));
        break;
      case Op::kSquare:
        if (need_a) accum(n.a, scale(mul(g, va), 2.0));
        break;
      case Op::kSum:
        if (need_a) accum(n.a, bcast(g, va.rows(), va.cols()));
        break;
      case Op::kRowSum:
        if (need_a) accum(n.a, bcast_cols(g, va.cols()));
        break;
      case Op::kColSum:
        if (need_a) accum(n.a, bcast_rows(g, va.rows()));
        break;
      case Op::kBcast:
        if (need_a) accum(n.a, sum(g));
        break;
      case Op::kBcastRows:
        if (need_a) accum(n.a, col_sum(g));
        break;
      case Op::kBcastCols:
        if (need_a) accum(n.a, row_sum(g));
        break;
      case Op::kMatmulNN:
        if (need_a) accum(n.a, matmul_nt(g, vb));
        if (need_b) accum(n.b, matmul_tn(va, g));
        break;
      case Op::kMatmulNT:
        if (need_a) accum(n.a, matmul_nn(g, vb));
        if (need_b) accum(n.b, matmul_tn(g, va));
        break;
      case Op::kMatmulTN:
        if (need_a) accum(n.a, matmul_nt(vb, g));
        if (need_b) accum(n.b, matmul_nn(va, g));
        break;
      case Op::kAddRowVec:
        if (need_a) accum(n.a, g);
        if (need_b) accum(n.b, col_sum(g));
        break;
      case Op::kMulRowVec:
        if (need_a) accum(n.a, mul_rowvec(g, vb));
        if (need_b) accum(n.b, col_sum(mul(g, va)));
        break;
      case Op::kMulColVec:
        if (need_a) accum(n.a, mul_colvec(g, vb));
        if (need_b) accum(n.b, row_sum(mul(g, va)));
        break;
      case Op::kSliceCols:
        if (need_a) accum(n.a, pad_cols(g, n.i0, va.cols()));
        break;
      case Op::kPadCols:
        if (need_a) accum(n.a, slice_cols(g, n.i0, va.cols()));
        break;
      case Op::kSliceRows:
        if (need_a) accum(n.a, pad_rows(g, n.i0, va.rows()));
        break;
      case Op::kPadRows:
        if (need_a) accum(n.a, slice_rows(g, n.i0, va.rows()));
        break;
      case Op::kTranspose:
        if (need_a) accum(n.a, transpose(g));
        break;
    }
  }
  return adj[0].valid() ? adj[0] : constant(Tensor(lv.rows(), lv.cols()));
}

std::vector<Tensor> Tape::grad_values(AdValue expr,
                                      std::span<const AdValue> leaves) const {
  check_same_tape(expr);
  if (!expr.is_scalar())
    throw ShapeError("grad_values: expression is not scalar");
  for (const AdValue& l : leaves) {
    check_same_tape(l);
    if (nodes_[l.index()].op != Op::kLeaf)
      throw ShapeError("grad_values: requested gradient of a non-leaf");
  }

  const int root = expr.index();
  std::vector<Tensor> adj(root + 1);
  adj[root] = Tensor::scalar(1.0);
  for (int i = root; i >= 0; --i) {
    if (adj[i].empty()) continue;
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    const Tensor* av = n.a >= 0 ? &nodes_[n.a].value : nullptr;
    const Tensor* bv = n.b >= 0 ? &nodes_[n.b].value : nullptr;
    // The fused in-place accumulations below are element-for-element
    // identical to "evaluate the contribution, then add", so both backward
    // sweeps agree exactly.
    auto add_plain = [&](int tgt, const Tensor& c) {
      if (adj[tgt].empty())
        adj[tgt] = c;
      else
        t_add_inplace(adj[tgt], c);
    };
    auto add_tensor = [&](int tgt, Tensor&& c) {
      if (adj[tgt].empty())
        adj[tgt] = std::move(c);
      else
        t_add_inplace(adj[tgt], c);
    };
    auto add_mul2 = [&](int tgt, const Tensor& x, const Tensor& y) {
      if (adj[tgt].empty())
        adj[tgt] = t_mul(x, y);
      else
        t_add_mul(adj[tgt], x, y);
    };
    auto add_scaled = [&](int tgt, const Tensor& x, double c) {
      if (adj[tgt].empty())
        adj[tgt] = t_scale(x, c);
      else
        t_add_scaled(adj[tgt], x, c);
    };
    auto add_nn = [&](int tgt, const Tensor& x, const Tensor& y) {
      if (adj[tgt].empty())
        adj[tgt] = t_matmul_nn(x, y);
      else
        t_matmul_nn_add(adj[tgt], x, y);
    };
    auto add_nt = [&](int tgt, const Tensor& x, const Tensor& y) {
      if (adj[tgt].empty())
        adj[tgt] = t_matmul_nt(x, y);
      else
        t_matmul_nt_add(adj[tgt], x, y);
    };
    auto add_tn = [&](int tgt, const Tensor& x, const Tensor& y) {
      if (adj[tgt].empty())
        adj[tgt] = t_matmul_tn(x, y);
      else
        t_matmul_tn_add(adj[tgt], x, y);
    };
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        add_plain(n.a, g);
        add_plain(n.b, g);
        break;
      case Op::kSub:
        add_plain(n.a, g);
        add_scaled(n.b, g, -1.0);
        break;
      case Op::kMul:
        add_mul2(n.a, g, *bv);
        add_mul2(n.b, g, *av);
        break;
      case Op::kScale:
        add_scaled(n.a, g, n.attr);
        break;
      case Op::kMulScalar:
        add_tensor(n.a, t_sum(t_mul(g, *bv)));
        add_scaled(n.b, g, av->value());
        break;
      case Op::kSin:
        if (!n.aux.empty())
          add_mul2(n.a, g, n.aux);
        else
          add_tensor(n.a, t_mul(g, t_cos(*av)));
        break;
      case Op::kCos:
        if (!n.aux.empty())
          add_mul2(n.a, g, n.aux);
        else
          add_tensor(n.a, t_scale(t_mul(g, t_sin(*av)), -1.0));
        break;
      case Op::kExp:
        add_mul2(n.a, g, n.value);
        break;
      case Op::kTanh:
        add_tensor(n.a, t_sub(g, t_mul(g, t_square(n.value))));
        break;
      case Op::kSquare:
        add_tensor(n.a, t_scale(t_mul(g, *av), 2.0));
        break;
      case Op::kSum:
        add_tensor(n.a, t_bcast(g, av->rows(), av->cols()));
        break;
      case Op::kRowSum: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_bcast_cols(g, av->cols());
        } else {
          Tensor& dst = adj[n.a];
          for (int r = 0; r < dst.rows(); ++r) {
            double* pd = dst.row(r);
            const double gv = g(r, 0);
            for (int c = 0; c < dst.cols(); ++c) pd[c] += gv;
          }
        }
        break;
      }
      case Op::kColSum: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_bcast_rows(g, av->rows());
        } else {
          Tensor& dst = adj[n.a];
          for (int r = 0; r < dst.rows(); ++r) {
            double* pd = dst.row(r);
            for (int c = 0; c < dst.cols(); ++c) pd[c] += g(c, 0);
          }
        }
        break;
      }
      case Op::kBcast:
        add_tensor(n.a, t_sum(g));
        break;
      case Op::kBcastRows:
        add_tensor(n.a, t_col_sum(g));
        break;
      case Op::kBcastCols:
        add_tensor(n.a, t_row_sum(g));
        break;
      case Op::kMatmulNN:
        add_nt(n.a, g, *bv);
        add_tn(n.b, *av, g);
        break;
      case Op::kMatmulNT:
        add_nn(n.a, g, *bv);
        add_tn(n.b, g, *av);
        break;
      case Op::kMatmulTN:
        add_nt(n.a, *bv, g);
        add_nn(n.b, *av, g);
        break;
      case Op::kAddRowVec:
        add_plain(n.a, g);
        add_tensor(n.b, t_col_sum(g));
        break;
      case Op::kMulRowVec:
        add_tensor(n.a, t_mul_rowvec(g, *bv));
        add_tensor(n.b, t_col_sum(t_mul(g, *av)));
        break;
      case Op::kMulColVec:
        add_tensor(n.a, t_mul_colvec(g, *bv));
        add_tensor(n.b, t_row_sum(t_mul(g, *av)));
        break;
      case Op::kSliceCols: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_pad_cols(g, n.i0, av->cols());
        } else {
          Tensor& dst = adj[n.a];
          for (int r = 0; r < g.rows(); ++r) {
            double* pd = dst.row(r) + n.i0;
            const double* pg = g.row(r);
            for (int c = 0; c < g.cols(); ++c) pd[c] += pg[c];
          }
        }
        break;
      }
      case Op::kPadCols: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_slice_cols(g, n.i0, av->cols());
        } else {
          Tensor& dst = adj[n.a];
          for (int r = 0; r < dst.rows(); ++r) {
            double* pd = dst.row(r);
            const double* pg = g.row(r) + n.i0;
            for (int c = 0; c < dst.cols(); ++c) pd[c] += pg[c];
          }
        }
        break;
      }
      case Op::kSliceRows: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_pad_rows(g, n.i0, av->rows());
        } else {
          Tensor& dst = adj[n.a];
          double* pd = dst.row(n.i0);
          const double* pg = g.data();
          const std::size_t len = g.size();
          for (std::size_t e = 0; e < len; ++e) pd[e] += pg[e];
        }
        break;
      }
      case Op::kPadRows: {
        if (adj[n.a].empty()) {
          adj[n.a] = t_slice_rows(g, n.i0, av->rows());
        } else {
          Tensor& dst = adj[n.a];
          double* pd = dst.data();
          const double* pg = g.row(n.i0);
          const std::size_t len = dst.size();
          for (std::size_t e = 0; e < len; ++e) pd[e] += pg[e];
        }
        break;
      }
      case Op::kTranspose:
        add_tensor(n.a, t_transpose(g));
        break;
    }
  }

  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (const AdValue& l : leaves) {
    const int idx = l.index();
    if (idx <= root && !adj[idx].empty())
      out.push_back(std::move(adj[idx]));
    else
      out.push_back(Tensor(l.rows(), l.cols()));
  }
  return out;
}

double finite_diff_check(const std::function<AdValue(Tape&, AdValue)>& f,
                         const Tensor& point, double h) {
  if (h <= 0.0) throw ShapeError("finite_diff_check: h must be positive");

  auto eval = [&](const Tensor& p) {
    Tape tape;
    AdValue x = tape.leaf(p);
    AdValue y = f(tape, x);
    if (!y.is_scalar())
      throw ShapeError("finite_diff_check: f is not scalar-valued");
    const double v = y.scalar();
    if (!std::isfinite(v))
      throw NumericError("finite_diff_check: f evaluated to a non-finite value");
    return v;
  };

  Tape tape;
  AdValue x = tape.leaf(point);
  AdValue y = f(tape, x);
  if (!y.is_scalar())
    throw ShapeError("finite_diff_check: f is not scalar-valued");
  if (!std::isfinite(y.scalar()))
    throw NumericError("finite_diff_check: f evaluated to a non-finite value");
  const AdValue leaves[] = {x};
  const Tensor ad = tape.grad_values(y, leaves)[0];

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double fp = eval(probe);
    probe.data()[i] = saved - h;
    const double fm = eval(probe);
    probe.data()[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = ad.data()[i];
    const double dev = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
    if (dev > worst) worst = dev;
  }
  return worst;
}

}  // namespace fbsde::ad
