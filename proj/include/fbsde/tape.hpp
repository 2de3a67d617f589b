#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fbsde/tensor.hpp"

namespace fbsde::ad {

enum class Op : uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kScale,      // attr = constant factor
  kMulScalar,  // a: 1x1 node, b: tensor node
  kSin,
  kCos,
  kExp,
  kTanh,
  kSquare,
  kSum,
  kRowSum,
  kColSum,
  kBcast,      // i0 x i1
  kBcastRows,  // i0 = row count
  kBcastCols,  // i0 = col count
  kMatmulNN,
  kMatmulNT,
  kMatmulTN,
  kAddRowVec,
  kMulRowVec,
  kMulColVec,
  kSliceCols,  // i0 = first col, i1 = width
  kPadCols,    // i0 = first col, i1 = total width
  kSliceRows,  // i0 = first row, i1 = height
  kPadRows,    // i0 = first row, i1 = total height
  kTranspose,
};

struct Node {
  Op op;
  int32_t a = -1;
  int32_t b = -1;
  int32_t i0 = 0;
  int32_t i1 = 0;
  double attr = 0.0;
  Tensor value;
  // cached derivative data (cos for sin nodes); empty when unused
  Tensor aux;
};

class Tape;

// Handle to a value recorded on a tape. Copy-cheap; valid until the owning
// tape is reset or destroyed.
class AdValue {
 public:
  AdValue() = default;

  int rows() const;
  int cols() const;
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  const Tensor& value() const;
  double scalar() const { return value().value(); }
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  int index() const { return idx_; }

 private:
  friend class Tape;
  AdValue(Tape* tape, int idx) : tape_(tape), idx_(idx) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Append-only record of primitive tensor operations, evaluated eagerly.
// Nodes appear in topological order by construction. Single-writer: one
// thread builds a given tape; distinct tapes are fully independent.
//
// Reverse sweeps come in two flavors:
//   - grad_wrt_input emits the adjoint computation as new tape nodes, so
//     the returned gradient can itself be differentiated (this is what
//     makes losses containing grad_x u_theta trainable), and
//   - grad_values runs the same sweep arithmetically into plain tensors,
//     which is what parameter updates consume.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  AdValue leaf(Tensor v);
  AdValue constant(Tensor v);
  AdValue constant(double v);
  bool is_leaf(const AdValue& v) const;

  std::size_t size() const { return nodes_.size(); }
  void reset();

  AdValue add(AdValue a, AdValue b);
  AdValue sub(AdValue a, AdValue b);
  AdValue mul(AdValue a, AdValue b);
  AdValue scale(AdValue a, double c);
  AdValue mul_scalar(AdValue s, AdValue x);
  AdValue sin(AdValue a);
  AdValue cos(AdValue a);
  AdValue exp(AdValue a);
  AdValue tanh(AdValue a);
  AdValue square(AdValue a);
  AdValue sum(AdValue a);
  AdValue row_sum(AdValue a);
  AdValue col_sum(AdValue a);
  AdValue bcast(AdValue s, int rows, int cols);
  AdValue bcast_rows(AdValue v, int m);
  AdValue bcast_cols(AdValue v, int n);
  AdValue matmul_nn(AdValue a, AdValue b);
  AdValue matmul_nt(AdValue a, AdValue b);
  AdValue matmul_tn(AdValue a, AdValue b);
  AdValue add_rowvec(AdValue x, AdValue b);
  AdValue mul_rowvec(AdValue x, AdValue v);
  AdValue mul_colvec(AdValue x, AdValue v);
  AdValue slice_cols(AdValue x, int c0, int n);
  AdValue pad_cols(AdValue x, int c0, int total);
  AdValue slice_rows(AdValue x, int r0, int n);
  AdValue pad_rows(AdValue x, int r0, int total);
  AdValue transpose(AdValue x);

  // Composites.
  AdValue matvec(AdValue w, AdValue x) { return matmul_nn(w, x); }
  AdValue dot(AdValue a, AdValue b) { return sum(mul(a, b)); }
  AdValue outer(AdValue u, AdValue v) { return matmul_nt(u, v); }
  AdValue rowwise_dot(AdValue a, AdValue b) { return row_sum(mul(a, b)); }
  AdValue mean(AdValue a);

  // Gradient of a scalar expression with respect to one leaf, recorded on
  // the tape. The result is differentiable with respect to every other
  // leaf. Throws ShapeError if expr is not scalar or leaf is not a leaf of
  // this tape.
  AdValue grad_wrt_input(AdValue expr, AdValue input_leaf);

  // Exact reverse-mode gradients of a scalar expression with respect to a
  // set of leaves, as plain tensors. Leaves the expression does not depend
  // on yield zero tensors.
  std::vector<Tensor> grad_values(AdValue expr,
                                  std::span<const AdValue> leaves) const;

  const Node& node(int idx) const { return nodes_[idx]; }

 private:
  friend class AdValue;
  AdValue push(Node n);
  void check_same_tape(const AdValue& v) const;

  std::vector<Node> nodes_;
};

// Max over coordinates of |ad - fd| / (|ad| + |fd| + eps), eps = 1e-12,
// between the tape gradient of f at `point` and central differences with
// step h. f receives a fresh tape and the input leaf. Throws NumericError
// if f evaluates to a non-finite value anywhere in the stencil.
double finite_diff_check(
    const std::function<AdValue(Tape&, AdValue)>& f, const Tensor& point,
    double h);

}  // namespace fbsde::ad
