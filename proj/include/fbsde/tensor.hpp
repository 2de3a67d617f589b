#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fbsde::ad {

// Dense row-major f64 value of rank <= 2. Scalars are 1x1, column vectors
// are n x 1. This is the only numeric container used on tapes.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols);  // zero-filled

  static Tensor scalar(double v);
  static Tensor colvec(std::span<const double> v);
  static Tensor from_rows(int rows, int cols, std::vector<double> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool is_colvec() const { return cols_ == 1; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(int i, int j) { return data_[(std::size_t)i * cols_ + j]; }
  double operator()(int i, int j) const {
    return data_[(std::size_t)i * cols_ + j];
  }
  double value() const { return data_[0]; }  // scalar access

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int i) { return data_.data() + (std::size_t)i * cols_; }
  const double* row(int i) const { return data_.data() + (std::size_t)i * cols_; }

  bool all_finite() const;
  // Index of the first non-finite element, -1 if all finite.
  long first_nonfinite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Number of worker threads used by the kernels below. 0 = hardware default.
// All kernels partition output elements statically, so results are
// bit-identical for every thread count.
void set_kernel_threads(int n);
int kernel_threads();

// Elementwise and reduction kernels. Shape checks throw ShapeError.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double c);
Tensor t_mul_scalar(const Tensor& s, const Tensor& x);  // s is 1x1
Tensor t_sin(const Tensor& a);
Tensor t_cos(const Tensor& a);
Tensor t_exp(const Tensor& a);
Tensor t_tanh(const Tensor& a);
Tensor t_square(const Tensor& a);
Tensor t_sum(const Tensor& a);                    // -> 1x1
Tensor t_row_sum(const Tensor& a);                // m x n -> m x 1
Tensor t_col_sum(const Tensor& a);                // m x n -> n x 1
Tensor t_bcast(const Tensor& s, int r, int c);    // 1x1 -> r x c
Tensor t_bcast_rows(const Tensor& v, int m);      // n x 1 -> m x n
Tensor t_bcast_cols(const Tensor& v, int n);      // m x 1 -> m x n
Tensor t_matmul_nn(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
Tensor t_matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T
Tensor t_matmul_tn(const Tensor& a, const Tensor& b);  // [m,k]^T x[m,n]
Tensor t_add_rowvec(const Tensor& x, const Tensor& b);  // b: n x 1
Tensor t_mul_rowvec(const Tensor& x, const Tensor& v);  // v: n x 1
Tensor t_mul_colvec(const Tensor& x, const Tensor& v);  // v: m x 1
Tensor t_slice_cols(const Tensor& x, int c0, int n);
Tensor t_pad_cols(const Tensor& x, int c0, int total);
Tensor t_slice_rows(const Tensor& x, int r0, int n);
Tensor t_pad_rows(const Tensor& x, int r0, int total);
Tensor t_transpose(const Tensor& x);

// sin and cos of the same argument in one pass.
void t_sincos(const Tensor& a, Tensor& s, Tensor& c);

// In-place accumulations used by the arithmetic backward sweep. Each is
// element-for-element identical to computing the right-hand side into a
// temporary and adding it, so sweep results do not depend on which path
// ran.
void t_add_inplace(Tensor& dst, const Tensor& src);
void t_add_scaled(Tensor& dst, const Tensor& src, double c);
void t_add_mul(Tensor& dst, const Tensor& a, const Tensor& b);
void t_matmul_nn_add(Tensor& dst, const Tensor& a, const Tensor& b);
void t_matmul_nt_add(Tensor& dst, const Tensor& a, const Tensor& b);
void t_matmul_tn_add(Tensor& dst, const Tensor& a, const Tensor& b);

}  // namespace fbsde::ad
