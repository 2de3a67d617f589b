#include "fbsde/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "fbsde/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fbsde::ad {

namespace {

// Default to one worker: the kernels are bit-reproducible for any thread
// count, but measured fork/join latency on small shared machines outweighs
// the matmul gains, so parallelism is opt-in.
int g_threads = 1;

// Parallelize a matmul only when it is worth the fork/join barrier.
constexpr long kParallelFlopCutoff = 1500000;

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": operand shapes (" +
                   std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                   ") and (" + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()) + ") do not conform");
}

inline int nthreads_for(long flops) {
#ifdef _OPENMP
  if (flops < kParallelFlopCutoff) return 1;
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  (void)flops;
  return 1;
#endif
}

}  // namespace

Tensor::Tensor(int rows, int cols)
    : rows_(rows), cols_(cols), data_((std::size_t)rows * cols, 0.0) {
  if (rows < 1 || cols < 1)
    throw ShapeError("Tensor: non-positive dimensions");
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::colvec(std::span<const double> v) {
  Tensor t((int)v.size(), 1);
  std::memcpy(t.data_.data(), v.data(), v.size() * sizeof(double));
  return t;
}

Tensor Tensor::from_rows(int rows, int cols, std::vector<double> data) {
  if ((std::size_t)rows * cols != data.size())
    throw ShapeError("Tensor::from_rows: data size does not match shape");
  Tensor t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.data_ = std::move(data);
  return t;
}

bool Tensor::all_finite() const { return first_nonfinite() < 0; }

long Tensor::first_nonfinite() const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i])) return (long)i;
  return -1;
}

void set_kernel_threads(int n) { g_threads = n; }

int kernel_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("add", a, b);
  Tensor out(a.rows(), a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("sub", a, b);
  Tensor out(a.rows(), a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  return out;
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_fail("mul", a, b);
  Tensor out(a.rows(), a.cols());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  return out;
}

Tensor t_scale(const Tensor& a, double c) {
  Tensor out(a.rows(), a.cols());
  const double* pa = a.data();
  double* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  return out;
}

Tensor t_mul_scalar(const Tensor& s, const Tensor& x) {
  if (!s.is_scalar()) shape_fail("mul_scalar", s, x);
  return t_scale(x, s.value());
}

#define FBSDE_ELEMENTWISE(name, expr)                  \
  Tensor name(const Tensor& a) {                       \
    Tensor out(a.rows(), a.cols());                    \
    const double* pa = a.data();                       \
    double* po = out.data();                           \
    const std::size_t n = a.size();                    \
    for (std::size_t i = 0; i < n; ++i) {              \
      const double v = pa[i];                          \
      po[i] = (expr);                                  \
    }                                                  \
    return out;                                        \
  }

FBSDE_ELEMENTWISE(t_sin, std::sin(v))
FBSDE_ELEMENTWISE(t_cos, std::cos(v))
FBSDE_ELEMENTWISE(t_exp, std::exp(v))
FBSDE_ELEMENTWISE(t_tanh, std::tanh(v))
FBSDE_ELEMENTWISE(t_square, v* v)

#undef FBSDE_ELEMENTWISE

Tensor t_sum(const Tensor& a) {
  double acc = 0.0;
  const double* pa = a.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  return Tensor::scalar(acc);
}

Tensor t_row_sum(const Tensor& a) {
  Tensor out(a.rows(), 1);
  for (int i = 0; i < a.rows(); ++i) {
    const double* pr = a.row(i);
    double acc = 0.0;
    for (int j = 0; j < a.cols(); ++j) acc += pr[j];
    out(i, 0) = acc;
  }
  return out;
}

Tensor t_col_sum(const Tensor& a) {
  Tensor out(a.cols(), 1);
  double* po = out.data();
  for (int i = 0; i < a.rows(); ++i) {
    const double* pr = a.row(i);
    for (int j = 0; j < a.cols(); ++j) po[j] += pr[j];
  }
  return out;
}

Tensor t_bcast(const Tensor& s, int r, int c) {
  if (!s.is_scalar()) throw ShapeError("bcast: source is not scalar");
  Tensor out(r, c);
  const double v = s.value();
  double* po = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = v;
  return out;
}

Tensor t_bcast_rows(const Tensor& v, int m) {
  if (!v.is_colvec()) throw ShapeError("bcast_rows: source is not a column vector");
  const int n = v.rows();
  Tensor out(m, n);
  const double* pv = v.data();
  for (int i = 0; i < m; ++i) std::memcpy(out.row(i), pv, n * sizeof(double));
  return out;
}

Tensor t_bcast_cols(const Tensor& v, int n) {
  if (!v.is_colvec()) throw ShapeError("bcast_cols: source is not a column vector");
  const int m = v.rows();
  Tensor out(m, n);
  for (int i = 0; i < m; ++i) {
    double* pr = out.row(i);
    const double x = v(i, 0);
    for (int j = 0; j < n; ++j) pr[j] = x;
  }
  return out;
}

// out[i][j] = sum_k a[i][k] * b[k][j]; i-k-j loop order so the inner loop
// runs contiguously over b and out rows.
Tensor t_matmul_nn(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul_nn", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  [[maybe_unused]] const int nt = nthreads_for(2L * m * k * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
  for (int i = 0; i < m; ++i) {
    double* __restrict po = out.row(i);
    const double* pa = a.row(i);
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[kk];
      const double* __restrict pb = b.row(kk);
      for (int j = 0; j < n; ++j) po[j] += av * pb[j];
    }
  }
  return out;
}

// out[i][j] = sum_k a[i][k] * b[j][k]; rows of both operands are contiguous.
// Four fixed accumulator lanes break the floating-point dependency chain;
// the summation order is fixed, so results stay bit-reproducible.
Tensor t_matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(m, n);
  [[maybe_unused]] const int nt = nthreads_for(2L * m * k * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
  for (int i = 0; i < m; ++i) {
    double* po = out.row(i);
    const double* __restrict pa = a.row(i);
    for (int j = 0; j < n; ++j) {
      const double* __restrict pb = b.row(j);
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      int kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        a0 += pa[kk] * pb[kk];
        a1 += pa[kk + 1] * pb[kk + 1];
        a2 += pa[kk + 2] * pb[kk + 2];
        a3 += pa[kk + 3] * pb[kk + 3];
      }
      double acc = (a0 + a1) + (a2 + a3);
      for (; kk < k; ++kk) acc += pa[kk] * pb[kk];
      po[j] = acc;
    }
  }
  return out;
}

// out[i][j] = sum_k a[k][i] * b[k][j]; parallel over output rows, each of
// which accumulates over the shared k index in a fixed order.
Tensor t_matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  const int m = a.cols(), k = a.rows(), n = b.cols();
  Tensor out(m, n);
  [[maybe_unused]] const int nt = nthreads_for(2L * m * k * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
  for (int i = 0; i < m; ++i) {
    double* __restrict po = out.row(i);
    for (int kk = 0; kk < k; ++kk) {
      const double av = a(kk, i);
      const double* __restrict pb = b.row(kk);
      for (int j = 0; j < n; ++j) po[j] += av * pb[j];
    }
  }
  return out;
}

Tensor t_add_rowvec(const Tensor& x, const Tensor& b) {
  if (!b.is_colvec() || b.rows() != x.cols()) shape_fail("add_rowvec", x, b);
  Tensor out(x.rows(), x.cols());
  const double* pb = b.data();
  for (int i = 0; i < x.rows(); ++i) {
    const double* px = x.row(i);
    double* po = out.row(i);
    for (int j = 0; j < x.cols(); ++j) po[j] = px[j] + pb[j];
  }
  return out;
}

Tensor t_mul_rowvec(const Tensor& x, const Tensor& v) {
  if (!v.is_colvec() || v.rows() != x.cols()) shape_fail("mul_rowvec", x, v);
  Tensor out(x.rows(), x.cols());
  const double* pv = v.data();
  for (int i = 0; i < x.rows(); ++i) {
    const double* px = x.row(i);
    double* po = out.row(i);
    for (int j = 0; j < x.cols(); ++j) po[j] = px[j] * pv[j];
  }
  return out;
}

Tensor t_mul_colvec(const Tensor& x, const Tensor& v) {
  if (!v.is_colvec() || v.rows() != x.rows()) shape_fail("mul_colvec", x, v);
  Tensor out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double* px = x.row(i);
    double* po = out.row(i);
    const double s = v(i, 0);
    for (int j = 0; j < x.cols(); ++j) po[j] = px[j] * s;
  }
  return out;
}

Tensor t_slice_cols(const Tensor& x, int c0, int n) {
  if (c0 < 0 || n < 1 || c0 + n > x.cols())
    throw ShapeError("slice_cols: range out of bounds");
  Tensor out(x.rows(), n);
  for (int i = 0; i < x.rows(); ++i)
    std::memcpy(out.row(i), x.row(i) + c0, n * sizeof(double));
  return out;
}

Tensor t_pad_cols(const Tensor& x, int c0, int total) {
  if (c0 < 0 || c0 + x.cols() > total)
    throw ShapeError("pad_cols: range out of bounds");
  Tensor out(x.rows(), total);
  for (int i = 0; i < x.rows(); ++i)
    std::memcpy(out.row(i) + c0, x.row(i), x.cols() * sizeof(double));
  return out;
}

Tensor t_slice_rows(const Tensor& x, int r0, int n) {
  if (r0 < 0 || n < 1 || r0 + n > x.rows())
    throw ShapeError("slice_rows: range out of bounds");
  Tensor out(n, x.cols());
  std::memcpy(out.data(), x.row(r0), (std::size_t)n * x.cols() * sizeof(double));
  return out;
}

Tensor t_pad_rows(const Tensor& x, int r0, int total) {
  if (r0 < 0 || r0 + x.rows() > total)
    throw ShapeError("pad_rows: range out of bounds");
  Tensor out(total, x.cols());
  std::memcpy(out.row(r0), x.data(), x.size() * sizeof(double));
  return out;
}

Tensor t_transpose(const Tensor& x) {
  Tensor out(x.cols(), x.rows());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return out;
}

void t_sincos(const Tensor& a, Tensor& s, Tensor& c) {
  s = Tensor(a.rows(), a.cols());
  c = Tensor(a.rows(), a.cols());
  const double* pa = a.data();
  double* ps = s.data();
  double* pc = c.data();
  const std::size_t n = a.size();
#ifdef __GLIBC__
  for (std::size_t i = 0; i < n; ++i) ::sincos(pa[i], &ps[i], &pc[i]);
#else
  for (std::size_t i = 0; i < n; ++i) {
    ps[i] = std::sin(pa[i]);
    pc[i] = std::cos(pa[i]);
  }
#endif
}

void t_add_inplace(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) shape_fail("add_inplace", dst, src);
  double* pd = dst.data();
  const double* ps = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) pd[i] += ps[i];
}

void t_add_scaled(Tensor& dst, const Tensor& src, double c) {
  if (!dst.same_shape(src)) shape_fail("add_scaled", dst, src);
  double* pd = dst.data();
  const double* ps = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) pd[i] += ps[i] * c;
}

void t_add_mul(Tensor& dst, const Tensor& a, const Tensor& b) {
  if (!dst.same_shape(a) || !a.same_shape(b)) shape_fail("add_mul", a, b);
  double* pd = dst.data();
  const double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) pd[i] += pa[i] * pb[i];
}

namespace {

// Fixed-size row scratch keeps the accumulate variants bit-identical to
// "compute product, then add": the product row is finished before any
// element touches dst.
constexpr int kRowScratch = 512;

template <typename RowFn>
void accumulate_rows(Tensor& dst, int rows, int cols, long flops, RowFn fn) {
  [[maybe_unused]] const int nt = nthreads_for(flops);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
  for (int i = 0; i < rows; ++i) {
    double tmp_stack[kRowScratch];
    std::vector<double> tmp_heap;
    double* tmp = tmp_stack;
    if (cols > kRowScratch) {
      tmp_heap.resize(cols);
      tmp = tmp_heap.data();
    }
    for (int j = 0; j < cols; ++j) tmp[j] = 0.0;
    fn(i, tmp);
    double* pd = dst.row(i);
    for (int j = 0; j < cols; ++j) pd[j] += tmp[j];
  }
}

}  // namespace

void t_matmul_nn_add(Tensor& dst, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul_nn_add", a, b);
  if (dst.rows() != a.rows() || dst.cols() != b.cols())
    shape_fail("matmul_nn_add", dst, b);
  const int k = a.cols(), n = b.cols();
  accumulate_rows(dst, a.rows(), n, 2L * a.rows() * k * n,
                  [&](int i, double* __restrict tmp) {
    const double* pa = a.row(i);
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[kk];
      const double* __restrict pb = b.row(kk);
      for (int j = 0; j < n; ++j) tmp[j] += av * pb[j];
    }
  });
}

void t_matmul_nt_add(Tensor& dst, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt_add", a, b);
  if (dst.rows() != a.rows() || dst.cols() != b.rows())
    shape_fail("matmul_nt_add", dst, b);
  const int k = a.cols(), n = b.rows();
  [[maybe_unused]] const int nt = nthreads_for(2L * a.rows() * k * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
#endif
  for (int i = 0; i < a.rows(); ++i) {
    const double* __restrict pa = a.row(i);
    double* pd = dst.row(i);
    for (int j = 0; j < n; ++j) {
      const double* __restrict pb = b.row(j);
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      int kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        a0 += pa[kk] * pb[kk];
        a1 += pa[kk + 1] * pb[kk + 1];
        a2 += pa[kk + 2] * pb[kk + 2];
        a3 += pa[kk + 3] * pb[kk + 3];
      }
      double acc = (a0 + a1) + (a2 + a3);
      for (; kk < k; ++kk) acc += pa[kk] * pb[kk];
      pd[j] += acc;
    }
  }
}

void t_matmul_tn_add(Tensor& dst, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn_add", a, b);
  if (dst.rows() != a.cols() || dst.cols() != b.cols())
    shape_fail("matmul_tn_add", dst, b);
  const int k = a.rows(), n = b.cols();
  accumulate_rows(dst, a.cols(), n, 2L * a.cols() * k * n,
                  [&](int i, double* __restrict tmp) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = a(kk, i);
      const double* __restrict pb = b.row(kk);
      for (int j = 0; j < n; ++j) tmp[j] += av * pb[j];
    }
  });
}

}  // namespace fbsde::ad
