// SPDX-License-Identifier: Apache-2.0
#include "gode/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gode/error.hpp"

namespace gode::kernels {

#ifdef GODE_ACCUM_DOUBLE
using Accum = double;
#else
using Accum = float;
#endif

namespace {

inline void check_spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y) {
  if (x.rows() != a.n_cols) {
    throw Error(ErrorCode::DimensionMismatch, "spmm: operand has " + std::to_string(x.rows()) +
                                                  " rows, matrix has " + std::to_string(a.n_cols) +
                                                  " columns");
  }
  if (y.rows() != a.n_rows || y.cols() != x.cols()) y = DenseMatrix(a.n_rows, x.cols());
}

inline void spmm_row(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y, std::size_t r,
                     Accum* acc) {
  const std::size_t d = x.cols();
  std::fill(acc, acc + d, Accum{0});
  for (auto p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
    const Accum w = a.val[p];
    const float* src = x.data() + static_cast<std::size_t>(a.col[p]) * d;
    for (std::size_t c = 0; c < d; ++c) acc[c] += w * src[c];
  }
  float* dst = y.data() + r * d;
  for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<float>(acc[c]);
}

inline bool ranks_before(const Scored& a, const Scored& b) {
  return a.score > b.score || (a.score == b.score && a.item < b.item);
}

std::vector<Scored> top_k_one(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                              std::uint32_t user, std::span<const std::uint32_t> excluded,
                              std::size_t k, std::vector<Scored>& buf) {
  const std::size_t d = user_emb.cols();
  const float* u = user_emb.data() + static_cast<std::size_t>(user) * d;
  buf.clear();
  std::size_t next_ex = 0;
  for (std::uint32_t i = 0; i < item_emb.rows(); ++i) {
    while (next_ex < excluded.size() && excluded[next_ex] < i) ++next_ex;
    if (next_ex < excluded.size() && excluded[next_ex] == i) continue;
    const float* v = item_emb.data() + static_cast<std::size_t>(i) * d;
    float s = 0.0f;
    for (std::size_t c = 0; c < d; ++c) s += u[c] * v[c];
    buf.push_back({s, i});
  }
  const std::size_t keep = std::min(k, buf.size());
  std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(keep), buf.end(),
                    ranks_before);
  return {buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(keep)};
}

void check_top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                 std::span<const std::uint32_t> users,
                 std::span<const std::vector<std::uint32_t>> exclude) {
  if (user_emb.cols() != item_emb.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "user/item embedding dimensions differ");
  }
  if (exclude.size() != users.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one exclusion list per user required");
  }
  for (const auto u : users)
    if (u >= user_emb.rows()) throw Error(ErrorCode::DimensionMismatch, "user id out of range");
}

void check_uniformity(std::span<const double> x, std::size_t n, std::size_t d,
                      std::span<double> grad) {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "uniformity needs at least two rows");
  if (x.size() != n * d || grad.size() != n * d) {
    throw Error(ErrorCode::DimensionMismatch, "uniformity buffers must be n x d");
  }
}

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double sq = 0.0;
#pragma omp simd reduction(+ : sq)
  for (std::size_t c = 0; c < d; ++c) {
    const double t = a[c] - b[c];
    sq += t * t;
  }
  return sq;
}

// Kernel value and d(value)/d(x_i) coefficient for the direction x_i - x_j.
inline void pair_terms(double sq, UniformityKernel kernel, double& value, double& coef) {
  if (kernel == UniformityKernel::SquaredDistance) {
    value = std::exp(-2.0 * sq);
    coef = -4.0 * value;
  } else {
    const double dist = std::sqrt(sq);
    value = std::exp(-2.0 * dist);
    coef = dist > 0.0 ? -2.0 * value / dist : 0.0;
  }
}

}  // namespace

int configure_threads_from_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("GODE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference versions

namespace serial {

void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y) {
  check_spmm(a, x, y);
  std::vector<Accum> acc(x.cols());
  for (std::size_t r = 0; r < a.n_rows; ++r) spmm_row(a, x, y, r, acc.data());
}

void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y) {
  if (!x.same_shape(y)) throw Error(ErrorCode::DimensionMismatch, "axpy shape mismatch");
  auto xs = x.flat();
  auto ys = y.flat();
  for (std::size_t k = 0; k < ys.size(); ++k) ys[k] += alpha * xs[k];
}

double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad) {
  check_uniformity(x, n, d, grad);
  std::fill(grad.begin(), grad.end(), 0.0);
  double half_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * d;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = x.data() + j * d;
      const double sq = squared_distance(xi, xj, d);
      double value, coef;
      pair_terms(sq, kernel, value, coef);
      half_sum += value;
      if (coef == 0.0) continue;
      double* __restrict gi = grad.data() + i * d;
      double* __restrict gj = grad.data() + j * d;
#pragma omp simd
      for (std::size_t c = 0; c < d; ++c) {
        const double t = coef * (xi[c] - xj[c]);
        gi[c] += t;
        gj[c] -= t;
      }
    }
  }
  // Ordered pairs: each unordered pair counted twice.
  const double total = 2.0 * half_sum;
  const double scale = 2.0 / total;
  for (auto& g : grad) g *= scale;
  return std::log(total / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k) {
  check_top_k(user_emb, item_emb, users, exclude);
  std::vector<std::vector<Scored>> out(users.size());
  std::vector<Scored> buf;
  buf.reserve(item_emb.rows());
  for (std::size_t q = 0; q < users.size(); ++q)
    out[q] = top_k_one(user_emb, item_emb, users[q], exclude[q], k, buf);
  return out;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP versions

namespace omp {

void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y) {
  check_spmm(a, x, y);
  const auto n_rows = static_cast<std::int64_t>(a.n_rows);
#pragma omp parallel
  {
    std::vector<Accum> acc(x.cols());
#pragma omp for schedule(dynamic, 64)
    for (std::int64_t r = 0; r < n_rows; ++r)
      spmm_row(a, x, y, static_cast<std::size_t>(r), acc.data());
  }
}

void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y) {
  if (!x.same_shape(y)) throw Error(ErrorCode::DimensionMismatch, "axpy shape mismatch");
  const float* xs = x.data();
  float* ys = y.data();
  const auto n = static_cast<std::int64_t>(y.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) ys[k] += alpha * xs[k];
}

double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad) {
  check_uniformity(x, n, d, grad);
  // Pass 1: upper-triangle kernel values and gradient coefficients.
  std::vector<double> coef(n * n, 0.0);
  std::vector<double> row_sum(n, 0.0);
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* xi = x.data() + i * d;
    double partial = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = x.data() + j * d;
      const double sq = squared_distance(xi, xj, d);
      double value, cf;
      pair_terms(sq, kernel, value, cf);
      partial += value;
      coef[i * n + j] = cf;
      coef[j * n + i] = cf;
    }
    row_sum[i] = partial;
  }
  double half_sum = 0.0;
  for (const auto s : row_sum) half_sum += s;
  const double total = 2.0 * half_sum;
  const double scale = 2.0 / total;

  // Pass 2: grad_i = scale * sum_j coef_ij (x_i - x_j), one row per iteration.
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* xi = x.data() + i * d;
    double* gi = grad.data() + i * d;
    std::fill(gi, gi + d, 0.0);
    const double* ci = coef.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || ci[j] == 0.0) continue;
      const double* xj = x.data() + j * d;
#pragma omp simd
      for (std::size_t c = 0; c < d; ++c) gi[c] += ci[j] * (xi[c] - xj[c]);
    }
    for (std::size_t c = 0; c < d; ++c) gi[c] *= scale;
  }
  return std::log(total / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k) {
  check_top_k(user_emb, item_emb, users, exclude);
  std::vector<std::vector<Scored>> out(users.size());
  const auto n = static_cast<std::int64_t>(users.size());
#pragma omp parallel
  {
    std::vector<Scored> buf;
    buf.reserve(item_emb.rows());
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t q = 0; q < n; ++q) {
      const auto qi = static_cast<std::size_t>(q);
      out[qi] = top_k_one(user_emb, item_emb, users[qi], exclude[qi], k, buf);
    }
  }
  return out;
}

}  // namespace omp

// ---------------------------------------------------------------------------
// Dispatch

void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y) { omp::spmm(a, x, y); }

void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y) { omp::axpy(alpha, x, y); }

double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad) {
#ifdef _OPENMP
  // The two-pass form does twice the arithmetic of the symmetric loop and only
  // pays off with more than one thread.
  if (omp_get_max_threads() > 1) return omp::uniformity(x, n, d, kernel, grad);
#endif
  return serial::uniformity(x, n, d, kernel, grad);
}

std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k) {
  return omp::top_k(user_emb, item_emb, users, exclude, k);
}

}  // namespace gode::kernels
