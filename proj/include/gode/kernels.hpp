// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hot loops. Each kernel exists as an OpenMP version (gode::kernels::omp) and
// a plain serial reference (gode::kernels::serial) used by the tests and the
// kernel benchmark. The unqualified functions are what the library calls.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gode/graph.hpp"
#include "gode/matrix.hpp"

namespace gode::kernels {

enum class UniformityKernel {
  Distance,         // exp(-2 ||x - y||)
  SquaredDistance,  // exp(-2 ||x - y||^2)
};

/// Ranked list entry.
struct Scored {
  float score;
  std::uint32_t item;
};

/// Configures the OpenMP thread count from GODE_THREADS (if set). Returns the
/// effective maximum thread count.
int configure_threads_from_env();

/// y = A * x, overwriting y (resized if needed). Row results are independent,
/// so serial and OpenMP versions agree bit for bit.
void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y);

/// y += alpha * x, elementwise over equal shapes.
void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y);

/// Log-mean pairwise kernel over rows x[0..n) (row-major n x d, n >= 2), self
/// pairs excluded. Writes d(value)/d(x) into grad (n x d). Coincident rows
/// contribute to the value and get a zero direction in the gradient.
/// Runs the serial symmetric loop when only one thread is available.
double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad);

/// Top-k items per user by dot product. `exclude` lists, per user in `users`,
/// the sorted item ids to skip. Ties break by ascending item id. Result rows
/// are in the order of `users`.
std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k);

namespace serial {

void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y);
void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y);
double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad);
std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k);

}  // namespace serial

namespace omp {

void spmm(const graph::Csr& a, const DenseMatrix& x, DenseMatrix& y);
void axpy(float alpha, const DenseMatrix& x, DenseMatrix& y);
double uniformity(std::span<const double> x, std::size_t n, std::size_t d, UniformityKernel kernel,
                  std::span<double> grad);
std::vector<std::vector<Scored>> top_k(const DenseMatrix& user_emb, const DenseMatrix& item_emb,
                                       std::span<const std::uint32_t> users,
                                       std::span<const std::vector<std::uint32_t>> exclude,
                                       std::size_t k);

}  // namespace omp

}  // namespace gode::kernels
