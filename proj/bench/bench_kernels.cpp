// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP timings for the hot kernels on a synthetic graph.
//
//   gode_bench_kernels [--users N] [--items N] [--degree D] [--dim d] [--reps R]

#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gode/datapipe.hpp"
#include "gode/graph.hpp"
#include "gode/kernels.hpp"
#include "gode/random.hpp"

namespace {

double seconds_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / reps;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-12s serial %10.3f ms   openmp %10.3f ms   speedup %5.2fx\n", name, 1e3 * serial,
              1e3 * parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t users = 20000, items = 10000, dim = 64, batch = 256;
  double degree = 40.0;
  int reps = 5;
  CLI::App app{"kernel benchmark"};
  app.add_option("--users", users);
  app.add_option("--items", items);
  app.add_option("--degree", degree);
  app.add_option("--dim", dim);
  app.add_option("--batch", batch);
  app.add_option("--reps", reps);
  CLI11_PARSE(app, argc, argv);

  const int threads = gode::kernels::configure_threads_from_env();
  std::printf("threads: %d\n", threads);

  gode::Rng rng(1);
  std::vector<gode::datapipe::Edge> edges;
  std::vector<char> seen;
  for (std::uint32_t u = 0; u < users; ++u) {
    const auto n = 1 + rng.index(static_cast<std::uint64_t>(2 * degree));
    for (std::uint64_t k = 0; k < n; ++k)
      edges.push_back({u, static_cast<std::uint32_t>(rng.index(items))});
  }
  for (std::uint32_t i = 0; i < items; ++i) edges.push_back({static_cast<std::uint32_t>(rng.index(users)), i});
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const auto g = gode::graph::build_graph(users, items, edges);
  std::printf("graph: %zu users, %zu items, %zu edges, d=%zu\n", users, items, g.n_edges(), dim);

  gode::DenseMatrix x(items, dim), y;
  for (auto& v : x.flat()) v = static_cast<float>(rng.normal());
  report("spmm",
         seconds_of([&] { gode::kernels::serial::spmm(g.user_items, x, y); }, reps),
         seconds_of([&] { gode::kernels::omp::spmm(g.user_items, x, y); }, reps));

  std::vector<double> rows(batch * dim), grad(batch * dim);
  for (auto& v : rows) v = rng.normal();
  using gode::kernels::UniformityKernel;
  report("uniformity",
         seconds_of([&] { gode::kernels::serial::uniformity(rows, batch, dim, UniformityKernel::Distance, grad); }, reps),
         seconds_of([&] { gode::kernels::omp::uniformity(rows, batch, dim, UniformityKernel::Distance, grad); }, reps));

  gode::DenseMatrix ue(users, dim), ie(items, dim);
  for (auto& v : ue.flat()) v = static_cast<float>(rng.normal());
  for (auto& v : ie.flat()) v = static_cast<float>(rng.normal());
  const std::size_t n_eval = std::min<std::size_t>(users, 2000);
  std::vector<std::uint32_t> eval_users(n_eval);
  std::iota(eval_users.begin(), eval_users.end(), 0u);
  std::vector<std::vector<std::uint32_t>> masks(n_eval);
  for (std::size_t q = 0; q < n_eval; ++q)
    for (auto p = g.user_items.row_ptr[q]; p < g.user_items.row_ptr[q + 1]; ++p)
      masks[q].push_back(g.user_items.col[p]);
  report("top_k",
         seconds_of([&] { gode::kernels::serial::top_k(ue, ie, eval_users, masks, 50); }, reps),
         seconds_of([&] { gode::kernels::omp::top_k(ue, ie, eval_users, masks, 50); }, reps));
  return 0;
}
