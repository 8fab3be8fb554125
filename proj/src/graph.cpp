// SPDX-License-Identifier: Apache-2.0
#include "gode/graph.hpp"

#include <algorithm>
#include <cmath>

#include "gode/error.hpp"
#include "gode/kernels.hpp"

namespace gode::graph {

namespace {

Csr transpose(const Csr& a) {
  Csr t;
  t.n_rows = a.n_cols;
  t.n_cols = a.n_rows;
  t.row_ptr.assign(t.n_rows + 1, 0);
  for (const auto c : a.col) ++t.row_ptr[c + 1];
  for (std::size_t r = 0; r < t.n_rows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
  t.col.resize(a.nnz());
  t.val.resize(a.nnz());
  std::vector<std::uint64_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  // Rows of `a` are visited in order, so columns of `t` come out sorted.
  for (std::size_t r = 0; r < a.n_rows; ++r) {
    for (auto p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
      const auto dst = cursor[a.col[p]]++;
      t.col[dst] = static_cast<std::uint32_t>(r);
      t.val[dst] = a.val[p];
    }
  }
  return t;
}

}  // namespace

BipartiteGraph build_graph(std::size_t n_users, std::size_t n_items,
                           const std::vector<datapipe::Edge>& edges) {
  if (edges.empty()) throw Error(ErrorCode::EmptyInput, "graph needs at least one train edge");
  BipartiteGraph g;
  g.user_degree.assign(n_users, 0);
  g.item_degree.assign(n_items, 0);
  for (const auto& e : edges) {
    if (e.user >= n_users || e.item >= n_items) {
      throw Error(ErrorCode::DimensionMismatch, "edge endpoint outside node range");
    }
    ++g.user_degree[e.user];
    ++g.item_degree[e.item];
  }
  for (std::size_t u = 0; u < n_users; ++u)
    if (g.user_degree[u] == 0)
      throw Error(ErrorCode::IsolatedNode, "user " + std::to_string(u) + " has no train edges");
  for (std::size_t i = 0; i < n_items; ++i)
    if (g.item_degree[i] == 0)
      throw Error(ErrorCode::IsolatedNode, "item " + std::to_string(i) + " has no train edges");

  std::vector<datapipe::Edge> sorted = edges;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::InvalidArgument, "duplicate edge in train split");
  }

  Csr& r = g.user_items;
  r.n_rows = n_users;
  r.n_cols = n_items;
  r.row_ptr.assign(n_users + 1, 0);
  r.col.reserve(sorted.size());
  r.val.reserve(sorted.size());
  for (const auto& e : sorted) {
    ++r.row_ptr[e.user + 1];
    r.col.push_back(e.item);
    const double w = 1.0 / std::sqrt(static_cast<double>(g.user_degree[e.user]) *
                                     static_cast<double>(g.item_degree[e.item]));
    r.val.push_back(static_cast<float>(w));
  }
  for (std::size_t u = 0; u < n_users; ++u) r.row_ptr[u + 1] += r.row_ptr[u];
  g.item_users = transpose(r);
  return g;
}

BipartiteGraph build_graph(const datapipe::Dataset& ds) {
  return build_graph(ds.n_users, ds.n_items, ds.train);
}

DenseMatrix agg_items_to_users(const BipartiteGraph& g, const DenseMatrix& items) {
  if (items.rows() != g.n_items()) {
    throw Error(ErrorCode::DimensionMismatch, "item matrix has " + std::to_string(items.rows()) +
                                                  " rows, graph has " + std::to_string(g.n_items()));
  }
  DenseMatrix out;
  kernels::spmm(g.user_items, items, out);
  return out;
}

DenseMatrix agg_users_to_items(const BipartiteGraph& g, const DenseMatrix& users) {
  if (users.rows() != g.n_users()) {
    throw Error(ErrorCode::DimensionMismatch, "user matrix has " + std::to_string(users.rows()) +
                                                  " rows, graph has " + std::to_string(g.n_users()));
  }
  DenseMatrix out;
  kernels::spmm(g.item_users, users, out);
  return out;
}

}  // namespace gode::graph
