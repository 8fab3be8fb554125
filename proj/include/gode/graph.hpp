// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "gode/datapipe.hpp"
#include "gode/matrix.hpp"

namespace gode::graph {

/// Compressed sparse rows with float weights; column indices ascend per row.
struct Csr {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::uint64_t> row_ptr;  // n_rows + 1
  std::vector<std::uint32_t> col;
  std::vector<float> val;

  std::size_t nnz() const noexcept { return col.size(); }
};

/// User-item bipartite adjacency with symmetric weights 1/sqrt(deg_u * deg_i).
/// `user_items` is R (users x items) and `item_users` its exact transpose.
/// Self-loops are not stored; the convolution operators add them.
struct BipartiteGraph {
  Csr user_items;
  Csr item_users;
  std::vector<std::uint32_t> user_degree;
  std::vector<std::uint32_t> item_degree;

  std::size_t n_users() const noexcept { return user_items.n_rows; }
  std::size_t n_items() const noexcept { return item_users.n_rows; }
  std::size_t n_nodes() const noexcept { return n_users() + n_items(); }
  std::size_t n_edges() const noexcept { return user_items.nnz(); }
};

BipartiteGraph build_graph(const datapipe::Dataset& ds);

/// Builds directly from an edge list; duplicate edges are rejected.
BipartiteGraph build_graph(std::size_t n_users, std::size_t n_items,
                           const std::vector<datapipe::Edge>& edges);

/// out[u] = sum_{i in N(u)} w_ui * items[i]
DenseMatrix agg_items_to_users(const BipartiteGraph& g, const DenseMatrix& items);
/// out[i] = sum_{u in N(i)} w_ui * users[u]
DenseMatrix agg_users_to_items(const BipartiteGraph& g, const DenseMatrix& users);

}  // namespace gode::graph
