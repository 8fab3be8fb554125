// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include "gode/embedding.hpp"
#include "gode/graph.hpp"

namespace gode::postconv {

enum class ConvMode { Discrete, DiscreteSelfLoop, Ode };
enum class Readout { LayerSum, LastLayer };

struct ConvConfig {
  ConvMode mode = ConvMode::Ode;
  int K = 2;
  double t = 1.0;
  double dt = 0.1;
  Readout readout = Readout::LayerSum;
};

std::string_view to_string(ConvMode m) noexcept;
ConvMode parse_conv_mode(std::string_view s);
std::string_view to_string(Readout r) noexcept;
Readout parse_readout(std::string_view s);

/// K rounds of symmetric-normalized propagation over the bipartite graph.
/// With self_loop each layer is h_k = (I + Abar) h_{k-1}; without it
/// h_k = Abar h_{k-1}. LayerSum returns sum_{k=0..K} h_k, LastLayer h_K.
EmbeddingSet conv_discrete(const graph::BipartiteGraph& g, const EmbeddingSet& e0, int K,
                           bool self_loop, Readout readout = Readout::LayerSum);

/// Forward Euler on dh/dt = Abar h + h0 from h(0) = h0 up to exactly t. The
/// last step is shortened to land on t. With dt = 1 and integer t this equals
/// the self-loop layer sum of depth t.
EmbeddingSet ode_solve_euler(const graph::BipartiteGraph& g, const EmbeddingSet& e0, double t,
                             double dt);

EmbeddingSet convolve(const graph::BipartiteGraph& g, const EmbeddingSet& e0,
                      const ConvConfig& cfg);

/// Mean over all user and item rows of || normalize(a_r) - normalize(b_r) ||.
double embedding_discrepancy(const EmbeddingSet& e0, const EmbeddingSet& conv);

}  // namespace gode::postconv
