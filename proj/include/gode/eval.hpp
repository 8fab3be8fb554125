// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gode/datapipe.hpp"
#include "gode/embedding.hpp"
#include "gode/graph.hpp"

namespace gode::eval {

enum class Split { Valid, Test };

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // parallel to ks
  std::vector<double> ndcg;
  std::size_t n_users_evaluated = 0;
  double wall_clock_seconds = 0.0;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

/// Per-user metrics, rows ordered by ascending user id; columns parallel to ks.
struct PerUserMetrics {
  std::vector<std::uint32_t> users;
  std::vector<std::vector<double>> recall;
  std::vector<std::vector<double>> ndcg;
};

/// Precomputed masks and held-out targets for one split, so repeated
/// evaluation (per-epoch validation) does not rebuild them.
/// Valid: targets = valid items, mask = train items.
/// Test: targets = test items, mask = train + valid items.
class Evaluator {
 public:
  Evaluator(const datapipe::Dataset& ds, Split split);

  MetricsReport evaluate(const EmbeddingSet& emb, std::span<const std::size_t> ks) const;
  PerUserMetrics per_user(const EmbeddingSet& emb, std::span<const std::size_t> ks) const;

  std::size_t n_users() const noexcept { return users_.size(); }
  const std::vector<std::uint32_t>& users() const noexcept { return users_; }
  const std::vector<std::vector<std::uint32_t>>& masks() const noexcept { return masks_; }
  const std::vector<std::vector<std::uint32_t>>& targets() const noexcept { return targets_; }

 private:
  std::size_t n_users_total_ = 0;
  std::size_t n_items_total_ = 0;
  std::vector<std::uint32_t> users_;  // users with >= 1 target
  std::vector<std::vector<std::uint32_t>> masks_;  // sorted
  std::vector<std::vector<std::uint32_t>> targets_;  // sorted
};

MetricsReport evaluate(const datapipe::Dataset& ds, const EmbeddingSet& emb,
                       std::span<const std::size_t> ks, Split split = Split::Test);

/// Recall@K and NDCG@K of one ranked list against a sorted target set.
/// IDCG uses min(K, |targets|) ideal hits.
std::pair<double, double> recall_ndcg(std::span<const std::uint32_t> ranked,
                                      std::span<const std::uint32_t> sorted_targets, std::size_t k);

/// Mean squared distance between L2-normalized user and item rows over pairs.
double measure_alignment(const EmbeddingSet& emb, std::span<const datapipe::Edge> pairs);

/// Terms of the MF alignment-force chain for a connected pair (u, v):
///   chain[0] = |e_u - e_v|^2 + sum_{i in N(u)} |e_i - e_u|^2 + sum_{j in N(v)} |e_v - e_j|^2
///   chain[1] = chain[0] without the direct |e_u - e_v|^2 term
///   chain[2] = |sum_{i in N(u)} (e_i - e_u) + sum_{j in N(v)} (e_v - e_j)|^2
///   rhs      = |sum_{i in N(u)} e_i - sum_{j in N(v)} e_j|^2
/// N(u) are the items of user u and N(v) the users of item v.
/// `weighted` is the one-layer light-convolution force
///   |sum_i w_ui e_i - sum_j w_jv e_j|^2.
/// step_holds[k] records chain[k] >= next term (chain[k+1] or rhs);
/// `holds` records rhs <= chain[0].
struct AlignmentBound {
  std::array<double, 3> chain{};
  double rhs = 0.0;
  double weighted = 0.0;
  std::array<bool, 3> step_holds{};
  bool holds = false;
};

AlignmentBound verify_alignment_bound(const graph::BipartiteGraph& g, const EmbeddingSet& emb,
                                      datapipe::Edge pair);

std::string format_report(const MetricsReport& r);
std::string report_csv_header(std::span<const std::size_t> ks);
std::string report_csv_row(const MetricsReport& r);

}  // namespace gode::eval
