// SPDX-License-Identifier: Apache-2.0
#pragma once

// Comparison experiments built from the trainer, the post-training
// convolutions and the evaluator.

#include <string>
#include <vector>

#include "gode/eval.hpp"
#include "gode/postconv.hpp"
#include "gode/trainer.hpp"

namespace gode::eval {

struct VariantRow {
  std::string name;
  MetricsReport metrics;
};

/// MF-init, MF-conv, LightGCN-init, LightGCN-conv: both training paradigms,
/// each scored before and after a `layers`-deep convolution without self-loop.
struct VariantStudy {
  std::vector<VariantRow> rows;
  EmbeddingSet mf;
  EmbeddingSet gcn;
  train::TrainingLog mf_log;
  train::TrainingLog gcn_log;

  const VariantRow& row(const std::string& name) const;
  /// Raw metrics followed by percentages of the LightGCN-conv row.
  std::string to_csv() const;
};

VariantStudy run_variant_study(const datapipe::Dataset& ds, const train::TrainConfig& base,
                               std::span<const std::size_t> ks, int layers = 2,
                               Split split = Split::Test);

struct SweepRow {
  double value = 0.0;
  MetricsReport metrics;
  double discrepancy = 0.0;
};

/// Post-training sweep over a grid of depths (discrete modes) or horizons
/// (ode mode) reusing one set of trained embeddings. For ode mode each value
/// is t; otherwise it is rounded to the layer count K.
std::vector<SweepRow> sweep_convolution(const datapipe::Dataset& ds, const EmbeddingSet& base,
                                        postconv::ConvConfig cfg, std::span<const double> grid,
                                        std::span<const std::size_t> ks, Split split);

/// Retrains once per gamma, then scores the post-training convolution `conv`.
std::vector<SweepRow> sweep_gamma(const datapipe::Dataset& ds, train::TrainConfig cfg,
                                  const postconv::ConvConfig& conv, std::span<const double> grid,
                                  std::span<const std::size_t> ks, Split split);

std::string sweep_csv(const std::string& grid_name, const std::vector<SweepRow>& rows);

/// Picks the grid value with the best validation NDCG@20 (ties: smaller value).
double best_by_validation(const datapipe::Dataset& ds, const EmbeddingSet& base,
                          postconv::ConvConfig cfg, std::span<const double> grid);

}  // namespace gode::eval
