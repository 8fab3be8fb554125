// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gode/datapipe.hpp"
#include "gode/embedding.hpp"
#include "gode/graph.hpp"
#include "gode/kernels.hpp"

namespace gode::train {

using kernels::UniformityKernel;

#ifdef GODE_UNIFORMITY_SQUARED
inline constexpr UniformityKernel kDefaultUniformity = UniformityKernel::SquaredDistance;
#else
inline constexpr UniformityKernel kDefaultUniformity = UniformityKernel::Distance;
#endif

enum class TrainMode { Mf, Gcn };

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double gamma = 1.0;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 2024;
  TrainMode mode = TrainMode::Mf;
  int gcn_layers = 2;
  bool gcn_self_loop = false;
  UniformityKernel uniformity = kDefaultUniformity;
};

/// Throws InvalidArgument on gamma < 0, batch < 2, dim < 1 or negative layers.
void validate(const TrainConfig& cfg);

/// i.i.d. N(0, (0.1 / sqrt(d))^2) entries.
EmbeddingSet init_embeddings(std::size_t n_users, std::size_t n_items, std::size_t d,
                             std::uint64_t seed);

/// Mean squared distance between normalized user and item rows of each pair.
double align_loss(std::span<const datapipe::Edge> batch, const EmbeddingSet& emb);

/// (L_users + L_items) / 2 with L = log mean_{i != i'} kernel(u_i, u_i') over
/// normalized rows. Duplicated ids are kept as separate batch slots.
double uniform_loss(std::span<const datapipe::NodeId> users,
                    std::span<const datapipe::NodeId> items, const EmbeddingSet& emb,
                    UniformityKernel kernel = kDefaultUniformity);

/// Gradient restricted to the distinct rows a batch touches.
struct SparseGrad {
  std::vector<datapipe::NodeId> rows;  // first-appearance order
  std::vector<double> grad;  // rows.size() x d, row-major
};

struct LossGrad {
  double loss = 0.0;
  double align = 0.0;
  double uniform = 0.0;
  SparseGrad users;
  SparseGrad items;
};

/// align + gamma * uniform with exact gradients through the row normalization.
LossGrad loss_and_grad(std::span<const datapipe::Edge> batch, const EmbeddingSet& emb,
                       double gamma, UniformityKernel kernel = kDefaultUniformity);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  DenseMatrix m;
  DenseMatrix v;

  explicit AdamState(const DenseMatrix& like) : m(like.rows(), like.cols()), v(like.rows(), like.cols()) {}
};

/// Bias-corrected Adam on the listed rows only; `grads` row k belongs to
/// params row rows[k]. `step` is the 1-based global step count.
void adam_step(DenseMatrix& params, std::span<const datapipe::NodeId> rows,
               std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               std::int64_t step);

/// Tracks the best metric; stops after `patience` consecutive non-improving epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when `metric` is a new best.
  bool update(double metric);
  bool should_stop() const noexcept { return patience_ > 0 && since_best_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -1.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double align = 0.0;
  double uniform = 0.0;
  double valid_ndcg20 = 0.0;
  double seconds = 0.0;  // training phase only, validation excluded
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  double total_seconds() const;
  double mean_epoch_seconds() const;
  std::string to_csv(bool include_seconds = true) const;
};

struct FitResult {
  EmbeddingSet embeddings;  // base (unconvolved) embeddings of the best epoch
  TrainingLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on ds.train in shuffled batches; validates NDCG@20 on ds.valid
/// after each epoch (on the base embeddings in Mf mode, on the K-layer
/// convolution in Gcn mode) and keeps the best epoch.
FitResult fit(const datapipe::Dataset& ds, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Runs `epochs` training epochs without validation and returns per-epoch
/// training seconds. Used for timing comparisons.
std::vector<double> time_epochs(const datapipe::Dataset& ds, const TrainConfig& cfg,
                                std::size_t epochs);

/// Convolution used inside Gcn-mode training; identical to
/// postconv::conv_discrete with the layer-sum readout.
EmbeddingSet gcn_forward(const graph::BipartiteGraph& g, const EmbeddingSet& emb, int K,
                         bool self_loop);

}  // namespace gode::train
