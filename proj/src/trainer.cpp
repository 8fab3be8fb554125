// SPDX-License-Identifier: Apache-2.0
#include "gode/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "gode/error.hpp"
#include "gode/eval.hpp"
#include "gode/postconv.hpp"
#include "gode/random.hpp"

namespace gode::train {

using datapipe::Edge;
using datapipe::NodeId;

void validate(const TrainConfig& cfg) {
  if (!(cfg.gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be >= 0");
  if (cfg.batch_size < 2) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 2");
  if (cfg.dim < 1) throw Error(ErrorCode::InvalidArgument, "embedding dim must be >= 1");
  if (!(cfg.lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be > 0");
  if (cfg.gcn_layers < 0) throw Error(ErrorCode::InvalidArgument, "layer count must be >= 0");
}

EmbeddingSet init_embeddings(std::size_t n_users, std::size_t n_items, std::size_t d,
                             std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || d == 0) {
    throw Error(ErrorCode::InvalidArgument, "embedding tables need positive sizes");
  }
  Rng rng(seed);
  const double std_dev = 0.1 / std::sqrt(static_cast<double>(d));
  EmbeddingSet e{DenseMatrix(n_users, d), DenseMatrix(n_items, d), Flavor::Initial};
  for (auto& x : e.users.flat()) x = static_cast<float>(std_dev * rng.normal());
  for (auto& x : e.items.flat()) x = static_cast<float>(std_dev * rng.normal());
  return e;
}

namespace {

// Normalized copies of a list of rows (one slot per entry, duplicates kept).
struct NormalizedSlots {
  std::vector<double> x;  // n x d
  std::vector<double> norm;
};

NormalizedSlots normalize_rows(const DenseMatrix& table, std::span<const NodeId> ids,
                               const char* side) {
  const std::size_t d = table.cols();
  NormalizedSlots s{std::vector<double>(ids.size() * d), std::vector<double>(ids.size())};
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= table.rows()) {
      throw Error(ErrorCode::DimensionMismatch,
                  std::string(side) + " id " + std::to_string(ids[k]) + " out of range");
    }
    const auto row = table.row(ids[k]);
    double sq = 0.0;
    for (const float v : row) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0)) {
      throw Error(ErrorCode::ZeroNorm, std::string(side) + " row " + std::to_string(ids[k]));
    }
    const double n = std::sqrt(sq);
    s.norm[k] = n;
    for (std::size_t c = 0; c < d; ++c) s.x[k * d + c] = row[c] / n;
  }
  return s;
}

void split_pairs(std::span<const Edge> batch, std::vector<NodeId>& users,
                 std::vector<NodeId>& items) {
  users.resize(batch.size());
  items.resize(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    users[k] = batch[k].user;
    items[k] = batch[k].item;
  }
}

// Sums slot gradients (w.r.t. normalized vectors) per distinct row, then maps
// them through d(x/|x|)/dx = (I - x_hat x_hat^T) / |x|.
SparseGrad collapse(std::span<const NodeId> ids, const NormalizedSlots& slots,
                    std::span<const double> slot_grad, std::size_t d, const char* side) {
  SparseGrad out;
  std::unordered_map<NodeId, std::size_t> index;
  std::vector<std::size_t> first_slot;
  std::vector<std::size_t> slot_row(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    auto [it, inserted] = index.try_emplace(ids[k], out.rows.size());
    if (inserted) {
      out.rows.push_back(ids[k]);
      first_slot.push_back(k);
    }
    slot_row[k] = it->second;
  }
  std::vector<double> g_hat(out.rows.size() * d, 0.0);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    double* dst = g_hat.data() + slot_row[k] * d;
    const double* src = slot_grad.data() + k * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  out.grad.assign(out.rows.size() * d, 0.0);
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const std::size_t k = first_slot[r];
    const double* x_hat = slots.x.data() + k * d;
    const double* g = g_hat.data() + r * d;
    double proj = 0.0;
    for (std::size_t c = 0; c < d; ++c) proj += g[c] * x_hat[c];
    double* dst = out.grad.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      dst[c] = (g[c] - proj * x_hat[c]) / slots.norm[k];
      if (!std::isfinite(dst[c])) {
        throw Error(ErrorCode::NonFinite,
                    std::string(side) + " gradient at row " + std::to_string(out.rows[r]));
      }
    }
  }
  return out;
}

}  // namespace

double align_loss(std::span<const Edge> batch, const EmbeddingSet& emb) {
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
  std::vector<NodeId> users, items;
  split_pairs(batch, users, items);
  const auto u = normalize_rows(emb.users, users, "user");
  const auto v = normalize_rows(emb.items, items, "item");
  double total = 0.0;
  for (std::size_t k = 0; k < u.x.size(); ++k) total += (u.x[k] - v.x[k]) * (u.x[k] - v.x[k]);
  return total / static_cast<double>(batch.size());
}

double uniform_loss(std::span<const NodeId> users, std::span<const NodeId> items,
                    const EmbeddingSet& emb, UniformityKernel kernel) {
  if (users.size() < 2 || items.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "uniformity needs at least 2 users and 2 items");
  }
  const std::size_t d = emb.dim();
  const auto u = normalize_rows(emb.users, users, "user");
  const auto v = normalize_rows(emb.items, items, "item");
  std::vector<double> scratch(std::max(users.size(), items.size()) * d);
  const double lu = kernels::uniformity(u.x, users.size(), d, kernel,
                                        std::span(scratch).first(users.size() * d));
  const double lv = kernels::uniformity(v.x, items.size(), d, kernel,
                                        std::span(scratch).first(items.size() * d));
  return 0.5 * (lu + lv);
}

LossGrad loss_and_grad(std::span<const Edge> batch, const EmbeddingSet& emb, double gamma,
                       UniformityKernel kernel) {
  if (batch.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "batch needs at least 2 pairs for uniformity");
  }
  if (emb.users.cols() != emb.items.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "user/item dimensions differ");
  }
  const std::size_t n = batch.size();
  const std::size_t d = emb.dim();
  std::vector<NodeId> users, items;
  split_pairs(batch, users, items);
  const auto u = normalize_rows(emb.users, users, "user");
  const auto v = normalize_rows(emb.items, items, "item");

  LossGrad out;
  std::vector<double> gu(n * d, 0.0), gv(n * d, 0.0);

  const double inv_n = 1.0 / static_cast<double>(n);
  double align = 0.0;
  for (std::size_t k = 0; k < n * d; ++k) {
    const double diff = u.x[k] - v.x[k];
    align += diff * diff;
    gu[k] = 2.0 * inv_n * diff;
    gv[k] = -2.0 * inv_n * diff;
  }
  out.align = align * inv_n;

  std::vector<double> ku(n * d), kv(n * d);
  const double lu = kernels::uniformity(u.x, n, d, kernel, ku);
  const double lv = kernels::uniformity(v.x, n, d, kernel, kv);
  out.uniform = 0.5 * (lu + lv);
  const double w = 0.5 * gamma;
  for (std::size_t k = 0; k < n * d; ++k) {
    gu[k] += w * ku[k];
    gv[k] += w * kv[k];
  }
  out.loss = out.align + gamma * out.uniform;
  out.users = collapse(users, u, gu, d, "user");
  out.items = collapse(items, v, gv, d, "item");
  return out;
}

void adam_step(DenseMatrix& params, std::span<const NodeId> rows, std::span<const double> grads,
               AdamState& state, const AdamConfig& cfg, std::int64_t step) {
  const std::size_t d = params.cols();
  if (grads.size() != rows.size() * d || !state.m.same_shape(params)) {
    throw Error(ErrorCode::DimensionMismatch, "adam: gradient/state shape mismatch");
  }
  if (step < 1) throw Error(ErrorCode::InvalidArgument, "adam step count is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const auto n_rows = static_cast<std::int64_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n_rows; ++k) {
    const auto r = rows[static_cast<std::size_t>(k)];
    float* p = params.data() + static_cast<std::size_t>(r) * d;
    float* m = state.m.data() + static_cast<std::size_t>(r) * d;
    float* v = state.v.data() + static_cast<std::size_t>(r) * d;
    const double* g = grads.data() + static_cast<std::size_t>(k) * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double mc = cfg.beta1 * m[c] + (1.0 - cfg.beta1) * g[c];
      const double vc = cfg.beta2 * v[c] + (1.0 - cfg.beta2) * g[c] * g[c];
      m[c] = static_cast<float>(mc);
      v[c] = static_cast<float>(vc);
      const double m_hat = mc / bc1;
      const double v_hat = vc / bc2;
      p[c] = static_cast<float>(p[c] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

bool EarlyStopper::update(double metric) {
  ++epoch_;
  if (epoch_ == 1 || metric > best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double TrainingLog::total_seconds() const {
  double s = 0.0;
  for (const auto& e : epochs) s += e.seconds;
  return s;
}

double TrainingLog::mean_epoch_seconds() const {
  return epochs.empty() ? 0.0 : total_seconds() / static_cast<double>(epochs.size());
}

std::string TrainingLog::to_csv(bool include_seconds) const {
  std::ostringstream os;
  os << "epoch,loss,align,uniform,valid_ndcg20" << (include_seconds ? ",seconds" : "") << '\n';
  os.precision(8);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.loss << ',' << e.align << ',' << e.uniform << ',' << e.valid_ndcg20;
    if (include_seconds) os << ',' << e.seconds;
    os << '\n';
  }
  return os.str();
}

EmbeddingSet gcn_forward(const graph::BipartiteGraph& g, const EmbeddingSet& emb, int K,
                         bool self_loop) {
  return postconv::conv_discrete(g, emb, K, self_loop, postconv::Readout::LayerSum);
}

namespace {

struct EpochStats {
  double loss = 0.0;
  double align = 0.0;
  double uniform = 0.0;
  double seconds = 0.0;
};

// One training run's mutable state.
class Session {
 public:
  Session(const datapipe::Dataset& ds, const TrainConfig& cfg)
      : ds_(ds),
        cfg_(cfg),
        emb_(init_embeddings(ds.n_users, ds.n_items, cfg.dim, cfg.seed)),
        adam_users_(emb_.users),
        adam_items_(emb_.items),
        rng_(cfg.seed ^ 0x5bd1e995ULL),
        order_(ds.train.size()) {
    validate(cfg);
    if (ds.train.size() < 2) throw Error(ErrorCode::EmptyInput, "need at least 2 train pairs");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (cfg.mode == TrainMode::Gcn) graph_ = graph::build_graph(ds);
    all_users_.resize(ds.n_users);
    all_items_.resize(ds.n_items);
    std::iota(all_users_.begin(), all_users_.end(), NodeId{0});
    std::iota(all_items_.begin(), all_items_.end(), NodeId{0});
  }

  EpochStats run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    rng_.shuffle(std::span<std::size_t>(order_));
    EpochStats stats;
    std::size_t n_batches = 0;
    std::vector<Edge> batch;
    const std::size_t n = order_.size();
    for (std::size_t begin = 0; begin < n;) {
      std::size_t end = std::min(n, begin + cfg_.batch_size);
      if (n - end == 1) end = n;  // a trailing single pair joins this batch
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(ds_.train[order_[k]]);
      const auto lg = step(batch);
      stats.loss += lg.loss;
      stats.align += lg.align;
      stats.uniform += lg.uniform;
      ++n_batches;
      begin = end;
    }
    const auto nb = static_cast<double>(n_batches);
    stats.loss /= nb;
    stats.align /= nb;
    stats.uniform /= nb;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return stats;
  }

  /// Embeddings scored during validation.
  EmbeddingSet scored() const {
    if (cfg_.mode == TrainMode::Gcn) {
      return gcn_forward(*graph_, emb_, cfg_.gcn_layers, cfg_.gcn_self_loop);
    }
    return emb_;
  }

  const EmbeddingSet& embeddings() const noexcept { return emb_; }

 private:
  LossGrad step(std::span<const Edge> batch) {
    const AdamConfig adam{cfg_.lr};
    ++step_count_;
    if (cfg_.mode == TrainMode::Mf) {
      auto lg = loss_and_grad(batch, emb_, cfg_.gamma, cfg_.uniformity);
      adam_step(emb_.users, lg.users.rows, lg.users.grad, adam_users_, adam, step_count_);
      adam_step(emb_.items, lg.items.rows, lg.items.grad, adam_items_, adam, step_count_);
      return lg;
    }
    // Loss on convolved embeddings; the layer-sum operator is symmetric, so
    // its adjoint is the same convolution applied to the output gradient.
    const auto conv = gcn_forward(*graph_, emb_, cfg_.gcn_layers, cfg_.gcn_self_loop);
    auto lg = loss_and_grad(batch, conv, cfg_.gamma, cfg_.uniformity);
    EmbeddingSet g_out{DenseMatrix(ds_.n_users, cfg_.dim), DenseMatrix(ds_.n_items, cfg_.dim),
                       Flavor::Convolved};
    scatter(lg.users, g_out.users);
    scatter(lg.items, g_out.items);
    const auto g_in = gcn_forward(*graph_, g_out, cfg_.gcn_layers, cfg_.gcn_self_loop);
    const std::vector<double> gu(g_in.users.flat().begin(), g_in.users.flat().end());
    const std::vector<double> gi(g_in.items.flat().begin(), g_in.items.flat().end());
    adam_step(emb_.users, all_users_, gu, adam_users_, adam, step_count_);
    adam_step(emb_.items, all_items_, gi, adam_items_, adam, step_count_);
    return lg;
  }

  static void scatter(const SparseGrad& g, DenseMatrix& dense) {
    const std::size_t d = dense.cols();
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      auto row = dense.row(g.rows[r]);
      for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(g.grad[r * d + c]);
    }
  }

  const datapipe::Dataset& ds_;
  TrainConfig cfg_;
  EmbeddingSet emb_;
  AdamState adam_users_;
  AdamState adam_items_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::optional<graph::BipartiteGraph> graph_;
  std::vector<NodeId> all_users_;
  std::vector<NodeId> all_items_;
  std::int64_t step_count_ = 0;
};

}  // namespace

FitResult fit(const datapipe::Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (cfg.max_epochs == 0) throw Error(ErrorCode::NoTraining, "max_epochs is 0");
  Session session(ds, cfg);
  std::optional<eval::Evaluator> validator;
  if (!ds.valid.empty()) validator.emplace(ds, eval::Split::Valid);
  const std::size_t k20[] = {20};

  FitResult result;
  EarlyStopper stopper(cfg.patience);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto stats = session.run_epoch();
    EpochRecord rec{epoch, stats.loss, stats.align, stats.uniform, 0.0, stats.seconds};
    rec.valid_ndcg20 = validator ? validator->evaluate(session.scored(), k20).ndcg[0] : 0.0;
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    // Without a validation split every epoch counts as an improvement.
    if (stopper.update(validator ? rec.valid_ndcg20 : static_cast<double>(epoch))) {
      result.embeddings = session.embeddings();
    }
    if (stopper.should_stop()) break;
  }
  result.log.best_epoch = stopper.best_epoch();
  result.embeddings.flavor = Flavor::Initial;
  return result;
}

std::vector<double> time_epochs(const datapipe::Dataset& ds, const TrainConfig& cfg,
                                std::size_t epochs) {
  Session session(ds, cfg);
  std::vector<double> seconds;
  for (std::size_t e = 0; e < epochs; ++e) seconds.push_back(session.run_epoch().seconds);
  return seconds;
}

}  // namespace gode::train
