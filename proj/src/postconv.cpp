// SPDX-License-Identifier: Apache-2.0
#include "gode/postconv.hpp"

#include <cmath>

#include "gode/error.hpp"
#include "gode/kernels.hpp"

namespace gode::postconv {

std::string_view to_string(ConvMode m) noexcept {
  switch (m) {
    case ConvMode::Discrete: return "discrete";
    case ConvMode::DiscreteSelfLoop: return "discrete_sl";
    case ConvMode::Ode: return "ode";
  }
  return "?";
}

ConvMode parse_conv_mode(std::string_view s) {
  if (s == "discrete") return ConvMode::Discrete;
  if (s == "discrete_sl") return ConvMode::DiscreteSelfLoop;
  if (s == "ode") return ConvMode::Ode;
  throw Error(ErrorCode::InvalidArgument, "unknown convolution mode '" + std::string(s) + "'");
}

std::string_view to_string(Readout r) noexcept {
  return r == Readout::LayerSum ? "layer_sum" : "last_layer";
}

Readout parse_readout(std::string_view s) {
  if (s == "layer_sum") return Readout::LayerSum;
  if (s == "last_layer") return Readout::LastLayer;
  throw Error(ErrorCode::InvalidArgument, "unknown readout '" + std::string(s) + "'");
}

namespace {

void check_shapes(const graph::BipartiteGraph& g, const EmbeddingSet& e) {
  if (e.n_users() != g.n_users() || e.n_items() != g.n_items() ||
      e.users.cols() != e.items.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "embeddings " + std::to_string(e.n_users()) + "x" + std::to_string(e.n_items()) +
                    " vs graph " + std::to_string(g.n_users()) + "x" +
                    std::to_string(g.n_items()));
  }
}

bool all_finite(const DenseMatrix& m) {
  for (const float v : m.flat())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

EmbeddingSet conv_discrete(const graph::BipartiteGraph& g, const EmbeddingSet& e0, int K,
                           bool self_loop, Readout readout) {
  check_shapes(g, e0);
  if (K < 0) throw Error(ErrorCode::InvalidArgument, "layer count must be >= 0");

  DenseMatrix u = e0.users, v = e0.items;
  DenseMatrix u_next, v_next;
  EmbeddingSet out{e0.users, e0.items, Flavor::Convolved};
  for (int k = 1; k <= K; ++k) {
    kernels::spmm(g.user_items, v, u_next);
    kernels::spmm(g.item_users, u, v_next);
    if (self_loop) {
      kernels::axpy(1.0f, u, u_next);
      kernels::axpy(1.0f, v, v_next);
    }
    std::swap(u, u_next);
    std::swap(v, v_next);
    if (readout == Readout::LayerSum) {
      kernels::axpy(1.0f, u, out.users);
      kernels::axpy(1.0f, v, out.items);
    }
  }
  if (readout == Readout::LastLayer) {
    out.users = std::move(u);
    out.items = std::move(v);
  }
  return out;
}

EmbeddingSet ode_solve_euler(const graph::BipartiteGraph& g, const EmbeddingSet& e0, double t,
                             double dt) {
  check_shapes(g, e0);
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "t must be >= 0");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be > 0");

  EmbeddingSet h{e0.users, e0.items, Flavor::Convolved};
  if (t == 0.0) return h;

  // Snap t/dt to an integer when it is one up to rounding, so t = 3, dt = 0.1
  // takes 30 steps rather than 31 with a 1e-16 tail.
  const double ratio = t / dt;
  const double nearest = std::round(ratio);
  const auto n_steps = static_cast<std::size_t>(
      std::abs(ratio - nearest) < 1e-9 * std::max(1.0, ratio) ? nearest : std::ceil(ratio));

  DenseMatrix du, dv;
  double elapsed = 0.0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const double target = step == n_steps ? t : static_cast<double>(step) * dt;
    const auto h_step = static_cast<float>(target - elapsed);
    elapsed = target;
    // du = R v + u0, dv = R^T u + v0, evaluated at the current state.
    kernels::spmm(g.user_items, h.items, du);
    kernels::spmm(g.item_users, h.users, dv);
    kernels::axpy(1.0f, e0.users, du);
    kernels::axpy(1.0f, e0.items, dv);
    kernels::axpy(h_step, du, h.users);
    kernels::axpy(h_step, dv, h.items);
    if (!all_finite(h.users) || !all_finite(h.items)) {
      throw Error(ErrorCode::NonFinite, "non-finite state at Euler step " + std::to_string(step));
    }
  }
  return h;
}

EmbeddingSet convolve(const graph::BipartiteGraph& g, const EmbeddingSet& e0,
                      const ConvConfig& cfg) {
  switch (cfg.mode) {
    case ConvMode::Discrete: return conv_discrete(g, e0, cfg.K, false, cfg.readout);
    case ConvMode::DiscreteSelfLoop: return conv_discrete(g, e0, cfg.K, true, cfg.readout);
    case ConvMode::Ode: return ode_solve_euler(g, e0, cfg.t, cfg.dt);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown convolution mode");
}

namespace {

double normalized_distance(std::span<const float> a, std::span<const float> b) {
  double na = 0.0, nb = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    na += static_cast<double>(a[c]) * a[c];
    nb += static_cast<double>(b[c]) * b[c];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroNorm, "zero-norm embedding row");
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  double sq = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = a[c] / na - b[c] / nb;
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

}  // namespace

double embedding_discrepancy(const EmbeddingSet& e0, const EmbeddingSet& conv) {
  if (!e0.users.same_shape(conv.users) || !e0.items.same_shape(conv.items)) {
    throw Error(ErrorCode::DimensionMismatch, "discrepancy needs matching embedding shapes");
  }
  const std::size_t rows = e0.n_users() + e0.n_items();
  if (rows == 0) throw Error(ErrorCode::EmptyInput, "no embedding rows");
  double total = 0.0;
  for (std::size_t r = 0; r < e0.n_users(); ++r)
    total += normalized_distance(e0.users.row(r), conv.users.row(r));
  for (std::size_t r = 0; r < e0.n_items(); ++r)
    total += normalized_distance(e0.items.row(r), conv.items.row(r));
  return total / static_cast<double>(rows);
}

}  // namespace gode::postconv
