// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the library's kernels; dense math goes through Eigen or plain loops.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "gode/datapipe.hpp"
#include "gode/embedding.hpp"
#include "gode/random.hpp"

namespace oracle {

using Edge = gode::datapipe::Edge;

/// Random bipartite edge list where every user and item has degree >= 1.
inline std::vector<Edge> random_edges(gode::Rng& rng, std::size_t n_users, std::size_t n_items,
                                      std::size_t extra) {
  std::set<Edge> edges;
  for (std::uint32_t u = 0; u < n_users; ++u)
    edges.insert({u, static_cast<std::uint32_t>(rng.index(n_items))});
  for (std::uint32_t i = 0; i < n_items; ++i)
    edges.insert({static_cast<std::uint32_t>(rng.index(n_users)), i});
  for (std::size_t k = 0; k < extra; ++k)
    edges.insert({static_cast<std::uint32_t>(rng.index(n_users)),
                  static_cast<std::uint32_t>(rng.index(n_items))});
  return {edges.begin(), edges.end()};
}

/// Stacked symmetric-normalized adjacency D^-1/2 [[0, R], [R^T, 0]] D^-1/2.
inline Eigen::MatrixXd normalized_adjacency(std::size_t n_users, std::size_t n_items,
                                            const std::vector<Edge>& edges) {
  const auto n = static_cast<Eigen::Index>(n_users + n_items);
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : edges) {
    const auto u = static_cast<Eigen::Index>(e.user);
    const auto i = static_cast<Eigen::Index>(n_users + e.item);
    adj(u, i) = 1.0;
    adj(i, u) = 1.0;
  }
  const Eigen::VectorXd deg = adj.rowwise().sum();
  Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  return inv_sqrt.asDiagonal() * adj * inv_sqrt.asDiagonal();
}

inline Eigen::MatrixXd stack(const gode::EmbeddingSet& e) {
  const auto nu = static_cast<Eigen::Index>(e.n_users());
  const auto ni = static_cast<Eigen::Index>(e.n_items());
  const auto d = static_cast<Eigen::Index>(e.dim());
  Eigen::MatrixXd h(nu + ni, d);
  for (Eigen::Index r = 0; r < nu; ++r)
    for (Eigen::Index c = 0; c < d; ++c) h(r, c) = e.users(r, c);
  for (Eigen::Index r = 0; r < ni; ++r)
    for (Eigen::Index c = 0; c < d; ++c) h(nu + r, c) = e.items(r, c);
  return h;
}

inline double max_abs_diff(const Eigen::MatrixXd& h, const gode::EmbeddingSet& e) {
  return (h - stack(e)).cwiseAbs().maxCoeff();
}

/// sum_{k=0..K} M^k h0 with M = Abar (+ I when self_loop).
inline Eigen::MatrixXd layer_sum(const Eigen::MatrixXd& abar, const Eigen::MatrixXd& h0, int K,
                                 bool self_loop) {
  Eigen::MatrixXd m = abar;
  if (self_loop) m += Eigen::MatrixXd::Identity(abar.rows(), abar.cols());
  Eigen::MatrixXd layer = h0, total = h0;
  for (int k = 1; k <= K; ++k) {
    layer = m * layer;
    total += layer;
  }
  return total;
}

/// Applies f to the eigenvalues of a symmetric matrix: V f(L) V^T x.
template <typename F>
Eigen::MatrixXd spectral_apply(const Eigen::MatrixXd& sym, const Eigen::MatrixXd& x, F f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd fl(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < fl.size(); ++k) fl(k) = f(es.eigenvalues()(k));
  return es.eigenvectors() * fl.asDiagonal() * es.eigenvectors().transpose() * x;
}

/// Closed form of dh/dt = Abar h + h0, h(0) = h0: per eigenvalue l,
/// e^{lt} + (e^{lt} - 1) / l (limit 1 + t at l = 0).
inline Eigen::MatrixXd taylor_ode_exact(const Eigen::MatrixXd& abar, const Eigen::MatrixXd& h0,
                                        double t) {
  return spectral_apply(abar, h0, [t](double l) {
    if (std::abs(l) < 1e-12) return 1.0 + t;
    return std::exp(l * t) + std::expm1(l * t) / l;
  });
}

/// Closed form of dh/dt = ln(A) h + (A - ln A) h0, h(0) = h0 with A = I + Abar:
/// per eigenvalue mu of A, mu^t + (mu - ln mu)(mu^t - 1) / ln mu. The limits
/// are 1 + t at mu = 1 and 1 at mu = 0 (t > 0).
inline Eigen::MatrixXd log_ode_exact(const Eigen::MatrixXd& abar, const Eigen::MatrixXd& h0,
                                     double t) {
  return spectral_apply(abar, h0, [t](double l) {
    const double mu = 1.0 + l;
    if (mu <= 1e-12) return t > 0.0 ? 1.0 : 1.0;
    const double lg = std::log(mu);
    if (std::abs(lg) < 1e-12) return 1.0 + t;
    const double p = std::pow(mu, t);
    return p + (mu - lg) * (p - 1.0) / lg;
  });
}

/// Two nodes joined by one edge, u(0) = 1, v(0) = 0 under dh/dt = Abar h + h0.
/// s = u + v obeys s' = s + 1 and q = u - v obeys q' = 1 - q, so s = 2e^t - 1
/// and q stays 1.
inline std::pair<double, double> two_node(double t) {
  return {std::exp(t), std::exp(t) - 1.0};
}

// -- scalar losses in double, straight from the formulas ---------------------

using Rows = std::vector<std::vector<double>>;

inline std::vector<double> unit(const std::vector<double>& x) {
  double n = 0.0;
  for (const double v : x) n += v * v;
  n = std::sqrt(n);
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c] / n;
  return out;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

inline double align(const Rows& users, const Rows& items, const std::vector<Edge>& batch) {
  double s = 0.0;
  for (const auto& e : batch) {
    const double d = dist(unit(users[e.user]), unit(items[e.item]));
    s += d * d;
  }
  return s / static_cast<double>(batch.size());
}

inline double uniform_side(const std::vector<std::vector<double>>& rows, bool squared) {
  const std::size_t n = rows.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = dist(unit(rows[i]), unit(rows[j]));
      s += std::exp(-2.0 * (squared ? d * d : d));
    }
  return std::log(s / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

inline double uniform(const Rows& users, const Rows& items, const std::vector<Edge>& batch,
                      bool squared) {
  Rows bu, bi;
  for (const auto& e : batch) {
    bu.push_back(users[e.user]);
    bi.push_back(items[e.item]);
  }
  return 0.5 * (uniform_side(bu, squared) + uniform_side(bi, squared));
}

inline double loss(const Rows& users, const Rows& items, const std::vector<Edge>& batch,
                   double gamma, bool squared) {
  return align(users, items, batch) + gamma * uniform(users, items, batch, squared);
}

inline Rows to_rows(const gode::DenseMatrix& m) {
  Rows rows(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
  return rows;
}

// -- brute-force ranking -----------------------------------------------------

/// Scores every item in double, drops masked ones, sorts the whole list.
inline std::vector<std::uint32_t> full_ranking(const gode::EmbeddingSet& e, std::uint32_t user,
                                               const std::set<std::uint32_t>& masked) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (std::uint32_t i = 0; i < e.n_items(); ++i) {
    if (masked.contains(i)) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < e.dim(); ++c) s += static_cast<double>(e.users(user, c)) * e.items(i, c);
    scored.emplace_back(s, i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<std::uint32_t> out;
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

inline double dcg_metric(const std::vector<std::uint32_t>& ranking,
                         const std::set<std::uint32_t>& targets, std::size_t k, bool recall) {
  double hits = 0.0, dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    if (targets.contains(ranking[r])) {
      hits += 1.0;
      dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    }
  }
  if (recall) return hits / static_cast<double>(targets.size());
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, targets.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  return dcg / idcg;
}

inline gode::EmbeddingSet random_embeddings(gode::Rng& rng, std::size_t n_users,
                                            std::size_t n_items, std::size_t d,
                                            double scale = 1.0) {
  gode::EmbeddingSet e{gode::DenseMatrix(n_users, d), gode::DenseMatrix(n_items, d)};
  for (auto& v : e.users.flat()) v = static_cast<float>(scale * rng.normal());
  for (auto& v : e.items.flat()) v = static_cast<float>(scale * rng.normal());
  return e;
}

}  // namespace oracle
