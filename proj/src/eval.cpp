// SPDX-License-Identifier: Apache-2.0
#include "gode/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gode/error.hpp"
#include "gode/kernels.hpp"

namespace gode::eval {

double MetricsReport::recall_at(std::size_t k) const {
  for (std::size_t q = 0; q < ks.size(); ++q)
    if (ks[q] == k) return recall[q];
  throw Error(ErrorCode::InvalidArgument, "report has no K=" + std::to_string(k));
}

double MetricsReport::ndcg_at(std::size_t k) const {
  for (std::size_t q = 0; q < ks.size(); ++q)
    if (ks[q] == k) return ndcg[q];
  throw Error(ErrorCode::InvalidArgument, "report has no K=" + std::to_string(k));
}

Evaluator::Evaluator(const datapipe::Dataset& ds, Split split)
    : n_users_total_(ds.n_users), n_items_total_(ds.n_items) {
  std::vector<std::vector<std::uint32_t>> mask(ds.n_users), target(ds.n_users);
  for (const auto& e : ds.train) mask[e.user].push_back(e.item);
  if (split == Split::Test) {
    for (const auto& e : ds.valid) mask[e.user].push_back(e.item);
    for (const auto& e : ds.test) target[e.user].push_back(e.item);
  } else {
    for (const auto& e : ds.valid) target[e.user].push_back(e.item);
  }
  for (std::uint32_t u = 0; u < ds.n_users; ++u) {
    if (target[u].empty()) continue;
    std::sort(mask[u].begin(), mask[u].end());
    mask[u].erase(std::unique(mask[u].begin(), mask[u].end()), mask[u].end());
    std::sort(target[u].begin(), target[u].end());
    users_.push_back(u);
    masks_.push_back(std::move(mask[u]));
    targets_.push_back(std::move(target[u]));
  }
  if (users_.empty()) {
    throw Error(ErrorCode::EmptyInput,
                split == Split::Test ? "test split is empty" : "validation split is empty");
  }
}

std::pair<double, double> recall_ndcg(std::span<const std::uint32_t> ranked,
                                      std::span<const std::uint32_t> sorted_targets,
                                      std::size_t k) {
  if (sorted_targets.empty()) return {0.0, 0.0};
  const std::size_t depth = std::min(k, ranked.size());
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::binary_search(sorted_targets.begin(), sorted_targets.end(), ranked[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, sorted_targets.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return {static_cast<double>(hits) / static_cast<double>(sorted_targets.size()), dcg / idcg};
}

namespace {

void check_embeddings(const EmbeddingSet& emb, std::size_t n_users, std::size_t n_items) {
  if (emb.n_users() != n_users || emb.n_items() != n_items) {
    throw Error(ErrorCode::DimensionMismatch,
                "embeddings " + std::to_string(emb.n_users()) + "x" +
                    std::to_string(emb.n_items()) + " vs dataset " + std::to_string(n_users) +
                    "x" + std::to_string(n_items));
  }
}

void check_ks(std::span<const std::size_t> ks) {
  if (ks.empty()) throw Error(ErrorCode::InvalidArgument, "at least one K required");
  for (const auto k : ks)
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be positive");
}

}  // namespace

PerUserMetrics Evaluator::per_user(const EmbeddingSet& emb, std::span<const std::size_t> ks) const {
  check_embeddings(emb, n_users_total_, n_items_total_);
  check_ks(ks);
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  const auto lists = kernels::top_k(emb.users, emb.items, users_, masks_, k_max);

  PerUserMetrics out;
  out.users = users_;
  out.recall.assign(users_.size(), std::vector<double>(ks.size()));
  out.ndcg.assign(users_.size(), std::vector<double>(ks.size()));
  std::vector<std::uint32_t> ranked;
  for (std::size_t q = 0; q < users_.size(); ++q) {
    ranked.clear();
    for (const auto& s : lists[q]) ranked.push_back(s.item);
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const auto [rec, nd] = recall_ndcg(ranked, targets_[q], ks[c]);
      out.recall[q][c] = rec;
      out.ndcg[q][c] = nd;
    }
  }
  return out;
}

MetricsReport Evaluator::evaluate(const EmbeddingSet& emb, std::span<const std::size_t> ks) const {
  const auto start = std::chrono::steady_clock::now();
  const auto per = per_user(emb, ks);
  MetricsReport r;
  r.ks.assign(ks.begin(), ks.end());
  r.recall.assign(ks.size(), 0.0);
  r.ndcg.assign(ks.size(), 0.0);
  // Fixed user order keeps the float reduction reproducible.
  for (std::size_t q = 0; q < per.users.size(); ++q) {
    for (std::size_t c = 0; c < ks.size(); ++c) {
      r.recall[c] += per.recall[q][c];
      r.ndcg[c] += per.ndcg[q][c];
    }
  }
  const auto n = static_cast<double>(per.users.size());
  for (std::size_t c = 0; c < ks.size(); ++c) {
    r.recall[c] /= n;
    r.ndcg[c] /= n;
  }
  r.n_users_evaluated = per.users.size();
  r.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

MetricsReport evaluate(const datapipe::Dataset& ds, const EmbeddingSet& emb,
                       std::span<const std::size_t> ks, Split split) {
  return Evaluator(ds, split).evaluate(emb, ks);
}

namespace {

std::vector<double> normalized(std::span<const float> row) {
  double norm = 0.0;
  for (const float x : row) norm += static_cast<double>(x) * x;
  if (norm == 0.0) throw Error(ErrorCode::ZeroNorm, "zero-norm embedding row");
  norm = std::sqrt(norm);
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = row[c] / norm;
  return out;
}

double sq_norm(std::span<const double> a) {
  double s = 0.0;
  for (const double x : a) s += x * x;
  return s;
}

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double t = static_cast<double>(a[c]) - b[c];
    s += t * t;
  }
  return s;
}

}  // namespace

double measure_alignment(const EmbeddingSet& emb, std::span<const datapipe::Edge> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "alignment needs at least one pair");
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.user >= emb.n_users() || p.item >= emb.n_items()) {
      throw Error(ErrorCode::DimensionMismatch, "pair outside embedding tables");
    }
    const auto u = normalized(emb.users.row(p.user));
    const auto v = normalized(emb.items.row(p.item));
    double s = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) s += (u[c] - v[c]) * (u[c] - v[c]);
    total += s;
  }
  return total / static_cast<double>(pairs.size());
}

AlignmentBound verify_alignment_bound(const graph::BipartiteGraph& g, const EmbeddingSet& emb,
                                      datapipe::Edge pair) {
  if (pair.user >= g.n_users() || pair.item >= g.n_items()) {
    throw Error(ErrorCode::NodeNotInGraph, "pair (" + std::to_string(pair.user) + ", " +
                                               std::to_string(pair.item) + ") outside graph");
  }
  if (emb.n_users() != g.n_users() || emb.n_items() != g.n_items()) {
    throw Error(ErrorCode::DimensionMismatch, "embeddings do not match graph");
  }
  const auto& r = g.user_items;
  const auto& rt = g.item_users;
  const auto begin = r.col.begin() + static_cast<std::ptrdiff_t>(r.row_ptr[pair.user]);
  const auto end = r.col.begin() + static_cast<std::ptrdiff_t>(r.row_ptr[pair.user + 1]);
  if (!std::binary_search(begin, end, pair.item)) {
    throw Error(ErrorCode::NodeNotInGraph, "user " + std::to_string(pair.user) +
                                               " and item " + std::to_string(pair.item) +
                                               " are not connected");
  }

  const std::size_t d = emb.dim();
  const auto eu = emb.users.row(pair.user);
  const auto ev = emb.items.row(pair.item);

  AlignmentBound b;
  double neighbor_terms = 0.0;
  std::vector<double> diff_sum(d, 0.0), plain(d, 0.0), weighted(d, 0.0);
  for (auto p = r.row_ptr[pair.user]; p < r.row_ptr[pair.user + 1]; ++p) {
    const auto ei = emb.items.row(r.col[p]);
    neighbor_terms += sq_dist(ei, eu);
    for (std::size_t c = 0; c < d; ++c) {
      diff_sum[c] += static_cast<double>(ei[c]) - eu[c];
      plain[c] += ei[c];
      weighted[c] += static_cast<double>(r.val[p]) * ei[c];
    }
  }
  for (auto p = rt.row_ptr[pair.item]; p < rt.row_ptr[pair.item + 1]; ++p) {
    const auto ej = emb.users.row(rt.col[p]);
    neighbor_terms += sq_dist(ev, ej);
    for (std::size_t c = 0; c < d; ++c) {
      diff_sum[c] += static_cast<double>(ev[c]) - ej[c];
      plain[c] -= ej[c];
      weighted[c] -= static_cast<double>(rt.val[p]) * ej[c];
    }
  }
  b.chain[0] = sq_dist(eu, ev) + neighbor_terms;
  b.chain[1] = neighbor_terms;
  b.chain[2] = sq_norm(diff_sum);
  b.rhs = sq_norm(plain);
  b.weighted = sq_norm(weighted);
  b.step_holds = {b.chain[0] >= b.chain[1], b.chain[1] >= b.chain[2], b.chain[2] >= b.rhs};
  b.holds = b.rhs <= b.chain[0];
  return b;
}

std::string report_csv_header(std::span<const std::size_t> ks) {
  std::ostringstream os;
  bool first = true;
  for (const auto k : ks) {
    os << (first ? "" : ",") << "ndcg@" << k << ",recall@" << k;
    first = false;
  }
  return os.str();
}

std::string report_csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  for (std::size_t c = 0; c < r.ks.size(); ++c)
    os << (c ? "," : "") << r.ndcg[c] << ',' << r.recall[c];
  return os.str();
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "K" << std::setw(12) << "NDCG" << std::setw(12) << "Recall"
     << '\n';
  os << std::setprecision(4) << std::fixed;
  for (std::size_t c = 0; c < r.ks.size(); ++c) {
    os << std::setw(8) << r.ks[c] << std::setw(12) << r.ndcg[c] << std::setw(12) << r.recall[c]
       << '\n';
  }
  os << "users evaluated: " << r.n_users_evaluated << '\n';
  return os.str();
}

}  // namespace gode::eval
