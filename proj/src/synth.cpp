// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gode/datapipe.hpp"
#include "gode/error.hpp"
#include "gode/random.hpp"

namespace gode::datapipe {

// Latent-factor implicit feedback. Users and items get taste vectors drawn
// around cluster centres; utility is affinity * <z_u, z_i> / sqrt(r) plus log
// popularity, and each user's items are drawn without replacement by
// Gumbel-top-k over all items.
InteractionTable synthesize(const SynthConfig& cfg) {
  if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_clusters == 0 || cfg.latent_dim == 0) {
    throw Error(ErrorCode::InvalidArgument, "synthetic sizes must be positive");
  }
  if (cfg.cluster_strength < 0.0 || cfg.cluster_strength > 1.0 || cfg.noise < 0.0 ||
      cfg.noise > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "cluster_strength and noise must lie in [0, 1]");
  }
  Rng rng(cfg.seed);
  const std::size_t r = cfg.latent_dim;

  std::vector<double> centres(cfg.n_clusters * r);
  for (auto& c : centres) c = rng.normal();
  const double a = std::sqrt(cfg.cluster_strength);
  const double b = std::sqrt(1.0 - cfg.cluster_strength);
  auto draw_taste = [&](std::vector<double>& out, std::size_t row) {
    const auto k = rng.index(cfg.n_clusters);
    for (std::size_t c = 0; c < r; ++c) out[row * r + c] = a * centres[k * r + c] + b * rng.normal();
  };

  std::vector<double> item_taste(cfg.n_items * r);
  for (std::size_t i = 0; i < cfg.n_items; ++i) draw_taste(item_taste, i);
  std::vector<std::size_t> rank(cfg.n_items);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(rank));
  std::vector<double> log_pop(cfg.n_items);
  for (std::size_t i = 0; i < cfg.n_items; ++i)
    log_pop[i] = -cfg.popularity_exponent * std::log(static_cast<double>(rank[i]) + 1.0);

  const double mu = std::log(cfg.mean_user_degree) - 0.5 * cfg.activity_sigma * cfg.activity_sigma;
  const std::size_t max_degree = std::max<std::size_t>(1, cfg.n_items / 3);
  const double scale = cfg.affinity / std::sqrt(static_cast<double>(r));

  InteractionTable table;
  std::vector<double> user_taste(r);
  std::vector<std::pair<double, std::size_t>> keys(cfg.n_items);
  std::int64_t clock = 1'600'000'000;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    draw_taste(user_taste, 0);
    const double deg = std::exp(mu + cfg.activity_sigma * rng.normal());
    const auto n_u =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(deg)), 1, max_degree);
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      double utility = log_pop[i];
      if (rng.uniform() >= cfg.noise) {
        double dot = 0.0;
        for (std::size_t c = 0; c < r; ++c) dot += user_taste[c] * item_taste[i * r + c];
        utility += scale * dot;
      }
      double g;
      do {
        g = rng.uniform();
      } while (g <= 0.0);
      keys[i] = {utility - std::log(-std::log(g)), i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_u), keys.end(),
                      [](const auto& x, const auto& y) {
                        return x.first > y.first || (x.first == y.first && x.second < y.second);
                      });
    for (std::size_t k = 0; k < n_u; ++k) {
      table.rows.push_back({"u" + std::to_string(u), "i" + std::to_string(keys[k].second), clock++});
    }
  }
  return table;
}

void save_interactions(const InteractionTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& row : table.rows) {
    out << row.user << '\t' << row.item;
    if (row.timestamp) out << '\t' << *row.timestamp;
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace gode::datapipe
