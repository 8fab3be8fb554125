// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gode/embedding.hpp"

namespace gode::datapipe {

using NodeId = std::uint32_t;

struct Interaction {
  std::string user;
  std::string item;
  std::optional<std::int64_t> timestamp;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Raw (user, item) events, duplicates collapsed.
struct InteractionTable {
  std::vector<Interaction> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

struct Edge {
  NodeId user = 0;
  NodeId item = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Token <-> contiguous id mapping, ids assigned by first appearance.
class IdMap {
 public:
  NodeId intern(const std::string& token);
  std::optional<NodeId> find(const std::string& token) const;
  const std::string& token(NodeId id) const { return tokens_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  friend bool operator==(const IdMap& a, const IdMap& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, NodeId> index_;
};

struct Dataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Edge> train;
  std::vector<Edge> valid;
  std::vector<Edge> test;
  std::vector<std::uint32_t> user_degree;  // train only
  std::vector<std::uint32_t> item_degree;  // train only
  IdMap users;
  IdMap items;

  std::size_t n_interactions() const noexcept { return train.size() + valid.size() + test.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double sparsity = 0.0;  // 1 - |E| / (n_users * n_items)
};

DatasetStats stats(const Dataset& ds);

/// Reads `user<TAB>item[<TAB>timestamp]` lines; `#` lines and blank lines are skipped.
/// Duplicate pairs collapse onto the first occurrence, keeping the earliest timestamp.
InteractionTable load_interactions(const std::filesystem::path& path);
InteractionTable parse_interactions(std::istream& in);

/// Iterative peeling until every user and item has degree >= k.
/// Throws EmptyResult when nothing survives.
InteractionTable k_core_filter(const InteractionTable& table, std::uint32_t k);

using SplitRatios = std::array<double, 3>;

/// Per-user seeded shuffle then cut into train/valid/test. Train receives
/// ceil(ratio_train * n) rows, test receives the larger half of the rest.
/// Users with fewer than 3 interactions keep everything in train; items absent
/// from train afterwards have their rows moved back into train.
Dataset split(const InteractionTable& table, SplitRatios ratios, std::uint64_t seed);

/// Per-user split sizes {train, valid, test} for n interactions.
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios);

/// Rebuilds degree arrays from the train split.
void recompute_degrees(Dataset& ds);

// Persistence: train.tsv / valid.tsv / test.tsv + id_map.jsonl under `dir`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Embedding checkpoints

inline constexpr std::array<char, 4> kCheckpointMagic = {'G', 'O', 'D', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian: magic, u32 version, u64 n_users, u64 n_items, u64 d, f32 users, f32 items.
void save_checkpoint(const EmbeddingSet& emb, const std::filesystem::path& path);
EmbeddingSet load_checkpoint(const std::filesystem::path& path);

/// Loads and checks dimensions against an expected (n_users, n_items).
EmbeddingSet load_checkpoint(const std::filesystem::path& path, std::size_t n_users,
                             std::size_t n_items);

// ---------------------------------------------------------------------------
// Synthetic interaction logs for desk-scale experiments.

struct SynthConfig {
  std::size_t n_users = 3000;
  std::size_t n_items = 3000;
  std::size_t latent_dim = 32;
  std::size_t n_clusters = 12;
  double cluster_strength = 0.5;  // share of latent variance explained by the cluster centre
  double mean_user_degree = 12.0;  // log-normal activity
  double activity_sigma = 1.0;
  double popularity_exponent = 0.8;  // Zipf-like item popularity
  double affinity = 2.5;  // scale of the taste term in item utility
  double noise = 0.3;  // fraction of draws that ignore taste
  std::uint64_t seed = 7;
};

InteractionTable synthesize(const SynthConfig& cfg);
void save_interactions(const InteractionTable& table, const std::filesystem::path& path);

}  // namespace gode::datapipe
