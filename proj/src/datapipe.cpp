// SPDX-License-Identifier: Apache-2.0
#include "gode/datapipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "gode/error.hpp"
#include "gode/random.hpp"

namespace gode::datapipe {

NodeId IdMap::intern(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<NodeId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<NodeId> IdMap::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DatasetStats stats(const Dataset& ds) {
  DatasetStats s;
  s.n_users = ds.n_users;
  s.n_items = ds.n_items;
  s.n_interactions = ds.n_interactions();
  const double cells = static_cast<double>(ds.n_users) * static_cast<double>(ds.n_items);
  s.sparsity = cells > 0 ? 1.0 - static_cast<double>(s.n_interactions) / cells : 0.0;
  return s;
}

namespace {

struct PairHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h1 = std::hash<std::string>{}(p.first);
    const std::size_t h2 = std::hash<std::string>{}(p.second);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
  }
};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

InteractionTable parse_interactions(std::istream& in) {
  InteractionTable table;
  std::unordered_map<std::pair<std::string, std::string>, std::size_t, PairHash> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw Error(ErrorCode::MalformedLine,
                  "line " + std::to_string(line_no) + ": expected user<TAB>item[<TAB>timestamp]");
    }
    Interaction row{std::string(fields[0]), std::string(fields[1]), std::nullopt};
    if (fields.size() >= 3 && !fields[2].empty()) {
      std::int64_t ts = 0;
      const auto f = fields[2];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw Error(ErrorCode::MalformedLine,
                    "line " + std::to_string(line_no) + ": bad timestamp '" + std::string(f) + "'");
      }
      row.timestamp = ts;
    }
    auto key = std::make_pair(row.user, row.item);
    auto it = seen.find(key);
    if (it != seen.end()) {
      auto& kept = table.rows[it->second];
      if (row.timestamp && (!kept.timestamp || *row.timestamp < *kept.timestamp)) {
        kept.timestamp = row.timestamp;
      }
      continue;
    }
    seen.emplace(std::move(key), table.rows.size());
    table.rows.push_back(std::move(row));
  }
  if (table.empty()) throw Error(ErrorCode::EmptyInput, "no interaction lines found");
  return table;
}

InteractionTable load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse_interactions(in);
}

InteractionTable k_core_filter(const InteractionTable& table, std::uint32_t k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  IdMap users, items;
  std::vector<Edge> edges;
  edges.reserve(table.size());
  for (const auto& r : table.rows) edges.push_back({users.intern(r.user), items.intern(r.item)});

  std::vector<std::uint32_t> udeg(users.size(), 0), ideg(items.size(), 0);
  std::vector<std::vector<std::uint32_t>> uedges(users.size()), iedges(items.size());
  for (std::uint32_t e = 0; e < edges.size(); ++e) {
    ++udeg[edges[e].user];
    ++ideg[edges[e].item];
    uedges[edges[e].user].push_back(e);
    iedges[edges[e].item].push_back(e);
  }

  // Stack entries: (is_item, node). A node is pushed at most once, when its
  // degree first drops below k.
  std::vector<char> alive(edges.size(), 1), urem(users.size(), 0), irem(items.size(), 0);
  std::vector<std::pair<bool, std::uint32_t>> stack;
  for (std::uint32_t u = 0; u < udeg.size(); ++u)
    if (udeg[u] < k) { urem[u] = 1; stack.emplace_back(false, u); }
  for (std::uint32_t i = 0; i < ideg.size(); ++i)
    if (ideg[i] < k) { irem[i] = 1; stack.emplace_back(true, i); }

  while (!stack.empty()) {
    const auto [is_item, node] = stack.back();
    stack.pop_back();
    const auto& incident = is_item ? iedges[node] : uedges[node];
    for (const auto e : incident) {
      if (!alive[e]) continue;
      alive[e] = 0;
      if (is_item) {
        const auto u = edges[e].user;
        if (--udeg[u] < k && !urem[u]) { urem[u] = 1; stack.emplace_back(false, u); }
      } else {
        const auto i = edges[e].item;
        if (--ideg[i] < k && !irem[i]) { irem[i] = 1; stack.emplace_back(true, i); }
      }
    }
  }

  InteractionTable out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (alive[e]) out.rows.push_back(table.rows[e]);
  if (out.empty()) {
    throw Error(ErrorCode::EmptyResult,
                "no interactions survive " + std::to_string(k) + "-core filtering");
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios ratios) {
  if (n < 3) return {n, 0, 0};
  // Guard against 0.8 * 10 evaluating to 8.000000000000002.
  const double raw = ratios[0] * static_cast<double>(n);
  auto n_train = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  const std::size_t rest = n - n_train;
  std::size_t n_test = (rest + 1) / 2;
  std::size_t n_valid = rest - n_test;
  if (ratios[1] <= 0.0) { n_test += n_valid; n_valid = 0; }
  if (ratios[2] <= 0.0) { n_valid += n_test; n_test = 0; }
  return {n_train, n_valid, n_test};
}

void recompute_degrees(Dataset& ds) {
  ds.user_degree.assign(ds.n_users, 0);
  ds.item_degree.assign(ds.n_items, 0);
  for (const auto& e : ds.train) {
    ++ds.user_degree[e.user];
    ++ds.item_degree[e.item];
  }
}

Dataset split(const InteractionTable& table, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-6 || ratios[0] <= 0.0 || ratios[1] < 0.0 || ratios[2] < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative and sum to 1");
  }
  if (table.empty()) throw Error(ErrorCode::EmptyInput, "cannot split an empty table");

  Dataset ds;
  std::vector<std::vector<NodeId>> per_user;
  for (const auto& r : table.rows) {
    const NodeId u = ds.users.intern(r.user);
    const NodeId i = ds.items.intern(r.item);
    if (u >= per_user.size()) per_user.resize(u + 1);
    per_user[u].push_back(i);
  }
  ds.n_users = ds.users.size();
  ds.n_items = ds.items.size();

  Rng rng(seed);
  for (NodeId u = 0; u < per_user.size(); ++u) {
    auto& items = per_user[u];
    rng.shuffle(std::span<NodeId>(items));
    const auto [n_train, n_valid, n_test] = split_sizes(items.size(), ratios);
    std::size_t pos = 0;
    for (; pos < n_train; ++pos) ds.train.push_back({u, items[pos]});
    for (; pos < n_train + n_valid; ++pos) ds.valid.push_back({u, items[pos]});
    for (; pos < n_train + n_valid + n_test; ++pos) ds.test.push_back({u, items[pos]});
  }

  // Items never seen in train cannot be embedded meaningfully; fold their
  // held-out rows back into train.
  std::vector<char> in_train(ds.n_items, 0);
  for (const auto& e : ds.train) in_train[e.item] = 1;
  auto move_cold = [&](std::vector<Edge>& part) {
    std::vector<Edge> kept;
    kept.reserve(part.size());
    for (const auto& e : part) {
      if (in_train[e.item]) kept.push_back(e);
      else ds.train.push_back(e);
    }
    part = std::move(kept);
  };
  move_cold(ds.valid);
  move_cold(ds.test);

  recompute_degrees(ds);
  return ds;
}

namespace {

void write_edges(const std::vector<Edge>& edges, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& e : edges) out << e.user << '\t' << e.item << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<Edge> read_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    Edge e;
    auto parse = [&](std::string_view f, NodeId& v) {
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      return ec == std::errc() && ptr == f.data() + f.size();
    };
    if (fields.size() != 2 || !parse(fields[0], e.user) || !parse(fields[1], e.item)) {
      throw Error(ErrorCode::MalformedLine,
                  path.filename().string() + " line " + std::to_string(line_no));
    }
    edges.push_back(e);
  }
  return edges;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_edges(ds.train, dir / "train.tsv");
  write_edges(ds.valid, dir / "valid.tsv");
  write_edges(ds.test, dir / "test.tsv");
  std::ofstream out(dir / "id_map.jsonl", std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write id map in " + dir.string());
  for (NodeId u = 0; u < ds.users.size(); ++u)
    out << nlohmann::json{{"kind", "user"}, {"id", u}, {"token", ds.users.token(u)}}.dump() << '\n';
  for (NodeId i = 0; i < ds.items.size(); ++i)
    out << nlohmann::json{{"kind", "item"}, {"id", i}, {"token", ds.items.token(i)}}.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  std::ifstream in(dir / "id_map.jsonl");
  if (!in) throw Error(ErrorCode::Io, "cannot open " + (dir / "id_map.jsonl").string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, "id_map.jsonl line " + std::to_string(line_no));
    }
    const auto kind = j.value("kind", "");
    const auto id = j.value("id", NodeId{0});
    const auto token = j.value("token", "");
    IdMap& map = kind == "user" ? ds.users : ds.items;
    if ((kind != "user" && kind != "item") || map.intern(token) != id) {
      throw Error(ErrorCode::MalformedLine,
                  "id_map.jsonl line " + std::to_string(line_no) + ": ids must be contiguous");
    }
  }
  ds.n_users = ds.users.size();
  ds.n_items = ds.items.size();
  ds.train = read_edges(dir / "train.tsv");
  ds.valid = read_edges(dir / "valid.tsv");
  ds.test = read_edges(dir / "test.tsv");
  for (const auto* part : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& e : *part) {
      if (e.user >= ds.n_users || e.item >= ds.n_items) {
        throw Error(ErrorCode::DimensionMismatch, "edge id outside the id map in " + dir.string());
      }
    }
  }
  recompute_degrees(ds);
  return ds;
}

}  // namespace gode::datapipe
