// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "gode/datapipe.hpp"
#include "gode/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gode;
using namespace gode::datapipe;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected gode::Error");
  return ErrorCode::InvalidArgument;
}

InteractionTable table_of(const std::vector<std::pair<std::string, std::string>>& pairs) {
  InteractionTable t;
  for (const auto& [u, i] : pairs) t.rows.push_back({u, i, std::nullopt});
  return t;
}

// Naive fixed point: rescan and drop low-degree rows until nothing changes.
std::set<std::pair<std::string, std::string>> naive_core(const InteractionTable& t, std::uint32_t k) {
  std::set<std::pair<std::string, std::string>> rows;
  for (const auto& r : t.rows) rows.insert({r.user, r.item});
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::string, std::uint32_t> du, di;
    for (const auto& [u, i] : rows) {
      ++du[u];
      ++di[i];
    }
    for (auto it = rows.begin(); it != rows.end();) {
      if (du[it->first] < k || di[it->second] < k) {
        it = rows.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return rows;
}

InteractionTable random_table(Rng& rng, std::size_t n_users, std::size_t n_items, std::size_t n) {
  InteractionTable t;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  while (t.size() < n) {
    const auto u = rng.index(n_users), i = rng.index(n_items);
    if (!seen.insert({u, i}).second) continue;
    t.rows.push_back({"u" + std::to_string(u), "i" + std::to_string(i), std::nullopt});
  }
  return t;
}

}  // namespace

TEST_CASE("parse_interactions") {
  SUBCASE("duplicates collapse") {
    std::istringstream in("u1\ti1\nu1\ti1\nu2\ti1\n");
    const auto t = parse_interactions(in);
    REQUIRE(t.size() == 2);
    CHECK(t.rows[0].user == "u1");
    CHECK(t.rows[1].user == "u2");
  }
  SUBCASE("earliest timestamp kept") {
    std::istringstream in("u1\ti1\t50\nu1\ti1\t20\n");
    const auto t = parse_interactions(in);
    REQUIRE(t.size() == 1);
    CHECK(t.rows[0].timestamp == 20);
  }
  SUBCASE("comments, blanks and CRLF") {
    std::istringstream in("# header\n\nu1\ti1\r\n\nu2\ti2\t7\r\n");
    const auto t = parse_interactions(in);
    REQUIRE(t.size() == 2);
    CHECK(t.rows[0].item == "i1");
    CHECK(t.rows[1].timestamp == 7);
  }
  SUBCASE("no data lines") {
    std::istringstream in("# only a comment\n\n");
    CHECK(code_of([&] { parse_interactions(in); }) == ErrorCode::EmptyInput);
  }
  SUBCASE("malformed line names its number") {
    std::istringstream in("u1\ti1\nnot-a-pair\n");
    try {
      parse_interactions(in);
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedLine);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK(code_of([] { load_interactions("/nonexistent/gode/x.tsv"); }) == ErrorCode::Io);
  }
}

TEST_CASE("k_core_filter") {
  SUBCASE("already a core") {
    const auto t = table_of({{"a", "x"}, {"a", "y"}, {"b", "x"}, {"b", "y"}});
    const auto out = k_core_filter(t, 2);
    CHECK(out.rows == t.rows);
  }
  SUBCASE("chain cascade empties the table") {
    const auto t = table_of(
        {{"u1", "i1"}, {"u1", "i2"}, {"u1", "i3"}, {"u1", "i4"}, {"u1", "i5"}, {"u2", "i1"}});
    CHECK(code_of([&] { k_core_filter(t, 5); }) == ErrorCode::EmptyResult);
  }
  SUBCASE("matches naive peeling, idempotent, order independent") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
      const auto t = random_table(rng, 40, 30, 300);
      const auto out = k_core_filter(t, 4);
      std::set<std::pair<std::string, std::string>> got;
      for (const auto& r : out.rows) got.insert({r.user, r.item});
      CHECK(got == naive_core(t, 4));
      CHECK(k_core_filter(out, 4).rows == out.rows);

      auto shuffled = t;
      rng.shuffle(std::span<Interaction>(shuffled.rows));
      std::set<std::pair<std::string, std::string>> got2;
      for (const auto& r : k_core_filter(shuffled, 4).rows) got2.insert({r.user, r.item});
      CHECK(got2 == got);
    }
  }
}

TEST_CASE("split_sizes rounding") {
  const SplitRatios r{0.8, 0.1, 0.1};
  using S = std::array<std::size_t, 3>;
  CHECK(split_sizes(10, r) == S{8, 1, 1});
  CHECK(split_sizes(5, r) == S{4, 0, 1});
  CHECK(split_sizes(2, r) == S{2, 0, 0});
  CHECK(split_sizes(3, r) == S{3, 0, 0});
  CHECK(split_sizes(7, r) == S{6, 0, 1});
  CHECK(split_sizes(11, r) == S{9, 1, 1});
  CHECK(split_sizes(20, r) == S{16, 2, 2});
  for (std::size_t n = 0; n < 200; ++n) {
    const auto s = split_sizes(n, r);
    CHECK(s[0] + s[1] + s[2] == n);
    CHECK(s[1] <= s[2]);
  }
}

TEST_CASE("split") {
  Rng rng(23);
  const auto t = random_table(rng, 30, 25, 400);

  SUBCASE("user with 10 interactions") {
    InteractionTable ten;
    for (int i = 0; i < 10; ++i) ten.rows.push_back({"u", "i" + std::to_string(i), std::nullopt});
    // another user covering every item so nothing is cold
    for (int i = 0; i < 10; ++i) ten.rows.push_back({"w", "i" + std::to_string(i), std::nullopt});
    const auto ds = split(ten, {0.8, 0.1, 0.1}, 1);
    auto count = [&](const std::vector<Edge>& part) {
      return std::count_if(part.begin(), part.end(), [](const Edge& e) { return e.user == 0; });
    };
    CHECK(count(ds.train) == 8);
    CHECK(count(ds.valid) == 1);
    CHECK(count(ds.test) == 1);
  }
  SUBCASE("deterministic and seed dependent") {
    const auto a = split(t, {0.8, 0.1, 0.1}, 5);
    const auto b = split(t, {0.8, 0.1, 0.1}, 5);
    const auto c = split(t, {0.8, 0.1, 0.1}, 6);
    CHECK(a == b);
    CHECK_FALSE(a.test == c.test);
  }
  SUBCASE("partition with no cold items") {
    const auto ds = split(t, {0.8, 0.1, 0.1}, 5);
    CHECK(ds.n_interactions() == t.size());
    std::set<Edge> all;
    for (const auto* part : {&ds.train, &ds.valid, &ds.test})
      for (const auto& e : *part) CHECK(all.insert(e).second);
    std::set<NodeId> train_items;
    for (const auto& e : ds.train) train_items.insert(e.item);
    for (const auto& e : ds.valid) CHECK(train_items.contains(e.item));
    for (const auto& e : ds.test) CHECK(train_items.contains(e.item));
    std::vector<std::uint32_t> ideg(ds.n_items, 0);
    for (const auto& e : ds.train) ++ideg[e.item];
    CHECK(ideg == ds.item_degree);
  }
  SUBCASE("bad ratios") {
    CHECK(code_of([&] { split(t, {0.5, 0.1, 0.1}, 1); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("dataset persistence round-trip") {
  testutil::TempDir dir;
  Rng rng(29);
  const auto ds = split(random_table(rng, 20, 15, 150), {0.8, 0.1, 0.1}, 3);
  save_dataset(ds, dir.path());
  CHECK(load_dataset(dir.path()) == ds);
  const auto s = stats(ds);
  CHECK(s.n_interactions == 150);
  CHECK(s.sparsity == doctest::Approx(1.0 - 150.0 / double(ds.n_users * ds.n_items)));
}

TEST_CASE("checkpoint") {
  testutil::TempDir dir;
  Rng rng(31);
  auto emb = oracle::random_embeddings(rng, 7, 5, 4);
  emb.users(0, 0) = -0.0f;
  emb.items(4, 3) = 1e-38f;
  const auto path = dir / "e.gode";
  save_checkpoint(emb, path);

  SUBCASE("round-trip is exact") {
    const auto back = load_checkpoint(path);
    CHECK(back.users == emb.users);
    CHECK(back.items == emb.items);
    CHECK(std::signbit(back.users(0, 0)));
    CHECK(load_checkpoint(path, 7, 5).users == emb.users);
  }
  SUBCASE("dimension check") {
    CHECK(code_of([&] { load_checkpoint(path, 8, 5); }) == ErrorCode::DimensionMismatch);
  }
  SUBCASE("bad magic") {
    auto bytes = testutil::read_file(path);
    bytes[0] = 'X';
    testutil::write_file(dir / "bad.gode", bytes);
    CHECK(code_of([&] { load_checkpoint(dir / "bad.gode"); }) == ErrorCode::BadMagic);
  }
  SUBCASE("version mismatch") {
    auto bytes = testutil::read_file(path);
    bytes[4] = 9;
    testutil::write_file(dir / "v.gode", bytes);
    CHECK(code_of([&] { load_checkpoint(dir / "v.gode"); }) == ErrorCode::VersionMismatch);
  }
  SUBCASE("truncated mid-matrix reports the offset") {
    const auto bytes = testutil::read_file(path);
    const std::size_t cut = 32 + 4 * 4 * 3 + 2;  // inside the user table
    testutil::write_file(dir / "t.gode", bytes.substr(0, cut));
    try {
      load_checkpoint(dir / "t.gode");
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Truncated);
      CHECK(std::string(e.what()).find("offset " + std::to_string(cut)) != std::string::npos);
    }
  }
  SUBCASE("truncated header") {
    testutil::write_file(dir / "h.gode", testutil::read_file(path).substr(0, 10));
    CHECK(code_of([&] { load_checkpoint(dir / "h.gode"); }) == ErrorCode::Truncated);
  }
}

TEST_CASE("synthesize is seeded") {
  SynthConfig cfg;
  cfg.n_users = 100;
  cfg.n_items = 80;
  const auto a = synthesize(cfg);
  const auto b = synthesize(cfg);
  CHECK(a.rows == b.rows);
  cfg.seed += 1;
  CHECK_FALSE(synthesize(cfg).rows == a.rows);
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& r : a.rows) CHECK(pairs.insert({r.user, r.item}).second);
}
