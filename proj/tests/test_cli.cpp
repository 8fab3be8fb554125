// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "gode/cli.hpp"
#include "gode/datapipe.hpp"
#include "gode/error.hpp"
#include "gode/eval.hpp"
#include "gode/graph.hpp"
#include "gode/postconv.hpp"
#include "gode/study.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gode;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GODE_TEST_DATA_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "gode");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

std::size_t columns(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

// Drops the trailing seconds column of a training log.
std::string without_seconds(const std::string& csv) {
  std::string out;
  for (const auto& l : lines(csv)) out += l.substr(0, l.rfind(',')) + "\n";
  return out;
}

// Prepared tiny fixture plus a short mf run, shared by several cases.
struct Tiny {
  testutil::TempDir dir;
  fs::path ds = dir / "ds";
  fs::path run_dir = dir / "run";
  fs::path ckpt = run_dir / "embeddings.gode";
  Tiny() {
    REQUIRE(run({"prepare", "--raw", (kData / "tiny.tsv").string(), "--k-core", "1", "--out",
                 ds.string()})
                .code == 0);
    REQUIRE(run({"train", "--dataset", ds.string(), "--out", run_dir.string(), "--dim", "8",
                 "--batch", "8", "--max-epochs", "5", "--seed", "3"})
                .code == 0);
  }
};

// Small synthetic dataset with enough edges for timing and sweep checks.
struct Small {
  testutil::TempDir dir;
  fs::path ds = dir / "ds";
  Small() {
    const auto raw = dir / "raw.tsv";
    REQUIRE(run({"synth", "--out", raw.string(), "--users", "300", "--items", "200", "--degree",
                 "15", "--seed", "4"})
                .code == 0);
    REQUIRE(run({"prepare", "--raw", raw.string(), "--out", ds.string()}).code == 0);
  }
};

}  // namespace

TEST_CASE("exit codes") {
  testutil::TempDir dir;
  SUBCASE("missing raw file") {
    const auto r = run({"prepare", "--raw", "/nonexistent/raw.tsv", "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("not found") != std::string::npos);
  }
  SUBCASE("usage errors") {
    CHECK(run({}).code == 2);
    CHECK(run({"train", "--bogus"}).code == 2);
    CHECK(run({"convolve", "--dataset", "x", "--checkpoint", "y", "--out", "z", "--conv", "cubic"}).code == 2);
  }
  SUBCASE("help") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("prepare") != std::string::npos);
  }
  SUBCASE("with a prepared dataset") {
    Tiny t;
    CHECK(run({"eval", "--dataset", t.ds.string(), "--checkpoint", (dir / "none.gode").string()}).code == 2);
    testutil::write_file(dir / "bad.gode", "NOPE and then some bytes to pad the header out......");
    const auto bad = run({"convolve", "--dataset", t.ds.string(), "--checkpoint",
                          (dir / "bad.gode").string(), "--out", (dir / "c.gode").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("BadMagic") != std::string::npos);
    const auto none = run({"train", "--dataset", t.ds.string(), "--out", (dir / "r").string(),
                           "--max-epochs", "0"});
    CHECK(none.code == 2);
    CHECK(none.err.find("NoTraining") != std::string::npos);
    CHECK(run({"train", "--dataset", t.ds.string(), "--out", (dir / "r").string(), "--gamma", "-1"}).code == 2);
  }
}

TEST_CASE("prepare and train match the golden fixture") {
  Tiny t;
  for (const char* name : {"train.tsv", "valid.tsv", "test.tsv", "id_map.jsonl", "stats.txt"}) {
    CAPTURE(name);
    CHECK(testutil::read_file(t.ds / name) == testutil::read_file(kData / "golden" / name));
  }
  CHECK(without_seconds(testutil::read_file(t.run_dir / "training_log.csv")) ==
        testutil::read_file(kData / "golden" / "training_log.csv"));

  // second identical run: byte-identical artifacts
  Tiny again;
  CHECK(testutil::read_file(again.ckpt) == testutil::read_file(t.ckpt));
  CHECK(testutil::read_file(again.ckpt.string() + ".json") == testutil::read_file(t.ckpt.string() + ".json"));
  CHECK(testutil::read_file(again.ds / "train.tsv") == testutil::read_file(t.ds / "train.tsv"));
}

TEST_CASE("eval") {
  Tiny t;
  const auto r = run({"eval", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(), "--ks",
                      "5,10", "--out", t.run_dir.string()});
  REQUIRE(r.code == 0);
  CHECK(testutil::read_file(t.run_dir / "metrics_test.csv") ==
        testutil::read_file(kData / "golden" / "metrics_test.csv"));

  REQUIRE(run({"eval", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(), "--ks",
               "20,50", "--split", "valid", "--out", t.run_dir.string()})
              .code == 0);
  const auto csv = lines(testutil::read_file(t.run_dir / "metrics_valid.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "ndcg@20,recall@20,ndcg@50,recall@50,n_users");
  CHECK(columns(csv[1]) == 5);
}

TEST_CASE("convolve") {
  Tiny t;
  const auto base = datapipe::load_checkpoint(t.ckpt);
  const auto k0 = t.dir / "k0.gode";
  REQUIRE(run({"convolve", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(), "--out",
               k0.string(), "--conv", "discrete", "--K", "0"})
              .code == 0);
  const auto same = datapipe::load_checkpoint(k0);
  CHECK(same.users == base.users);
  CHECK(same.items == base.items);
  CHECK(testutil::read_file(k0.string() + ".json").find("convolved") != std::string::npos);

  const auto ode = t.dir / "ode.gode", sl = t.dir / "sl.gode";
  REQUIRE(run({"convolve", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(), "--out",
               ode.string(), "--conv", "ode", "--t", "2", "--dt", "1"})
              .code == 0);
  REQUIRE(run({"convolve", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(), "--out",
               sl.string(), "--conv", "discrete_sl", "--K", "2"})
              .code == 0);
  const auto a = datapipe::load_checkpoint(ode), b = datapipe::load_checkpoint(sl);
  CHECK(oracle::max_abs_diff(oracle::stack(a), b) < 1e-5);
}

TEST_CASE("sweep") {
  Tiny t;
  SUBCASE("t = 0 reproduces eval of the raw checkpoint") {
    const auto sw = run({"sweep", "--dataset", t.ds.string(), "--checkpoint", t.ckpt.string(),
                         "--grid", "t", "--values", "0", "--ks", "5,10"});
    REQUIRE(sw.code == 0);
    const auto rows = lines(sw.out);
    REQUIRE(rows.size() == 2);
    const auto metrics = lines(testutil::read_file(kData / "golden" / "metrics_test.csv"));
    const auto want = metrics[1].substr(0, metrics[1].rfind(','));
    CHECK(rows[1] == "0," + want + ",0.000000");
  }
  SUBCASE("gamma grid retrains once per value") {
    const auto sw = run({"sweep", "--dataset", t.ds.string(), "--grid", "gamma", "--ks", "5",
                         "--dim", "8", "--batch", "8", "--max-epochs", "2"});
    REQUIRE(sw.code == 0);
    const auto rows = lines(sw.out);
    REQUIRE(rows.size() == 9);
    CHECK(rows[1].rfind("0.2,", 0) == 0);
    CHECK(rows[8].rfind("20,", 0) == 0);
  }
  SUBCASE("t grid needs a checkpoint") {
    CHECK(run({"sweep", "--dataset", t.ds.string(), "--grid", "t"}).code == 2);
  }
}

TEST_CASE("sweep over K: discrepancy grows with depth") {
  Small s;
  const auto run_dir = s.dir / "run";
  REQUIRE(run({"train", "--dataset", s.ds.string(), "--out", run_dir.string(), "--dim", "16",
               "--max-epochs", "10", "--patience", "0"})
              .code == 0);
  const auto sw = run({"sweep", "--dataset", s.ds.string(), "--checkpoint",
                       (run_dir / "embeddings.gode").string(), "--grid", "K", "--conv", "discrete",
                       "--ks", "20"});
  REQUIRE(sw.code == 0);
  const auto rows = lines(sw.out);
  REQUIRE(rows.size() == 8);
  double prev = -1.0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double d = std::stod(rows[r].substr(rows[r].rfind(',') + 1));
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("bench") {
  Small s;
  SUBCASE("single sample omits the sd") {
    const auto out = s.dir / "bench.csv";
    REQUIRE(run({"bench", "--dataset", s.ds.string(), "--epochs", "1", "--dim", "16", "--out",
                 out.string()})
                .code == 0);
    const auto rows = lines(testutil::read_file(out));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "mode,samples,mean_seconds_per_epoch,sd_seconds_per_epoch");
    for (const auto& r : rows) CHECK(columns(r) == 4);
    CHECK(rows[1].rfind("mf,1,", 0) == 0);
    CHECK(rows[1].back() == ',');
  }
  SUBCASE("gcn is slower once the graph dwarfs a batch") {
    const auto ds = datapipe::load_dataset(s.ds);
    REQUIRE(ds.train.size() >= 10 * 64);
    const auto r = run({"bench", "--dataset", s.ds.string(), "--epochs", "2", "--batch", "64",
                        "--dim", "16"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    CHECK(rows[2].rfind("gcn,2,", 0) == 0);
    const auto ratio = rows[3].substr(std::string("gcn_over_mf,,").size());
    CHECK(std::stod(ratio) > 1.0);
  }
}

TEST_CASE("config file precedence") {
  Tiny t;
  const auto cfg = t.dir / "run.cfg";
  testutil::write_file(cfg,
                       "# shared\n"
                       "[common]\n"
                       "dim = 8\n"
                       "batch = 8\n"
                       "max_epochs = 4\n"
                       "\n"
                       "[train]\n"
                       "max-epochs = 2   ; train section beats common\n"
                       "seed = 3\n");
  auto epochs_in = [&](const fs::path& dir) {
    return lines(testutil::read_file(dir / "training_log.csv")).size() - 1;
  };
  REQUIRE(run({"train", "--config", cfg.string(), "--dataset", t.ds.string(), "--out",
               (t.dir / "a").string()})
              .code == 0);
  CHECK(epochs_in(t.dir / "a") == 2);
  REQUIRE(run({"train", "--dataset", t.ds.string(), "--out", (t.dir / "b").string(), "--config",
               cfg.string(), "--max-epochs", "3"})
              .code == 0);
  CHECK(epochs_in(t.dir / "b") == 3);

  std::istringstream in("[x]\nbad line\n");
  CHECK_THROWS_AS(cli::parse_config(in), Error);
  CHECK(run({"train", "--config", "/nonexistent.cfg", "--dataset", t.ds.string(), "--out", "o"}).code == 2);
}

TEST_CASE("variant study") {
  Small s;
  const auto ds = datapipe::load_dataset(s.ds);
  train::TrainConfig cfg;
  cfg.dim = 16;
  cfg.max_epochs = 3;
  const std::vector<std::size_t> ks{10, 20};
  const auto study = eval::run_variant_study(ds, cfg, ks);
  REQUIRE(study.rows.size() == 4);
  CHECK(study.rows[0].name == "MF-init");
  CHECK(study.rows[3].name == "LightGCN-conv");
  for (const auto& r : study.rows) CHECK(r.metrics.ks == ks);

  const auto g = graph::build_graph(ds);
  const auto conv = postconv::conv_discrete(g, study.mf, 2, false);
  const auto direct = eval::evaluate(ds, conv, ks);
  CHECK(study.row("MF-conv").metrics.recall == direct.recall);
  CHECK(study.row("MF-conv").metrics.ndcg == direct.ndcg);
  const auto csv = lines(study.to_csv());
  CHECK(csv.size() == 10);
  CHECK(csv[9].rfind("LightGCN-conv,100.00,100.00,100.00,100.00", 0) == 0);
}
