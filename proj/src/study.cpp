// SPDX-License-Identifier: Apache-2.0
#include "gode/study.hpp"

#include <cmath>
#include <sstream>

#include "gode/error.hpp"
#include "gode/graph.hpp"

namespace gode::eval {

const VariantRow& VariantStudy::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw Error(ErrorCode::InvalidArgument, "no variant named " + name);
}

std::string VariantStudy::to_csv() const {
  std::ostringstream os;
  const auto& ks = rows.front().metrics.ks;
  os << "variant," << report_csv_header(ks) << '\n';
  for (const auto& r : rows) os << r.name << ',' << report_csv_row(r.metrics) << '\n';
  const auto& ref = row("LightGCN-conv").metrics;
  os << "variant_pct," << report_csv_header(ks) << '\n';
  os.precision(2);
  os << std::fixed;
  for (const auto& r : rows) {
    os << r.name;
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const auto pct = [](double x, double base) { return base > 0 ? 100.0 * x / base : 0.0; };
      os << ',' << pct(r.metrics.ndcg[c], ref.ndcg[c]) << ','
         << pct(r.metrics.recall[c], ref.recall[c]);
    }
    os << '\n';
  }
  return os.str();
}

VariantStudy run_variant_study(const datapipe::Dataset& ds, const train::TrainConfig& base,
                               std::span<const std::size_t> ks, int layers, Split split) {
  const auto g = graph::build_graph(ds);
  const Evaluator evaluator(ds, split);

  auto mf_cfg = base;
  mf_cfg.mode = train::TrainMode::Mf;
  auto gcn_cfg = base;
  gcn_cfg.mode = train::TrainMode::Gcn;
  gcn_cfg.gcn_layers = layers;
  gcn_cfg.gcn_self_loop = false;

  VariantStudy study;
  auto mf = train::fit(ds, mf_cfg);
  auto gcn = train::fit(ds, gcn_cfg);
  study.mf = std::move(mf.embeddings);
  study.gcn = std::move(gcn.embeddings);
  study.mf_log = std::move(mf.log);
  study.gcn_log = std::move(gcn.log);

  auto conv = [&](const EmbeddingSet& e) {
    return postconv::conv_discrete(g, e, layers, false, postconv::Readout::LayerSum);
  };
  study.rows.push_back({"MF-init", evaluator.evaluate(study.mf, ks)});
  study.rows.push_back({"MF-conv", evaluator.evaluate(conv(study.mf), ks)});
  study.rows.push_back({"LightGCN-init", evaluator.evaluate(study.gcn, ks)});
  study.rows.push_back({"LightGCN-conv", evaluator.evaluate(conv(study.gcn), ks)});
  return study;
}

std::vector<SweepRow> sweep_convolution(const datapipe::Dataset& ds, const EmbeddingSet& base,
                                        postconv::ConvConfig cfg, std::span<const double> grid,
                                        std::span<const std::size_t> ks, Split split) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty sweep grid");
  const auto g = graph::build_graph(ds);
  const Evaluator evaluator(ds, split);
  std::vector<SweepRow> rows;
  for (const double value : grid) {
    if (cfg.mode == postconv::ConvMode::Ode) {
      cfg.t = value;
    } else {
      cfg.K = static_cast<int>(std::lround(value));
    }
    const auto conv = postconv::convolve(g, base, cfg);
    rows.push_back({value, evaluator.evaluate(conv, ks), postconv::embedding_discrepancy(base, conv)});
  }
  return rows;
}

std::vector<SweepRow> sweep_gamma(const datapipe::Dataset& ds, train::TrainConfig cfg,
                                  const postconv::ConvConfig& conv, std::span<const double> grid,
                                  std::span<const std::size_t> ks, Split split) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty sweep grid");
  const auto g = graph::build_graph(ds);
  const Evaluator evaluator(ds, split);
  std::vector<SweepRow> rows;
  for (const double gamma : grid) {
    cfg.gamma = gamma;
    const auto fitted = train::fit(ds, cfg);
    const auto out = postconv::convolve(g, fitted.embeddings, conv);
    rows.push_back({gamma, evaluator.evaluate(out, ks),
                    postconv::embedding_discrepancy(fitted.embeddings, out)});
  }
  return rows;
}

std::string sweep_csv(const std::string& grid_name, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  if (rows.empty()) return os.str();
  os << grid_name << ',' << report_csv_header(rows.front().metrics.ks) << ",discrepancy\n";
  for (const auto& r : rows) {
    std::ostringstream v;
    v << r.value;
    os << v.str() << ',' << report_csv_row(r.metrics) << ',';
    os.precision(6);
    os << std::fixed << r.discrepancy << std::defaultfloat << '\n';
  }
  return os.str();
}

double best_by_validation(const datapipe::Dataset& ds, const EmbeddingSet& base,
                          postconv::ConvConfig cfg, std::span<const double> grid) {
  const std::size_t k20[] = {20};
  const auto rows = sweep_convolution(ds, base, cfg, grid, k20, Split::Valid);
  double best_value = rows.front().value;
  double best_ndcg = rows.front().metrics.ndcg[0];
  for (const auto& r : rows) {
    if (r.metrics.ndcg[0] > best_ndcg) {
      best_ndcg = r.metrics.ndcg[0];
      best_value = r.value;
    }
  }
  return best_value;
}

}  // namespace gode::eval
