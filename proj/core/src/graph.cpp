#include "hetlmm/graph.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"
#include "hetlmm/parallel.hpp"

namespace hetlmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct NodeResult {
  VectorXd strength;
  VectorXd variance;
  VectorXd heterogeneity;
  std::vector<std::string> failures;
};

NodeResult fit_node(const std::vector<MatrixXd>& Y, Index node, const GraphConfig& config) {
  const Index p = Y.front().cols();
  NodeResult out;
  out.strength = VectorXd::Constant(p, kNaN);
  out.variance = VectorXd::Constant(p, kNaN);
  out.heterogeneity = VectorXd::Constant(p, kNaN);
  const std::string label = "node " + std::to_string(node) + ": ";
  try {
    const LmmDataset data = make_neighborhood_dataset(Y, node);
    const TunedFit beta = tune_and_fit(data, config.inference.cv);
    for (Index c = 0; c < p - 1; ++c) {
      const Index k = c < node ? c : c + 1;
      const auto rec = infer_one(data, beta, c, config.inference);
      if (rec.ok) {
        out.strength(k) = rec.beta_db;
        out.variance(k) = rec.v_hat;
      } else {
        out.failures.push_back(label + rec.error);
      }
    }
    if (config.with_heterogeneity) {
      const auto vc = run_varcomp_pipeline(data, config.varcomp);
      for (Index c = 0; c < p - 1; ++c) out.heterogeneity(c < node ? c : c + 1) = vc.psi_hat(c);
    }
  } catch (const NumericalError& e) {
    out.failures.push_back(label + e.what());
  } catch (const DataError& e) {
    out.failures.push_back(label + e.what());
  }
  return out;
}

}  // namespace

std::size_t GraphEstimate::edge_count() const {
  std::size_t count = 0;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) count += adjacency(j, k) ? 1 : 0;
  return count;
}

GraphEstimate fit_graph(const std::vector<MatrixXd>& Y_blocks, const GraphConfig& config) {
  if (Y_blocks.empty()) throw DataError("no subject blocks");
  const Index p = Y_blocks.front().cols();
  if (p < 2) throw DataError("a graph needs at least two nodes");
  for (const auto& Y : Y_blocks)
    if (Y.cols() != p) throw DataError("subject blocks differ in node count");

  std::vector<MatrixXd> Y;
  Y.reserve(Y_blocks.size());
  for (const auto& block : Y_blocks) Y.push_back(config.center ? center_columns(block) : block);

  std::vector<NodeResult> nodes(static_cast<std::size_t>(p));
  parallel_for(nodes.size(), config.threads,
               [&](std::size_t j) { nodes[j] = fit_node(Y, static_cast<Index>(j), config); });

  GraphEstimate graph;
  graph.p = p;
  graph.alpha = config.inference.inference.alpha;
  graph.directed_strength = MatrixXd::Constant(p, p, kNaN);
  graph.directed_variance = MatrixXd::Constant(p, p, kNaN);
  MatrixXd directed_het = MatrixXd::Constant(p, p, kNaN);
  for (Index j = 0; j < p; ++j) {
    const auto& n = nodes[static_cast<std::size_t>(j)];
    graph.directed_strength.row(j) = n.strength.transpose();
    graph.directed_variance.row(j) = n.variance.transpose();
    directed_het.row(j) = n.heterogeneity.transpose();
    for (const auto& f : n.failures) {
      graph.failures.push_back(f);
      log::warn(f);
    }
  }
  assemble_graph(graph, directed_het);
  return graph;
}

void assemble_graph(GraphEstimate& graph, const MatrixXd& directed_het) {
  const Index p = graph.p;
  graph.strength = MatrixXd::Constant(p, p, kNaN);
  graph.variance = MatrixXd::Constant(p, p, kNaN);
  graph.p_value = MatrixXd::Constant(p, p, kNaN);
  graph.heterogeneity = MatrixXd::Constant(p, p, kNaN);

  std::vector<double> ps;
  std::vector<std::pair<Index, Index>> where;
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k) {
      const double s = (graph.directed_strength(j, k) + graph.directed_strength(k, j)) / 2.0;
      const double v = (graph.directed_variance(j, k) + graph.directed_variance(k, j)) / 2.0;
      const double h = (directed_het(j, k) + directed_het(k, j)) / 2.0;
      graph.strength(j, k) = graph.strength(k, j) = s;
      graph.variance(j, k) = graph.variance(k, j) = v;
      graph.heterogeneity(j, k) = graph.heterogeneity(k, j) = h;
      if (std::isnan(s) || std::isnan(v)) continue;
      const double pv = v > 0.0 ? normal_two_sided_p(s / std::sqrt(v)) : (s == 0.0 ? 1.0 : 0.0);
      graph.p_value(j, k) = graph.p_value(k, j) = pv;
      ps.push_back(pv);
      where.emplace_back(j, k);
    }

  graph.p_holm = MatrixXd::Constant(p, p, kNaN);
  const auto adj = holm_adjust(ps);
  for (std::size_t e = 0; e < where.size(); ++e) {
    const auto [j, k] = where[e];
    graph.p_holm(j, k) = graph.p_holm(k, j) = adj[e];
  }
  set_alpha(graph, graph.alpha);
}

void set_alpha(GraphEstimate& graph, double alpha) {
  graph.alpha = alpha;
  graph.adjacency.setConstant(graph.p, graph.p, false);
  for (Index j = 0; j < graph.p; ++j)
    for (Index k = 0; k < graph.p; ++k)
      if (j != k && !std::isnan(graph.p_holm(j, k))) graph.adjacency(j, k) = graph.p_holm(j, k) <= alpha;
}

MatrixXd downsample_series(const MatrixXd& series, std::size_t factor) {
  if (factor < 1) throw DataError("downsampling factor must be >= 1");
  const Index f = static_cast<Index>(factor);
  const Index rows = (series.rows() + f - 1) / f;
  MatrixXd out(rows, series.cols());
  for (Index r = 0; r < rows; ++r) out.row(r) = series.row(r * f);
  return out;
}

GroupComparison compare_groups(const GraphEstimate& a, const GraphEstimate& b) {
  if (a.p != b.p) throw DataError("graphs have different node counts");
  GroupComparison cmp;
  for (Index j = 0; j < a.p; ++j)
    for (Index k = j + 1; k < a.p; ++k) {
      EdgeRow row{j, k, a.strength(j, k), b.strength(j, k), a.p_holm(j, k), b.p_holm(j, k),
                  static_cast<bool>(a.adjacency(j, k)), static_cast<bool>(b.adjacency(j, k))};
      if (row.significant_a && row.significant_b) cmp.shared.emplace_back(j, k);
      else if (row.significant_a) cmp.only_a.emplace_back(j, k);
      else if (row.significant_b) cmp.only_b.emplace_back(j, k);
      cmp.edges.push_back(row);
    }
  return cmp;
}

}  // namespace hetlmm
