#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hetlmm/dataset.hpp"
#include "hetlmm/inference.hpp"
#include "hetlmm/varcomp.hpp"

namespace hetlmm {

struct GraphConfig {
  InferenceConfig inference;
  bool with_heterogeneity = false;
  VarCompConfig varcomp;
  /// Subtract each subject's column means before fitting.
  bool center = true;
  std::size_t threads = 1;
};

/// Symmetric p x p layers. Entries with a failed directed fit are NaN; the
/// diagonal is NaN for the numeric layers and false for the adjacency.
struct GraphEstimate {
  Index p = 0;
  double alpha = 0.05;
  MatrixXd strength;
  MatrixXd variance;
  MatrixXd p_value;
  MatrixXd p_holm;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency;
  MatrixXd heterogeneity;  // NaN unless heterogeneity was requested
  /// directed(j, k): node j regressed on the others, coefficient of node k.
  MatrixXd directed_strength;
  MatrixXd directed_variance;
  std::vector<std::string> failures;

  std::size_t edge_count() const;
};

GraphEstimate fit_graph(const std::vector<MatrixXd>& Y_blocks, const GraphConfig& config);

/// Symmetrize directed layers, compute p-values from the averaged pairs,
/// Holm-adjust over the upper triangle and threshold at alpha.
void assemble_graph(GraphEstimate& graph, const MatrixXd& directed_heterogeneity);

/// Re-threshold p_holm at a new level.
void set_alpha(GraphEstimate& graph, double alpha);

/// Rows 0, factor, 2 factor, ...
MatrixXd downsample_series(const MatrixXd& series, std::size_t factor);

struct EdgeRow {
  Index node_a = 0;
  Index node_b = 0;
  double strength_a = 0.0;
  double strength_b = 0.0;
  double p_holm_a = 1.0;
  double p_holm_b = 1.0;
  bool significant_a = false;
  bool significant_b = false;
};

struct GroupComparison {
  std::vector<EdgeRow> edges;  // upper triangle, row-major
  std::vector<std::pair<Index, Index>> shared;
  std::vector<std::pair<Index, Index>> only_a;
  std::vector<std::pair<Index, Index>> only_b;
};

GroupComparison compare_groups(const GraphEstimate& a, const GraphEstimate& b);

}  // namespace hetlmm
