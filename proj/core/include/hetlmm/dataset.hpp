#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hetlmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Index list mapping each random-effect column to a fixed-effect column.
using ColumnMap = std::vector<Index>;

/// One subject's response, fixed-effect design and random-effect design.
/// Z is always the X columns selected by the dataset's column map.
struct SubjectBlock {
  std::string subject_id;
  VectorXd y;
  MatrixXd X;
  MatrixXd Z;

  Index rows() const { return y.size(); }
};

/// Validated multi-subject data for a linear mixed model with a shared
/// column map. Immutable after construction.
class LmmDataset {
 public:
  /// Builds the Z blocks from X and validates every invariant. Throws DataError.
  LmmDataset(std::vector<SubjectBlock> blocks, ColumnMap column_map);

  /// Assemble from (y, X) pairs; subject ids default to their position.
  static LmmDataset from_arrays(const std::vector<VectorXd>& ys, const std::vector<MatrixXd>& Xs,
                                ColumnMap column_map, std::vector<std::string> subject_ids = {});

  const std::vector<SubjectBlock>& blocks() const { return blocks_; }
  const SubjectBlock& block(std::size_t i) const { return blocks_[i]; }
  const ColumnMap& column_map() const { return column_map_; }

  std::size_t n() const { return blocks_.size(); }
  Index p() const { return p_; }
  Index q() const { return static_cast<Index>(column_map_.size()); }
  Index total_rows() const { return total_rows_; }

  /// max(m_i) / min(m_i).
  double row_ratio() const;

  /// Position of fixed-effect column `coord` in the column map, or -1.
  Index z_column_of(Index coord) const;

  /// Subset of subjects, keeping their order in `indices`.
  LmmDataset subset(const std::vector<std::size_t>& indices) const;

  /// Threshold above which construction logs an imbalance warning.
  static constexpr double kRowRatioWarning = 4.0;

 private:
  std::vector<SubjectBlock> blocks_;
  ColumnMap column_map_;
  Index p_ = 0;
  Index total_rows_ = 0;
};

// ---------------------------------------------------------------------------
// File interfaces
// ---------------------------------------------------------------------------

/// Load one CSV per subject: first column y, remaining p columns X.
LmmDataset load_dataset(const std::vector<std::filesystem::path>& subject_files,
                        const ColumnMap& column_map,
                        const std::vector<std::string>& subject_ids = {});

/// Manifest JSON: {"files": [...], "column_map": [...], "subject_ids": [...]}.
/// Relative paths resolve against the manifest's directory. "column_map"
/// defaults to the identity over all X columns.
struct DatasetManifest {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> subject_ids;
  ColumnMap column_map;  // empty = identity
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
LmmDataset load_manifest(const std::filesystem::path& manifest_path);

/// Write one CSV per subject (y then X, with a header) plus manifest.json.
void write_dataset(const LmmDataset& dataset, const std::filesystem::path& directory);

/// Per-series manifest used by graph and VAR commands: {"files": [...]}; each
/// file is a T x p numeric matrix.
std::vector<MatrixXd> load_series_manifest(const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// Transformations
// ---------------------------------------------------------------------------

/// Subtract each column's mean. Requires at least two rows.
MatrixXd center_columns(const MatrixXd& Y);

/// Node-wise regression data: y = column j, X = Z = remaining columns.
LmmDataset make_neighborhood_dataset(const std::vector<MatrixXd>& Y_blocks, Index node);

/// Column `node` of the original blocks removed by make_neighborhood_dataset.
MatrixXd reinsert_column(const MatrixXd& X, const VectorXd& column, Index node);

// ---------------------------------------------------------------------------
// Subject partitions
// ---------------------------------------------------------------------------

enum class PartitionKind { cv_folds, three_way_split };

struct SubjectPartition {
  PartitionKind kind = PartitionKind::cv_folds;
  std::size_t parts = 0;
  /// assignment[i] = part index of subject i (dataset order).
  std::vector<std::size_t> assignment;
  std::vector<std::string> subject_ids;

  std::vector<std::size_t> members(std::size_t part) const;
  std::vector<std::size_t> complement(std::size_t part) const;
  std::vector<std::size_t> sizes() const;
};

/// Shuffle subjects with the seeded counter RNG, then deal round-robin.
SubjectPartition partition_subjects(std::size_t n_subjects, PartitionKind kind, std::size_t folds,
                                    std::uint64_t seed);
SubjectPartition partition_subjects(const LmmDataset& dataset, PartitionKind kind,
                                    std::size_t folds, std::uint64_t seed);

}  // namespace hetlmm
