#include "hetlmm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hetlmm/csv.hpp"
#include "hetlmm/errors.hpp"
#include "hetlmm/log.hpp"
#include "hetlmm/rng.hpp"

namespace hetlmm {

// ---------------------------------------------------------------------------
// LmmDataset
// ---------------------------------------------------------------------------

LmmDataset::LmmDataset(std::vector<SubjectBlock> blocks, ColumnMap column_map)
    : blocks_(std::move(blocks)), column_map_(std::move(column_map)) {
  if (blocks_.empty()) throw DataError("dataset has no subjects");
  p_ = blocks_.front().X.cols();
  if (p_ < 1) throw DataError("dataset needs at least one fixed-effect column");
  if (column_map_.empty()) throw DataError("column_map must select at least one column");
  if (static_cast<Index>(column_map_.size()) > p_)
    throw DataError("column_map has more entries than there are X columns");

  std::set<Index> seen;
  for (Index c : column_map_) {
    if (c < 0 || c >= p_)
      throw DataError("column_map entry " + std::to_string(c) + " out of range [0," +
                      std::to_string(p_) + ")");
    if (!seen.insert(c).second) throw DataError("column_map has duplicate map entries");
  }

  total_rows_ = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    if (b.subject_id.empty()) b.subject_id = std::to_string(i);
    if (b.y.size() < 1) throw DataError("subject " + b.subject_id + " has no rows");
    if (b.X.rows() != b.y.size())
      throw DataError("subject " + b.subject_id + ": X has " + std::to_string(b.X.rows()) +
                      " rows but y has " + std::to_string(b.y.size()));
    if (b.X.cols() != p_)
      throw DataError("subject " + b.subject_id + ": dimension mismatch, X has " +
                      std::to_string(b.X.cols()) + " columns, expected " + std::to_string(p_));
    if (!b.X.allFinite() || !b.y.allFinite())
      throw DataError("subject " + b.subject_id + " contains non-finite values");
    b.Z.resize(b.X.rows(), static_cast<Index>(column_map_.size()));
    for (std::size_t j = 0; j < column_map_.size(); ++j)
      b.Z.col(static_cast<Index>(j)) = b.X.col(column_map_[j]);
    total_rows_ += b.rows();
  }

  const double ratio = row_ratio();
  if (ratio > kRowRatioWarning) {
    std::ostringstream msg;
    msg << "unbalanced subjects: max/min rows per subject = " << ratio;
    log::warn(msg.str());
  }
}

LmmDataset LmmDataset::from_arrays(const std::vector<VectorXd>& ys, const std::vector<MatrixXd>& Xs,
                                   ColumnMap column_map, std::vector<std::string> subject_ids) {
  if (ys.size() != Xs.size()) throw DataError("from_arrays: ys and Xs differ in length");
  if (!subject_ids.empty() && subject_ids.size() != ys.size())
    throw DataError("from_arrays: subject_ids length mismatch");
  std::vector<SubjectBlock> blocks(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    blocks[i].subject_id = subject_ids.empty() ? std::to_string(i) : subject_ids[i];
    blocks[i].y = ys[i];
    blocks[i].X = Xs[i];
  }
  return LmmDataset(std::move(blocks), std::move(column_map));
}

double LmmDataset::row_ratio() const {
  Index lo = blocks_.front().rows(), hi = lo;
  for (const auto& b : blocks_) {
    lo = std::min(lo, b.rows());
    hi = std::max(hi, b.rows());
  }
  return static_cast<double>(hi) / static_cast<double>(lo);
}

Index LmmDataset::z_column_of(Index coord) const {
  for (std::size_t j = 0; j < column_map_.size(); ++j)
    if (column_map_[j] == coord) return static_cast<Index>(j);
  return -1;
}

LmmDataset LmmDataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<SubjectBlock> picked;
  picked.reserve(indices.size());
  for (auto i : indices) {
    if (i >= blocks_.size()) throw DataError("subset index out of range");
    picked.push_back(blocks_[i]);
  }
  return LmmDataset(std::move(picked), column_map_);
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

LmmDataset load_dataset(const std::vector<std::filesystem::path>& subject_files,
                        const ColumnMap& column_map, const std::vector<std::string>& subject_ids) {
  if (subject_files.empty()) throw DataError("no subject files given");
  if (!subject_ids.empty() && subject_ids.size() != subject_files.size())
    throw DataError("subject_ids length does not match the number of files");

  std::vector<SubjectBlock> blocks;
  blocks.reserve(subject_files.size());
  Index p = -1;
  for (std::size_t i = 0; i < subject_files.size(); ++i) {
    const auto table = csv::read_numeric(subject_files[i]);
    if (table.values.rows() < 1)
      throw DataError(subject_files[i].string() + ": no data rows");
    if (table.values.cols() < 2)
      throw DataError(subject_files[i].string() + ": needs a y column and at least one X column");
    const Index file_p = table.values.cols() - 1;
    if (p < 0) p = file_p;
    if (file_p != p)
      throw DataError(subject_files[i].string() + ": dimension mismatch, " +
                      std::to_string(file_p) + " X columns, expected " + std::to_string(p));
    SubjectBlock b;
    b.subject_id = subject_ids.empty() ? subject_files[i].stem().string() : subject_ids[i];
    b.y = table.values.col(0);
    b.X = table.values.rightCols(file_p);
    blocks.push_back(std::move(b));
  }
  return LmmDataset(std::move(blocks), column_map);
}

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::vector<std::filesystem::path> manifest_files(const nlohmann::json& doc,
                                                  const std::filesystem::path& manifest_path) {
  if (!doc.is_object() || !doc.contains("files") || !doc["files"].is_array())
    throw DataError(manifest_path.string() + ": /files must be an array of paths");
  std::vector<std::filesystem::path> files;
  const auto base = manifest_path.parent_path();
  std::size_t k = 0;
  for (const auto& f : doc["files"]) {
    if (!f.is_string())
      throw DataError(manifest_path.string() + ": /files/" + std::to_string(k) +
                      " must be a string");
    std::filesystem::path path = f.get<std::string>();
    files.push_back(path.is_absolute() ? path : base / path);
    ++k;
  }
  if (files.empty()) throw DataError(manifest_path.string() + ": /files is empty");
  return files;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  const auto doc = read_json_file(manifest_path);
  DatasetManifest manifest;
  manifest.files = manifest_files(doc, manifest_path);
  if (doc.contains("column_map")) {
    const auto& cm = doc["column_map"];
    if (!cm.is_array())
      throw DataError(manifest_path.string() + ": /column_map must be an array of integers");
    for (std::size_t k = 0; k < cm.size(); ++k) {
      if (!cm[k].is_number_integer())
        throw DataError(manifest_path.string() + ": /column_map/" + std::to_string(k) +
                        " must be an integer");
      manifest.column_map.push_back(cm[k].get<Index>());
    }
  }
  if (doc.contains("subject_ids")) {
    const auto& ids = doc["subject_ids"];
    if (!ids.is_array() || ids.size() != manifest.files.size())
      throw DataError(manifest_path.string() +
                      ": /subject_ids must be an array matching /files in length");
    for (const auto& id : ids) manifest.subject_ids.push_back(id.is_string() ? id.get<std::string>()
                                                                              : id.dump());
  }
  return manifest;
}

LmmDataset load_manifest(const std::filesystem::path& manifest_path) {
  auto manifest = read_manifest(manifest_path);
  if (manifest.column_map.empty()) {
    // Identity over all X columns: peek at the first file for p.
    const auto first = csv::read_numeric(manifest.files.front());
    const Index p = first.values.cols() - 1;
    if (p < 1) throw DataError(manifest.files.front().string() + ": needs at least one X column");
    manifest.column_map.resize(static_cast<std::size_t>(p));
    std::iota(manifest.column_map.begin(), manifest.column_map.end(), Index{0});
  }
  return load_dataset(manifest.files, manifest.column_map, manifest.subject_ids);
}

void write_dataset(const LmmDataset& dataset, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  nlohmann::json manifest;
  manifest["files"] = nlohmann::json::array();
  manifest["subject_ids"] = nlohmann::json::array();
  std::vector<std::string> header{"y"};
  for (Index c = 0; c < dataset.p(); ++c) header.push_back("x" + std::to_string(c));
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto& b = dataset.block(i);
    MatrixXd table(b.rows(), dataset.p() + 1);
    table.col(0) = b.y;
    table.rightCols(dataset.p()) = b.X;
    const std::string name = "subject_" + std::to_string(i) + ".csv";
    csv::write_numeric(directory / name, table, header);
    manifest["files"].push_back(name);
    manifest["subject_ids"].push_back(b.subject_id);
  }
  manifest["column_map"] = dataset.column_map();
  std::ofstream out(directory / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + directory.string());
  out << manifest.dump(2) << '\n';
}

std::vector<MatrixXd> load_series_manifest(const std::filesystem::path& manifest_path) {
  const auto doc = read_json_file(manifest_path);
  const auto files = manifest_files(doc, manifest_path);
  std::vector<MatrixXd> series;
  series.reserve(files.size());
  for (const auto& f : files) {
    auto table = csv::read_numeric(f);
    if (table.values.rows() < 1) throw DataError(f.string() + ": no data rows");
    if (!series.empty() && table.values.cols() != series.front().cols())
      throw DataError(f.string() + ": dimension mismatch, " +
                      std::to_string(table.values.cols()) + " columns, expected " +
                      std::to_string(series.front().cols()));
    series.push_back(std::move(table.values));
  }
  return series;
}

// ---------------------------------------------------------------------------
// Transformations
// ---------------------------------------------------------------------------

MatrixXd center_columns(const MatrixXd& Y) {
  if (Y.rows() < 2) throw DataError("center_columns needs at least two rows");
  MatrixXd out = Y;
  for (Index c = 0; c < Y.cols(); ++c) {
    const double mean = Y.col(c).mean();
    out.col(c).array() -= mean;
    // A second pass removes the rounding residue left by the first.
    out.col(c).array() -= out.col(c).mean();
  }
  return out;
}

LmmDataset make_neighborhood_dataset(const std::vector<MatrixXd>& Y_blocks, Index node) {
  if (Y_blocks.empty()) throw DataError("no subject blocks");
  const Index p = Y_blocks.front().cols();
  if (node < 0 || node >= p)
    throw DataError("node index " + std::to_string(node) + " out of range [0," +
                    std::to_string(p) + ")");
  if (p < 2) throw DataError("neighborhood regression needs at least two nodes");

  std::vector<VectorXd> ys;
  std::vector<MatrixXd> Xs;
  ys.reserve(Y_blocks.size());
  Xs.reserve(Y_blocks.size());
  for (const auto& Y : Y_blocks) {
    if (Y.cols() != p) throw DataError("subject blocks differ in node count");
    ys.push_back(Y.col(node));
    MatrixXd X(Y.rows(), p - 1);
    X.leftCols(node) = Y.leftCols(node);
    X.rightCols(p - 1 - node) = Y.rightCols(p - 1 - node);
    Xs.push_back(std::move(X));
  }
  ColumnMap identity(static_cast<std::size_t>(p - 1));
  std::iota(identity.begin(), identity.end(), Index{0});
  return LmmDataset::from_arrays(ys, Xs, std::move(identity));
}

MatrixXd reinsert_column(const MatrixXd& X, const VectorXd& column, Index node) {
  const Index p = X.cols() + 1;
  if (node < 0 || node >= p) throw DataError("reinsert_column: node out of range");
  if (column.size() != X.rows()) throw DataError("reinsert_column: row mismatch");
  MatrixXd Y(X.rows(), p);
  Y.leftCols(node) = X.leftCols(node);
  Y.col(node) = column;
  Y.rightCols(p - 1 - node) = X.rightCols(p - 1 - node);
  return Y;
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

std::vector<std::size_t> SubjectPartition::members(std::size_t part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == part) out.push_back(i);
  return out;
}

std::vector<std::size_t> SubjectPartition::complement(std::size_t part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != part) out.push_back(i);
  return out;
}

std::vector<std::size_t> SubjectPartition::sizes() const {
  std::vector<std::size_t> out(parts, 0);
  for (auto a : assignment) ++out[a];
  return out;
}

SubjectPartition partition_subjects(std::size_t n_subjects, PartitionKind kind, std::size_t folds,
                                    std::uint64_t seed) {
  const std::size_t parts = kind == PartitionKind::three_way_split ? 3 : folds;
  if (kind == PartitionKind::cv_folds && parts < 2)
    throw DataError("cross-validation needs at least 2 folds");
  if (n_subjects < parts)
    throw DataError("too few subjects: " + std::to_string(n_subjects) + " subjects for " +
                    std::to_string(parts) + " parts");

  std::vector<std::size_t> order(n_subjects);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::CounterRng gen(seed, {0x7061727469ull /* "parti" */, static_cast<std::uint64_t>(kind)});
  // Fisher-Yates with the counter RNG so the shuffle is platform independent.
  for (std::size_t i = n_subjects; i > 1; --i) {
    const auto j = static_cast<std::size_t>(gen.below(i));
    std::swap(order[i - 1], order[j]);
  }

  SubjectPartition partition;
  partition.kind = kind;
  partition.parts = parts;
  partition.assignment.assign(n_subjects, 0);
  for (std::size_t k = 0; k < n_subjects; ++k) partition.assignment[order[k]] = k % parts;
  return partition;
}

SubjectPartition partition_subjects(const LmmDataset& dataset, PartitionKind kind,
                                    std::size_t folds, std::uint64_t seed) {
  auto partition = partition_subjects(dataset.n(), kind, folds, seed);
  partition.subject_ids.reserve(dataset.n());
  for (const auto& b : dataset.blocks()) partition.subject_ids.push_back(b.subject_id);
  return partition;
}

}  // namespace hetlmm
