#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "hetlmm/csv.hpp"
#include "hetlmm/dataset.hpp"
#include "hetlmm/errors.hpp"
#include "hetlmm/parallel.hpp"
#include "hetlmm/rng.hpp"
#include "test_util.hpp"

using namespace hetlmm;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hetlmm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

// Known-answer vectors for Philox4x32-10.
TEST(Philox, KnownAnswers) {
  using P = rng::Philox4x32;
  EXPECT_EQ(P::block({0, 0, 0, 0}, {0, 0}), (P::Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(P::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (P::Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(P::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (P::Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterRng, StreamsAreReproducibleAndDistinct) {
  rng::CounterRng a(7, {1, 2}), b(7, {1, 2}), c(7, {1, 3});
  for (int i = 0; i < 10; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    (void)c;
  }
  EXPECT_NE(rng::derive_key(7, {1, 2}), rng::derive_key(7, {1, 3}));
  EXPECT_NE(rng::derive_key(7, {1, 2}), rng::derive_key(8, {1, 2}));
}

TEST(CounterRng, MomentsAreSane) {
  rng::CounterRng g(1, {9});
  double s = 0, s2 = 0, u = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal();
    s += z;
    s2 += z * z;
    const double v = g.uniform();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    u += v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(u / n, 0.5, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(g.below(7), 7u);
}

TEST(Csv, HeaderDetectionAndErrors) {
  auto t = csv::parse_numeric("y,x1\n1,2\n3,4e-1\n", "mem");
  EXPECT_EQ(t.header, (std::vector<std::string>{"y", "x1"}));
  ASSERT_EQ(t.values.rows(), 2);
  EXPECT_DOUBLE_EQ(t.values(1, 1), 0.4);

  t = csv::parse_numeric("1,2\n3,4\n", "mem");
  EXPECT_TRUE(t.header.empty());
  EXPECT_EQ(t.values.rows(), 2);

  EXPECT_THROW(csv::parse_numeric("1,2\n3\n", "mem"), DataError);
  EXPECT_THROW(csv::parse_numeric("1,nan\n", "mem"), DataError);
  EXPECT_THROW(csv::parse_numeric("nan,1\n2,3\n", "mem"), DataError);
  EXPECT_THROW(csv::parse_numeric("1,2\n3,abc\n", "mem"), DataError);
}

TEST(Csv, RoundTripIsExact) {
  rng::CounterRng g(2, {1});
  const MatrixXd M = g.normal_matrix(5, 3) * 1e3;
  std::ostringstream out;
  csv::write_numeric(out, M, {"a", "b", "c"});
  const auto t = csv::parse_numeric(out.str(), "mem");
  EXPECT_EQ(t.values, M);
  EXPECT_EQ(csv::format_double(0.1), "0.1");
}

TEST(Csv, TextTable) {
  const auto t = csv::parse_table("method,value\nproposed,0.5\ndblasso,1\n", "mem");
  EXPECT_EQ(t.column("value"), 1);
  EXPECT_EQ(t.column("missing"), -1);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][0], "dblasso");
  EXPECT_THROW(csv::parse_table("a,b\n1\n", "mem"), DataError);
}

TEST(Dataset, Validation) {
  const MatrixXd X = MatrixXd::Ones(3, 2);
  const VectorXd y = VectorXd::Ones(3);
  EXPECT_NO_THROW(LmmDataset::from_arrays({y}, {X}, {0, 1}));
  EXPECT_THROW(LmmDataset::from_arrays({}, {}, {0}), DataError);
  EXPECT_THROW(LmmDataset::from_arrays({y}, {X}, {0, 0}), DataError);
  EXPECT_THROW(LmmDataset::from_arrays({y}, {X}, {2}), DataError);
  EXPECT_THROW(LmmDataset::from_arrays({y}, {X}, {}), DataError);
  EXPECT_THROW(LmmDataset::from_arrays({VectorXd::Ones(2)}, {X}, {0}), DataError);
  MatrixXd bad = X;
  bad(1, 1) = INFINITY;
  EXPECT_THROW(LmmDataset::from_arrays({y}, {bad}, {0}), DataError);
}

TEST(Dataset, ZFollowsColumnMap) {
  rng::CounterRng g(3, {1});
  const MatrixXd X = g.normal_matrix(4, 3);
  const auto d = LmmDataset::from_arrays({g.normal_vector(4)}, {X}, {2, 0});
  EXPECT_EQ(d.q(), 2);
  EXPECT_EQ(d.block(0).Z.col(0), X.col(2));
  EXPECT_EQ(d.block(0).Z.col(1), X.col(0));
  EXPECT_EQ(d.z_column_of(2), 0);
  EXPECT_EQ(d.z_column_of(1), -1);
}

TEST(Dataset, ManifestRoundTrip) {
  const auto data = fixtures::random_lmm(4, 3, 5, 3, VectorXd::Ones(3), VectorXd::Ones(3));
  const auto dir = scratch_dir("manifest");
  write_dataset(data, dir);
  const auto back = load_manifest(dir / "manifest.json");
  ASSERT_EQ(back.n(), data.n());
  EXPECT_EQ(back.column_map(), data.column_map());
  for (std::size_t i = 0; i < data.n(); ++i) {
    EXPECT_EQ(back.block(i).y, data.block(i).y);
    EXPECT_EQ(back.block(i).X, data.block(i).X);
    EXPECT_EQ(back.block(i).subject_id, data.block(i).subject_id);
  }
}

TEST(Dataset, ManifestErrors) {
  const auto dir = scratch_dir("manifest_err");
  write_text(dir / "s.csv", "1,2,3\n4,5,6\n");
  write_text(dir / "m1.json", R"({"files": ["s.csv"], "column_map": [5]})");
  EXPECT_THROW(load_manifest(dir / "m1.json"), DataError);
  write_text(dir / "m2.json", R"({"files": "s.csv"})");
  EXPECT_THROW(load_manifest(dir / "m2.json"), DataError);
  write_text(dir / "m3.json", R"({"files": ["missing.csv"]})");
  EXPECT_THROW(load_manifest(dir / "m3.json"), DataError);
  write_text(dir / "m4.json", R"({"files": ["s.csv"]})");
  const auto d = load_manifest(dir / "m4.json");
  EXPECT_EQ(d.p(), 2);
  EXPECT_EQ(d.q(), 2);
  EXPECT_EQ(d.block(0).subject_id, "s");
}

TEST(Dataset, NeighborhoodAndReinsertion) {
  rng::CounterRng g(5, {1});
  const std::vector<MatrixXd> Y = {g.normal_matrix(6, 4), g.normal_matrix(5, 4)};
  for (Index node = 0; node < 4; ++node) {
    const auto d = make_neighborhood_dataset(Y, node);
    EXPECT_EQ(d.p(), 3);
    for (std::size_t i = 0; i < Y.size(); ++i) {
      EXPECT_EQ(d.block(i).y, Y[i].col(node));
      EXPECT_EQ(reinsert_column(d.block(i).X, d.block(i).y, node), Y[i]);
    }
  }
  EXPECT_THROW(make_neighborhood_dataset(Y, 4), DataError);
  EXPECT_THROW(make_neighborhood_dataset({MatrixXd::Ones(3, 1)}, 0), DataError);
}

TEST(Dataset, CenterColumns) {
  MatrixXd Y(3, 2);
  Y << 1, 10, 2, 20, 3, 30;
  const MatrixXd C = center_columns(Y);
  EXPECT_NEAR(C.colwise().sum().norm(), 0.0, 1e-14);
  EXPECT_DOUBLE_EQ(C(0, 1), -10.0);
  EXPECT_THROW(center_columns(MatrixXd::Ones(1, 2)), DataError);
}

TEST(Partition, SizesAndDeterminism) {
  for (std::size_t n : {3u, 10u, 31u}) {
    for (std::size_t k : {2u, 3u}) {
      if (k > n) continue;
      const auto p = partition_subjects(n, PartitionKind::cv_folds, k, 11);
      const auto sizes = p.sizes();
      ASSERT_EQ(sizes.size(), k);
      std::size_t total = 0;
      for (auto s : sizes) {
        EXPECT_LE(s, n / k + 1);
        EXPECT_GE(s, n / k);
        total += s;
      }
      EXPECT_EQ(total, n);
      EXPECT_EQ(p.assignment, partition_subjects(n, PartitionKind::cv_folds, k, 11).assignment);
      std::set<std::size_t> all;
      for (std::size_t f = 0; f < k; ++f) {
        const auto mem = p.members(f);
        const auto comp = p.complement(f);
        EXPECT_EQ(mem.size() + comp.size(), n);
        all.insert(mem.begin(), mem.end());
      }
      EXPECT_EQ(all.size(), n);
    }
  }
  EXPECT_THROW(partition_subjects(2, PartitionKind::three_way_split, 3, 0), DataError);
  EXPECT_THROW(partition_subjects(5, PartitionKind::cv_folds, 1, 0), DataError);
}

TEST(Parallel, RunsEveryIndexAndRethrows) {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw NumericalError("boom");
                            }),
               NumericalError);
  EXPECT_GE(resolve_threads(0), 1u);
  EXPECT_EQ(resolve_threads(3), 3u);
}
