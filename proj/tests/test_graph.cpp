#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "nac/datasets.hpp"
#include "nac/gradcheck.hpp"

using namespace nac;
namespace fs = std::filesystem;

namespace {

Graph make_graph(Index n, std::vector<std::pair<Index, Index>> edges) {
  Graph g;
  g.name = "fixture";
  g.num_nodes = n;
  g.edges = std::move(edges);
  g.features = Matrix::Identity(n, n);
  g.labels.assign(static_cast<std::size_t>(n), 0);
  g.num_classes = 1;
  return g;
}

Graph random_graph(Index n, double p, Rng& rng) {
  std::bernoulli_distribution keep(p);
  std::vector<std::pair<Index, Index>> e;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (keep(rng)) e.emplace_back(i, j);
    }
  }
  return make_graph(n, std::move(e));
}

// Random graph where every node has at least one neighbour.
Graph connected_ish_graph(Index n, Rng& rng) {
  Graph g = random_graph(n, 0.3, rng);
  std::set<std::pair<Index, Index>> e(g.edges.begin(), g.edges.end());
  for (Index i = 0; i + 1 < n; ++i) e.insert({i, i + 1});
  g.edges.assign(e.begin(), e.end());
  return g;
}

Matrix dense_adjacency(const Graph& g) {
  Matrix a = Matrix::Zero(g.num_nodes, g.num_nodes);
  for (const auto& [s, d] : g.edges) a(s, d) = a(d, s) = 1.0;
  return a;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("nac_graph_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

void write_triangle(const fs::path& dir) {
  write(dir / "graph.json", R"({"num_nodes": 3, "feature_dim": 2, "num_classes": 2, "name": "triangle"})");
  write(dir / "edges.csv", "0,1\n0,2\n1,2\n");
  write(dir / "features.csv", "1,0\n0,1\n0.5,0.5\n");
  write(dir / "labels.csv", "0\n1\n1\n");
  write(dir / "splits.json", R"({"train": [0], "val": [1], "test": [2]})");
}

std::string load_error(const fs::path& dir) {
  try {
    load_graph(dir);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ------------------------------------------------------------------ loader

TEST(LoadGraph, TriangleFixture) {
  TempDir d;
  write_triangle(d.path());
  const Dataset ds = load_graph(d.path());
  EXPECT_EQ(ds.graph.num_nodes, 3);
  EXPECT_EQ(ds.graph.edges.size(), 3u);
  EXPECT_EQ(ds.graph.feature_dim(), 2);
  EXPECT_EQ(ds.graph.name, "triangle");
  EXPECT_DOUBLE_EQ(ds.graph.features(2, 1), 0.5);
  EXPECT_EQ(ds.split.train(), std::vector<Index>{0});
}

TEST(LoadGraph, MissingFileNamed) {
  TempDir d;
  write_triangle(d.path());
  fs::remove(d.path() / "labels.csv");
  EXPECT_NE(load_error(d.path()).find("labels.csv"), std::string::npos);
}

TEST(LoadGraph, CountMismatchNamesFile) {
  TempDir d;
  write_triangle(d.path());
  write(d.path() / "features.csv", "1,0\n0,1\n");
  EXPECT_NE(load_error(d.path()).find("features.csv"), std::string::npos);
  write_triangle(d.path());
  write(d.path() / "features.csv", "1,0\n0,1,3\n0,0\n");
  EXPECT_NE(load_error(d.path()).find("features.csv:2"), std::string::npos);
}

TEST(LoadGraph, OutOfRangeNamesFileAndLine) {
  TempDir d;
  write_triangle(d.path());
  write(d.path() / "edges.csv", "0,1\n1,7\n");
  EXPECT_NE(load_error(d.path()).find("edges.csv:2"), std::string::npos);
  write_triangle(d.path());
  write(d.path() / "labels.csv", "0\n1\n5\n");
  EXPECT_NE(load_error(d.path()).find("labels.csv:3"), std::string::npos);
  write_triangle(d.path());
  write(d.path() / "splits.json", R"({"train": [0], "val": [0], "test": [2]})");
  EXPECT_NE(load_error(d.path()).find("splits.json"), std::string::npos);
}

TEST(LoadGraph, RejectsSelfLoopsAndReversedEdges) {
  TempDir d;
  write_triangle(d.path());
  write(d.path() / "edges.csv", "1,1\n");
  EXPECT_NE(load_error(d.path()).find("edges.csv:1"), std::string::npos);
  write(d.path() / "edges.csv", "2,0\n");
  EXPECT_NE(load_error(d.path()).find("src < dst"), std::string::npos);
}

TEST(LoadGraph, RoundTripIsExact) {
  TempDir d;
  SynthParams p;
  p.nodes = 30;
  p.blocks = 3;
  p.feature_dim = 8;
  p.feature_noise = 0.7;
  const Dataset ds = sbm_graph(p, 4);
  save_graph(ds, d.path());
  const Dataset back = load_graph(d.path());
  EXPECT_EQ(back.graph.edges, ds.graph.edges);
  EXPECT_EQ(back.graph.features, ds.graph.features);
  EXPECT_EQ(back.graph.labels, ds.graph.labels);
  EXPECT_EQ(back.split.train(), ds.split.train());
  EXPECT_EQ(back.split.val(), ds.split.val());
  EXPECT_EQ(back.split.test(), ds.split.test());
  TempDir again;
  save_graph(back, again.path());
  for (const char* f : kDatasetFiles) {
    EXPECT_EQ(file_checksum((d.path() / f).string()), file_checksum((again.path() / f).string())) << f;
  }
}

TEST(ResolveDataset, DirectoryChecksumsAndRowNormalisation) {
  TempDir d;
  write_triangle(d.path());
  const ResolvedDataset r = resolve_dataset(d.path().string(), true);
  for (const char* f : kDatasetFiles) EXPECT_TRUE(r.checksums.contains(f)) << f;
  EXPECT_TRUE(r.row_normalized);
  EXPECT_DOUBLE_EQ(r.data.graph.features.row(2).sum(), 1.0);
  EXPECT_FALSE(resolve_dataset(d.path().string()).row_normalized);
  EXPECT_THROW(resolve_dataset((d.path() / "nope").string()), DatasetError);
}

TEST(ResolveDataset, SyntheticSpecs) {
  const ResolvedDataset cora = resolve_dataset("synth:cora-like");
  EXPECT_EQ(cora.data.graph.num_classes, 7);
  EXPECT_EQ(cora.data.graph.feature_dim(), 1433);
  EXPECT_EQ(cora.data.graph.num_nodes, 2708);
  EXPECT_EQ(cora.data.split.train().size(), 140u);
  EXPECT_EQ(cora.data.split.val().size(), 500u);
  EXPECT_EQ(cora.data.split.test_size(), 1000u);
  EXPECT_TRUE(cora.row_normalized);
  EXPECT_EQ(resolve_dataset("synth:sbm:3").checksums["content"], resolve_dataset("synth:sbm:3").checksums["content"]);
  EXPECT_NE(resolve_dataset("synth:sbm:3").checksums["content"], resolve_dataset("synth:sbm:4").checksums["content"]);
  EXPECT_THROW(resolve_dataset("synth:sbm:x"), std::invalid_argument);
  EXPECT_THROW(resolve_dataset("synth:unknown"), std::invalid_argument);
}

TEST(Split, TestReadsAreCounted) {
  const Dataset ds = sbm_graph(SynthParams{}, 1);
  EXPECT_EQ(ds.split.test_reads(), 0u);
  (void)ds.split.test_size();
  EXPECT_EQ(ds.split.test_reads(), 0u);
  (void)ds.split.test();
  EXPECT_EQ(ds.split.test_reads(), 1u);
}

// ---------------------------------------------------------- propagation

TEST(GcnRenormalize, SingleEdgeIsAllHalves) {
  const Matrix a = gcn_renormalize(make_graph(2, {{0, 1}})).matrix.to_dense();
  EXPECT_LE(max_abs(a - Matrix::Constant(2, 2, 0.5)), 1e-15);
}

TEST(GcnRenormalize, IsolatedNodeIsOne) {
  EXPECT_EQ(gcn_renormalize(make_graph(1, {})).matrix.to_dense(), Matrix::Ones(1, 1));
}

TEST(GcnRenormalize, MatchesDenseOracleAndIsSymmetric) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = random_graph(10, 0.3, rng);
    const Matrix at = dense_adjacency(g) + Matrix::Identity(10, 10);
    const Eigen::VectorXd dinv = at.rowwise().sum().array().rsqrt();
    const Matrix oracle = dinv.asDiagonal() * at * dinv.asDiagonal();
    const Matrix got = gcn_renormalize(g).matrix.to_dense();
    EXPECT_LE(max_abs(got - oracle), 1e-12);
    EXPECT_LE(max_abs(got - got.transpose()), 1e-12);
  }
}

// degrees (1, 1): off-diagonal is -1 / sqrt(1 * 1)
TEST(SymLaplacian, SingleEdge) {
  Matrix expect(2, 2);
  expect << 1, -1, -1, 1;
  EXPECT_LE(max_abs(sym_laplacian(make_graph(2, {{0, 1}})).matrix.to_dense() - expect), 1e-15);
}

TEST(SymLaplacian, CompleteK3) {
  const Matrix l = sym_laplacian(make_graph(3, {{0, 1}, {0, 2}, {1, 2}})).matrix.to_dense();
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(l(i, j), i == j ? 1.0 : -0.5, 1e-15);
  }
}

TEST(SymLaplacian, IsolatedNodeErrorNamesNode) {
  try {
    sym_laplacian(make_graph(3, {{0, 1}}));
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("node 2"), std::string::npos) << e.what();
  }
}

TEST(SymLaplacian, SymmetricWithEigenvaluesInZeroTwo) {
  Rng rng(12);
  const Graph g = connected_ish_graph(20, rng);
  const Matrix l = sym_laplacian(g).matrix.to_dense();
  EXPECT_LE(max_abs(l - l.transpose()), 1e-12);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues();
  EXPECT_GE(ev.minCoeff(), -1e-12);
  EXPECT_LE(ev.maxCoeff(), 2.0 + 1e-12);
}

TEST(ChebScaled, SingleEdgeLambdaTwo) {
  Matrix expect(2, 2);
  expect << 0, -1, -1, 0;
  EXPECT_LE(max_abs(cheb_scaled_laplacian(make_graph(2, {{0, 1}}), 2.0).matrix.to_dense() - expect), 1e-15);
}

TEST(ChebScaled, AffineMapOfLaplacian) {
  Rng rng(2);
  const Graph g = connected_ish_graph(8, rng);
  const Matrix l = sym_laplacian(g).matrix.to_dense();
  EXPECT_LE(max_abs(cheb_scaled_laplacian(g, 2.0).matrix.to_dense() - (l - Matrix::Identity(8, 8))), 1e-15);
  EXPECT_LE(max_abs(cheb_scaled_laplacian(g, 1.5).matrix.to_dense() - (l * (2.0 / 1.5) - Matrix::Identity(8, 8))),
            1e-14);
}

TEST(ChebScaled, SpectralRadiusWithExactLambdaMax) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = connected_ish_graph(15, rng);
    const Matrix l = sym_laplacian(g).matrix.to_dense();
    const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(l).eigenvalues().maxCoeff();
    const Matrix lh = cheb_scaled_laplacian(g, lmax).matrix.to_dense();
    // power iteration on the symmetric matrix
    Eigen::VectorXd v = Eigen::VectorXd::Ones(15).normalized();
    double rho = 0.0;
    for (int it = 0; it < 2000; ++it) {
      Eigen::VectorXd w = lh * v;
      rho = w.norm();
      v = w / rho;
    }
    EXPECT_LE(rho, 1.0 + 1e-6);
  }
}

TEST(ChebScaled, RejectsNonPositiveLambda) {
  EXPECT_THROW(cheb_scaled_laplacian(make_graph(2, {{0, 1}}), 0.0), std::invalid_argument);
  EXPECT_THROW(cheb_scaled_laplacian(make_graph(2, {{0, 1}}), -1.0), std::invalid_argument);
}

TEST(MeanNeighbor, TwoNeighboursAndIsolated) {
  const Matrix m = mean_neighbor(make_graph(4, {{0, 1}, {0, 2}})).matrix.to_dense();
  EXPECT_DOUBLE_EQ(m(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(m(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.0);
  EXPECT_EQ(m.row(3), Matrix::Zero(1, 4));
}

TEST(MeanNeighbor, RowSumsAreZeroOrOne) {
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = mean_neighbor(random_graph(25, 0.08, rng)).matrix.to_dense();
    for (Index i = 0; i < m.rows(); ++i) {
      const double s = m.row(i).sum();
      EXPECT_TRUE(std::abs(s) <= 1e-12 || std::abs(s - 1.0) <= 1e-12) << s;
    }
  }
}

TEST(Propagation, AllMatricesAreNByN) {
  Rng rng(3);
  const Graph g = random_graph(13, 0.2, rng);
  for (const auto& m : {gcn_renormalize(g).matrix, cheb_scaled_laplacian(g).matrix, mean_neighbor(g).matrix,
                        raw_self_loop(g).matrix, adjacency(g)}) {
    EXPECT_EQ(m.rows(), 13);
    EXPECT_EQ(m.cols(), 13);
  }
}

// --------------------------------------------------------------- synthetic

TEST(Synth, SbmExample) {
  SynthParams p;
  p.blocks = 2;
  p.nodes = 20;
  p.p_in = 0.5;
  p.p_out = 0.05;
  const Dataset ds = sbm_graph(p, 7);
  EXPECT_EQ(ds.graph.num_nodes, 20);
  EXPECT_EQ(ds.graph.num_classes, 2);
  for (Index i = 0; i < 20; ++i) EXPECT_EQ(ds.graph.labels[static_cast<std::size_t>(i)], i < 10 ? 0 : 1);
}

TEST(Synth, StarHasNMinusOneEdges) {
  SynthParams p;
  p.nodes = 5;
  EXPECT_EQ(star_graph(p, 0).graph.edges.size(), 4u);
}

TEST(Synth, GridEdgeCount) {
  SynthParams p;
  p.grid_rows = 3;
  p.grid_cols = 4;
  EXPECT_EQ(grid_graph(p, 0).graph.edges.size(), static_cast<std::size_t>(3 * 3 + 2 * 4));
}

TEST(Synth, SameSeedSameGraph) {
  for (auto kind : {SynthKind::Sbm, SynthKind::Grid, SynthKind::Star, SynthKind::Citation}) {
    SynthParams p;
    p.nodes = 40;
    p.feature_dim = 12;
    const Dataset a = synth_graph(kind, p, 42);
    const Dataset b = synth_graph(kind, p, 42);
    EXPECT_EQ(a.graph.edges, b.graph.edges);
    EXPECT_EQ(a.graph.features, b.graph.features);
    EXPECT_EQ(a.split.train(), b.split.train());
  }
}

TEST(Synth, GraphInvariants) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset ds = citation_graph(pubmed_like_params(600), seed);
    EXPECT_NO_THROW(ds.graph.validate());
    EXPECT_NO_THROW(ds.split.validate(ds.graph.num_nodes));
    for (const auto& [s, d] : ds.graph.edges) EXPECT_LT(s, d);
    const auto deg = degrees(ds.graph);
    EXPECT_EQ(*std::min_element(deg.begin(), deg.end()) > 0, true);
  }
}

TEST(Synth, InvalidParams) {
  SynthParams p;
  p.nodes = 1;
  EXPECT_THROW(sbm_graph(p, 0), std::invalid_argument);
  EXPECT_THROW(star_graph(p, 0), std::invalid_argument);
  SynthParams q;
  q.p_in = 1.5;
  EXPECT_THROW(sbm_graph(q, 0), std::invalid_argument);
  EXPECT_THROW(parse_synth_kind("lattice"), std::invalid_argument);
}

TEST(Graph, ValidateRejectsBadLabelsAndSelfLoops) {
  Graph g = make_graph(3, {{0, 1}});
  g.labels[1] = 4;
  EXPECT_THROW(g.validate(), DatasetError);
  Graph h = make_graph(3, {{1, 1}});
  EXPECT_THROW(h.validate(), DatasetError);
}
