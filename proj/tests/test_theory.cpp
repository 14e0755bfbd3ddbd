#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "nac/theory.hpp"

using namespace nac;

namespace {

Graph small_graph(std::uint64_t seed, Index nodes = 12) {
  SynthParams p;
  p.nodes = nodes;
  p.p_in = 0.5;
  p.p_out = 0.1;
  return sbm_graph(p, seed).graph;
}

// Brute-force max |cos| between distinct columns.
double coherence_oracle(const Matrix& d) {
  double phi = 0.0;
  for (Index i = 0; i < d.cols(); ++i) {
    for (Index j = i + 1; j < d.cols(); ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (Index r = 0; r < d.rows(); ++r) {
        dot += d(r, i) * d(r, j);
        ni += d(r, i) * d(r, i);
        nj += d(r, j) * d(r, j);
      }
      phi = std::max(phi, std::abs(dot) / std::sqrt(ni * nj));
    }
  }
  return phi;
}

}  // namespace

// ------------------------------------------------------- output equivalence

TEST(TildeWo, IdentitySubstitutionReturnsTrainedOutput) {
  Rng rng(1);
  std::vector<Matrix> w;
  for (int l = 0; l < 3; ++l) w.push_back(orthogonal_matrix(5, 5, rng));
  const Matrix wo = gaussian_matrix(5, 3, rng);
  EXPECT_LE((construct_tilde_wo(w, w, wo) - wo).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TildeWo, SingleLayerClosedForm) {
  Rng rng(2);
  const Matrix w0 = orthogonal_matrix(4, 4, rng);
  const Matrix ws = gaussian_matrix(4, 4, rng);
  const Matrix wo = gaussian_matrix(4, 2, rng);
  // orthogonal inverse is the transpose
  EXPECT_LE((construct_tilde_wo({w0}, {ws}, wo) - w0.transpose() * ws * wo).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TildeWo, RefusesSingularProduct) {
  Rng rng(3);
  Matrix singular = orthogonal_matrix(4, 4, rng);
  singular.col(2) = singular.col(1);
  try {
    construct_tilde_wo({singular}, {Matrix::Identity(4, 4)}, Matrix::Ones(4, 2));
    FAIL() << "expected SingularProductError";
  } catch (const SingularProductError& e) {
    EXPECT_LT(e.sigma_min(), kSingularThreshold);
  }
  EXPECT_THROW(construct_tilde_wo({Matrix::Identity(2, 2)}, {}, Matrix::Ones(2, 1)), std::invalid_argument);
  EXPECT_THROW(construct_tilde_wo({Matrix::Ones(2, 3)}, {Matrix::Ones(2, 3)}, Matrix::Ones(3, 1)), ShapeError);
}

TEST(OutputEquivalence, IdentityGraphAndFeatures) {
  Rng rng(4);
  LinearGnnInstance inst;
  inst.a = SparseMatrix::identity(6);
  inst.x = Matrix::Identity(6, 6);
  inst.depth = 2;
  std::vector<Matrix> trained;
  for (int l = 0; l < 2; ++l) {
    inst.weights.push_back(orthogonal_matrix(6, 6, rng));
    trained.push_back(gaussian_matrix(6, 6, rng));
  }
  const Matrix wo = gaussian_matrix(6, 3, rng);
  const EquivalenceReport r = verify_output_equivalence(inst, trained, wo, 1e-10);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.discrepancy, 1e-10);
  EXPECT_NEAR(r.sigma_min, 1.0, 1e-10);
}

TEST(OutputEquivalence, RandomInstancesWithinTolerance) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const EquivalenceCase c = random_equivalence_case(rng);
    const EquivalenceReport r = verify_output_equivalence(c.instance, c.trained, c.trained_out, 1e-6);
    EXPECT_TRUE(r.pass) << "instance " << i << " discrepancy " << r.discrepancy;
  }
}

TEST(OutputEquivalence, PropagationAppliesDepthTimes) {
  const Graph g = small_graph(6);
  Rng rng(6);
  LinearGnnInstance inst;
  inst.a = gcn_renormalize(g).matrix;
  inst.x = gaussian_matrix(g.num_nodes, 3, rng);
  inst.depth = 3;
  const Matrix a = inst.a.to_dense();
  EXPECT_LE((inst.propagated() - a * a * a * inst.x).cwiseAbs().maxCoeff(), 1e-12);
}

// --------------------------------------------------------------- coherence

TEST(Coherence, CanonicalBasisIsExactlyZero) {
  const CoherenceReport r = mutual_coherence(Matrix::Identity(16, 8));
  EXPECT_EQ(r.phi, 0.0);
  EXPECT_EQ(r.histogram[0], 28u);
}

TEST(Coherence, OrthonormalBasisIsZeroToRoundOff) {
  Rng rng(7);
  EXPECT_LE(mutual_coherence(orthogonal_matrix(64, 16, rng)).phi, 1e-12);
}

TEST(Coherence, DuplicateColumnIsOne) {
  Rng rng(8);
  Matrix d = gaussian_matrix(10, 4, rng);
  d.col(3) = -2.5 * d.col(1);
  EXPECT_NEAR(mutual_coherence(d).phi, 1.0, 1e-12);
}

TEST(Coherence, MatchesBruteForceOracle) {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const Matrix d = gaussian_matrix(20, 7, rng);
    const CoherenceReport r = mutual_coherence(d);
    EXPECT_NEAR(r.phi, coherence_oracle(d), 1e-12);
    EXPECT_EQ(std::accumulate(r.histogram.begin(), r.histogram.end(), std::size_t{0}), 21u);
    EXPECT_LE(r.mean_abs, r.phi);
  }
}

TEST(Coherence, InvariantToColumnOrderAndScale) {
  Rng rng(10);
  const Matrix d = gaussian_matrix(30, 6, rng);
  Matrix p(30, 6);
  const std::vector<Index> perm{4, 0, 5, 2, 1, 3};
  for (Index j = 0; j < 6; ++j) p.col(j) = d.col(perm[static_cast<std::size_t>(j)]) * (0.1 + static_cast<double>(j));
  EXPECT_NEAR(mutual_coherence(p).phi, mutual_coherence(d).phi, 1e-12);
}

TEST(Coherence, ZeroColumnRejected) {
  Matrix d = Matrix::Identity(4, 3);
  d.col(1).setZero();
  EXPECT_THROW(mutual_coherence(d), std::invalid_argument);
}

// ---------------------------------------------------------------- spectrum

TEST(Spectrum, OrthogonalStackIsFlat) {
  Rng rng(11);
  const SpectrumReport r = spectrum(random_weight_stack(InitScheme::Orthogonal, 64, 3, rng), "orthogonal");
  EXPECT_LE(r.condition, 1.0 + 1e-5);
  for (double s : r.singular_values) EXPECT_NEAR(s, 1.0, 1e-10);
  EXPECT_EQ(r.to_json()["scheme"], "orthogonal");
}

TEST(Spectrum, SingleLayerIsThatMatrix) {
  Rng rng(12);
  const Matrix w = gaussian_matrix(5, 5, rng);
  const SpectrumReport r = spectrum({w});
  Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues();
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(r.singular_values[static_cast<std::size_t>(i)], sv(i), 1e-12);
  EXPECT_TRUE(std::is_sorted(r.singular_values.rbegin(), r.singular_values.rend()));
}

TEST(Spectrum, KaimingStackIsIllConditioned) {
  Rng rng(13);
  int worse = 0;
  for (int s = 0; s < 20; ++s) {
    worse += spectrum(random_weight_stack(InitScheme::KaimingNormal, 64, 3, rng)).condition > 1.0 + 1e-5;
  }
  EXPECT_EQ(worse, 20);
}

TEST(Spectrum, RejectsRectangular) {
  EXPECT_THROW(spectrum({Matrix::Ones(2, 3)}), ShapeError);
  EXPECT_THROW(spectrum({}), std::invalid_argument);
}

// --------------------------------------------------------- dictionary form

TEST(DictionaryForm, OneLayerGcnAtomsAreXAndAX) {
  const Graph g = small_graph(14);
  Rng rng(14);
  const auto layers = polynomial_layers(g, DictionaryFamily::Gcn, 1, 3, rng);
  const Matrix x = gaussian_matrix(g.num_nodes, 3, rng);
  const DictionaryForm f = expand_dictionary(x, layers);
  const Matrix a = gcn_renormalize(g).matrix.to_dense();
  ASSERT_EQ(f.d.cols(), 6);
  EXPECT_LE((f.d.leftCols(3) - x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((f.d.rightCols(3) - a * x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((f.w.topRows(3) - layers[0].weights[0]).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE((stacked_linear_output(x, layers) - f.d * f.w).norm(), 1e-12);
}

TEST(DictionaryForm, TwoLayerResidualOnTwentyGraphs) {
  Rng rng(15);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Verdict v = dictionary_form_check(small_graph(s, 16), DictionaryFamily::Gcn, 2, 4, false, rng);
    EXPECT_TRUE(v.passed()) << "graph " << s << " residual " << v.value;
    EXPECT_EQ(v.detail, "atoms=4");
  }
}

TEST(DictionaryForm, ChebFamily) {
  Rng rng(16);
  const Verdict v = dictionary_form_check(small_graph(3, 14), DictionaryFamily::Cheb, 2, 3, false, rng);
  EXPECT_TRUE(v.passed()) << v.value;
  EXPECT_EQ(v.detail, "atoms=9");
}

TEST(DictionaryForm, NonlinearIsSkipped) {
  Rng rng(17);
  const Verdict v = dictionary_form_check(small_graph(3), DictionaryFamily::Gcn, 2, 3, true, rng);
  EXPECT_EQ(v.status, "skipped");
  EXPECT_FALSE(v.passed());
}

// ----------------------------------------------------------- CE convergence

TEST(CeConvergence, SeparableBlobsConverge) {
  Rng rng(18);
  Matrix x;
  std::vector<Index> y;
  separable_blobs(50, 2.0, rng, x, y);
  const ConvergenceReport r = ce_convergence_probe(x, y, 300, 0.5);
  EXPECT_TRUE(r.separable);
  EXPECT_EQ(r.status, "pass");
  EXPECT_TRUE(r.strictly_decreasing);
  EXPECT_NEAR(r.loss.front(), std::log(2.0), 1e-12);
  EXPECT_GT(r.decay, 0.0);
  EXPECT_LT(r.decay, 1.0);
}

// At W = 0 both classes have probability 1/2, so the class-1 column of the
// gradient is (mean_0 - mean_1) / 4 for balanced classes.
TEST(CeConvergence, FirstGradientAlongMeanDifference) {
  Rng rng(19);
  Matrix x;
  std::vector<Index> y;
  separable_blobs(40, 1.5, rng, x, y);
  const Eigen::RowVectorXd mu0 = x.topRows(40).colwise().mean();
  const Eigen::RowVectorXd mu1 = x.bottomRows(40).colwise().mean();
  const ConvergenceReport r = ce_convergence_probe(x, y, 2, 0.1);
  EXPECT_LE((r.first_gradient.col(1).transpose() - (mu0 - mu1) / 4.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((r.first_gradient.col(0) + r.first_gradient.col(1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CeConvergence, OverlappingClassesWarn) {
  Rng rng(20);
  Matrix x;
  std::vector<Index> y;
  separable_blobs(50, 0.0, rng, x, y);
  EXPECT_FALSE(linearly_separable(x, y));
  EXPECT_EQ(ce_convergence_probe(x, y, 20, 0.5).status, "warning");
}
