#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nac/graph.hpp"
#include "nac/init.hpp"

namespace nac {

// {check, status, value, tolerance}; status is pass, fail or skipped.
struct Verdict {
  std::string check;
  std::string status;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;

  bool passed() const { return status == "pass"; }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"check", check}, {"status", status}, {"value", value}, {"tolerance", tolerance}};
    if (!detail.empty()) j["detail"] = detail;
    return j;
  }
};

inline Verdict make_verdict(std::string check, double value, double tolerance, bool ok, std::string detail = {}) {
  return {std::move(check), ok ? "pass" : "fail", value, tolerance, std::move(detail)};
}

inline Matrix ordered_product(const std::vector<Matrix>& ws) {
  if (ws.empty()) throw std::invalid_argument("ordered_product: empty weight list");
  Matrix p = ws.front();
  for (std::size_t i = 1; i < ws.size(); ++i) {
    if (p.cols() != ws[i].rows()) {
      throw ShapeError("ordered_product: " + shape_string(p) + " * " + shape_string(ws[i]));
    }
    p = p * ws[i];
  }
  return p;
}

inline Eigen::VectorXd singular_values(const Matrix& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

inline double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

// ----------------------------------------------------- output equivalence

// Linear GNN F = A^L X W_1 ... W_L W_o with square W_l.
struct LinearGnnInstance {
  SparseMatrix a;
  Matrix x;
  int depth = 1;
  std::vector<Matrix> weights;  // W_l(0)
  Matrix w_out;

  Matrix propagated() const {
    Matrix h = x;
    for (int l = 0; l < depth; ++l) h = a.multiply(h);
    return h;
  }
};

class SingularProductError : public std::runtime_error {
 public:
  explicit SingularProductError(double sigma_min)
      : std::runtime_error("product of initial weights is singular: smallest singular value " +
                           std::to_string(sigma_min)),
        sigma_min_(sigma_min) {}
  double sigma_min() const { return sigma_min_; }

 private:
  double sigma_min_;
};

inline constexpr double kSingularThreshold = 1e-8;

// (prod W_l(0))^{-1} prod W*_l W*_o
inline Matrix construct_tilde_wo(const std::vector<Matrix>& initial, const std::vector<Matrix>& trained,
                                 const Matrix& trained_out) {
  if (initial.size() != trained.size()) throw std::invalid_argument("construct_tilde_wo: depth mismatch");
  const Matrix p0 = ordered_product(initial);
  if (p0.rows() != p0.cols()) throw ShapeError("construct_tilde_wo: product must be square, got " + shape_string(p0));
  const Eigen::VectorXd sv = singular_values(p0);
  const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
  if (!(smin > kSingularThreshold)) throw SingularProductError(smin);
  const Matrix target = ordered_product(trained) * trained_out;
  return Eigen::MatrixXd(Eigen::MatrixXd(p0).partialPivLu().solve(Eigen::MatrixXd(target)));
}

struct EquivalenceReport {
  double discrepancy = 0.0;  // relative Frobenius
  double sigma_min = 0.0;
  bool pass = false;
};

// Compares A^L X prod W_l(0) W~_o with A^L X prod W*_l W*_o.
inline EquivalenceReport verify_output_equivalence(const LinearGnnInstance& inst, const std::vector<Matrix>& trained,
                                                   const Matrix& trained_out, double tol) {
  const Matrix tilde = construct_tilde_wo(inst.weights, trained, trained_out);
  const Matrix ax = inst.propagated();
  const Matrix lhs = ax * ordered_product(inst.weights) * tilde;
  const Matrix rhs = ax * ordered_product(trained) * trained_out;
  EquivalenceReport r;
  r.discrepancy = relative_frobenius(lhs, rhs);
  const Eigen::VectorXd sv = singular_values(ordered_product(inst.weights));
  r.sigma_min = sv(sv.size() - 1);
  r.pass = r.discrepancy <= tol;
  return r;
}

struct EquivalenceCase {
  LinearGnnInstance instance;
  std::vector<Matrix> trained;
  Matrix trained_out;
};

// Random instance with n <= max_nodes, d <= max_dim, L <= max_depth; initial
// weights orthogonal, "trained" weights Gaussian.
inline EquivalenceCase random_equivalence_case(Rng& rng, Index max_nodes = 64, Index max_dim = 16, int max_depth = 4) {
  std::uniform_int_distribution<Index> nodes(4, max_nodes);
  std::uniform_int_distribution<Index> dims(2, max_dim);
  std::uniform_int_distribution<int> depths(1, max_depth);
  std::uniform_int_distribution<Index> classes(2, 6);
  SynthParams p;
  p.nodes = nodes(rng);
  p.blocks = 2;
  p.p_in = 0.3;
  p.p_out = 0.05;
  const Dataset ds = sbm_graph(p, rng());
  EquivalenceCase c;
  LinearGnnInstance& inst = c.instance;
  inst.a = gcn_renormalize(ds.graph).matrix;
  const Index d = dims(rng);
  const Index k = classes(rng);
  inst.depth = depths(rng);
  inst.x = gaussian_matrix(p.nodes, d, rng);
  for (int l = 0; l < inst.depth; ++l) {
    inst.weights.push_back(orthogonal_matrix(d, d, rng));
    c.trained.push_back(gaussian_matrix(d, d, rng, 1.0 / std::sqrt(static_cast<double>(d))));
  }
  inst.w_out = gaussian_matrix(d, k, rng);
  c.trained_out = gaussian_matrix(d, k, rng);
  return c;
}

// -------------------------------------------------------------- coherence

struct CoherenceReport {
  Index n = 0;
  Index k = 0;
  double phi = 0.0;                 // max |cos| over distinct columns
  double mean_abs = 0.0;            // mean |cos| over distinct pairs
  std::vector<std::size_t> histogram;  // |cos| in 10 equal bins over [0,1]

  nlohmann::json to_json() const {
    return {{"n", n}, {"k", k}, {"phi", phi}, {"mean_abs", mean_abs}, {"histogram", histogram}};
  }
};

inline CoherenceReport mutual_coherence(const Matrix& d) {
  CoherenceReport r;
  r.n = d.rows();
  r.k = d.cols();
  r.histogram.assign(10, 0);
  Eigen::MatrixXd normed = d;
  for (Index j = 0; j < d.cols(); ++j) {
    const double norm = normed.col(j).norm();
    if (!(norm > 0.0)) throw std::invalid_argument("mutual_coherence: column " + std::to_string(j) + " is zero");
    normed.col(j) /= norm;
  }
  const Eigen::MatrixXd gram = normed.transpose() * normed;
  std::size_t pairs = 0;
  for (Index i = 0; i < d.cols(); ++i) {
    for (Index j = i + 1; j < d.cols(); ++j) {
      const double c = std::min(1.0, std::abs(gram(i, j)));
      r.phi = std::max(r.phi, c);
      r.mean_abs += c;
      ++r.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(c * 10.0))];
      ++pairs;
    }
  }
  if (pairs > 0) r.mean_abs /= static_cast<double>(pairs);
  return r;
}

// --------------------------------------------------------------- spectrum

struct SpectrumReport {
  std::string scheme;
  std::vector<double> singular_values;  // descending
  double condition = 0.0;

  nlohmann::json to_json() const {
    return {{"scheme", scheme}, {"singular_values", singular_values}, {"condition", condition}};
  }
};

inline SpectrumReport spectrum(const std::vector<Matrix>& weights, std::string scheme = {}) {
  for (const auto& w : weights) {
    if (w.rows() != w.cols()) throw ShapeError("spectrum: weights must be square, got " + shape_string(w));
  }
  SpectrumReport r;
  r.scheme = std::move(scheme);
  const Eigen::VectorXd sv = singular_values(ordered_product(weights));
  r.singular_values.assign(sv.data(), sv.data() + sv.size());
  std::sort(r.singular_values.begin(), r.singular_values.end(), std::greater<>());
  const double smin = r.singular_values.back();
  r.condition = smin > 0.0 ? r.singular_values.front() / smin : std::numeric_limits<double>::infinity();
  return r;
}

inline std::vector<Matrix> random_weight_stack(InitScheme scheme, Index dim, int depth, Rng& rng) {
  std::vector<Matrix> ws;
  for (int l = 0; l < depth; ++l) ws.push_back(init_matrix(scheme, dim, dim, rng));
  return ws;
}

// ---------------------------------------------------------- dictionary form

enum class DictionaryFamily { Gcn, Cheb };

// One linear layer sum_s P_s H W_s.
struct PolynomialLayer {
  std::vector<Matrix> polys;
  std::vector<Matrix> weights;
};

struct DictionaryForm {
  Matrix d;  // || { P_{s_L} ... P_{s_1} X }
  Matrix w;  // stacked { W_{s_1} ... W_{s_L} }
};

// Expands a stack of polynomial layers into D W: every choice of one term per
// layer contributes the atom (P_{s_L} ... P_{s_1}) X and the block W_{s_1} ... W_{s_L}.
inline DictionaryForm expand_dictionary(const Matrix& x, const std::vector<PolynomialLayer>& layers) {
  struct Partial {
    Matrix atom;
    Matrix block;
  };
  std::vector<Partial> parts{{x, Matrix::Identity(x.cols(), x.cols())}};
  for (const auto& layer : layers) {
    if (layer.polys.size() != layer.weights.size()) throw std::invalid_argument("expand_dictionary: term mismatch");
    std::vector<Partial> next;
    for (const auto& p : parts) {
      for (std::size_t s = 0; s < layer.polys.size(); ++s) {
        next.push_back({layer.polys[s] * p.atom, p.block * layer.weights[s]});
      }
    }
    parts = std::move(next);
  }
  DictionaryForm f;
  const Index out_dim = parts.front().block.cols();
  f.d.resize(x.rows(), x.cols() * static_cast<Index>(parts.size()));
  f.w.resize(x.cols() * static_cast<Index>(parts.size()), out_dim);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Index off = static_cast<Index>(i) * x.cols();
    f.d.middleCols(off, x.cols()) = parts[i].atom;
    f.w.middleRows(off, x.cols()) = parts[i].block;
  }
  return f;
}

inline Matrix stacked_linear_output(const Matrix& x, const std::vector<PolynomialLayer>& layers) {
  Matrix h = x;
  for (const auto& layer : layers) {
    Matrix next = Matrix::Zero(h.rows(), layer.weights.front().cols());
    for (std::size_t s = 0; s < layer.polys.size(); ++s) next += layer.polys[s] * h * layer.weights[s];
    h = std::move(next);
  }
  return h;
}

// GCN family: terms {I, A_hat} (a linear mlp/gcn mixture); Cheb family:
// {T_0, T_1, T_2} of the scaled Laplacian.
inline std::vector<PolynomialLayer> polynomial_layers(const Graph& g, DictionaryFamily family, int depth, Index dim,
                                                      Rng& rng) {
  std::vector<Matrix> polys;
  const Index n = g.num_nodes;
  const Matrix eye = Matrix::Identity(n, n);
  if (family == DictionaryFamily::Gcn) {
    polys = {eye, gcn_renormalize(g).matrix.to_dense()};
  } else {
    const Matrix lh = cheb_scaled_laplacian(g).matrix.to_dense();
    polys = {eye, lh, 2.0 * lh * lh - eye};
  }
  std::vector<PolynomialLayer> layers;
  for (int l = 0; l < depth; ++l) {
    PolynomialLayer layer;
    layer.polys = polys;
    for (std::size_t s = 0; s < polys.size(); ++s) layer.weights.push_back(gaussian_matrix(dim, dim, rng));
    layers.push_back(std::move(layer));
  }
  return layers;
}

// Frobenius residual between the stacked linear network and D W. Skipped
// when the network has activations.
inline Verdict dictionary_form_check(const Graph& g, DictionaryFamily family, int depth, Index dim, bool nonlinear,
                                     Rng& rng, double tol = 1e-10) {
  if (nonlinear) return {"dictionary-form", "skipped", 0.0, tol, "nonlinear: out of corollary scope"};
  std::vector<PolynomialLayer> layers = polynomial_layers(g, family, depth, dim, rng);
  const Matrix x = gaussian_matrix(g.num_nodes, dim, rng);
  const DictionaryForm f = expand_dictionary(x, layers);
  const double residual = (stacked_linear_output(x, layers) - f.d * f.w).norm();
  return make_verdict("dictionary-form", residual, tol, residual <= tol,
                      "atoms=" + std::to_string(f.d.cols() / dim));
}

// --------------------------------------------------------- CE convergence

struct ConvergenceReport {
  std::string status;  // pass | warning
  std::vector<double> loss;
  std::vector<double> distance;  // ||w_s - w_T||
  double decay = 0.0;            // fitted geometric factor of `distance`
  bool strictly_decreasing = false;
  bool separable = false;
  Matrix first_gradient;

  nlohmann::json to_json() const {
    return {{"status", status},
            {"decay", decay},
            {"strictly_decreasing", strictly_decreasing},
            {"separable", separable},
            {"loss", loss}};
  }
};

// Two Gaussian blobs in the plane, classes 0/1, balanced.
inline void separable_blobs(Index per_class, double gap, Rng& rng, Matrix& x, std::vector<Index>& y) {
  x = gaussian_matrix(2 * per_class, 2, rng, 0.3);
  y.assign(static_cast<std::size_t>(2 * per_class), 0);
  for (Index i = 0; i < 2 * per_class; ++i) {
    const bool one = i >= per_class;
    x(i, 0) += one ? gap : -gap;
    y[static_cast<std::size_t>(i)] = one ? 1 : 0;
  }
}

// Perceptron with bias; converges within `epochs` iff the data is linearly separable (margin permitting).
inline bool linearly_separable(const Matrix& x, const std::vector<Index>& y, int epochs = 1000) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols() + 1);
  for (int e = 0; e < epochs; ++e) {
    bool clean = true;
    for (Index i = 0; i < x.rows(); ++i) {
      const double s = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
      const double f = x.row(i).dot(w.head(x.cols())) + w(x.cols());
      if (s * f <= 0.0) {
        w.head(x.cols()) += s * x.row(i).transpose();
        w(x.cols()) += s;
        clean = false;
      }
    }
    if (clean) return true;
  }
  return false;
}

// Gradient descent on mean softmax cross-entropy of a linear model x W
// (W: features x 2, zero init).
inline ConvergenceReport ce_convergence_probe(const Matrix& x, const std::vector<Index>& y, int steps, double lr,
                                              int fit_steps = 100) {
  ConvergenceReport r;
  r.separable = linearly_separable(x, y);
  const Index n = x.rows();
  Matrix w = Matrix::Zero(x.cols(), 2);
  std::vector<Matrix> iterates{w};
  auto loss_and_grad = [&](const Matrix& wm, Matrix& grad) {
    const Matrix z = x * wm;
    grad = Matrix::Zero(wm.rows(), wm.cols());
    Matrix dz(n, 2);
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double mx = z.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (z.row(i).array() - mx).exp().matrix();
      const double s = e.sum();
      const Index t = y[static_cast<std::size_t>(i)];
      loss += -(z(i, t) - mx - std::log(s));
      dz.row(i) = e / s;
      dz(i, t) -= 1.0;
    }
    grad = x.transpose() * dz / static_cast<double>(n);
    return loss / static_cast<double>(n);
  };
  Matrix grad;
  for (int s = 0; s < steps; ++s) {
    r.loss.push_back(loss_and_grad(w, grad));
    if (s == 0) r.first_gradient = grad;
    w -= lr * grad;
    iterates.push_back(w);
  }
  r.strictly_decreasing = true;
  for (std::size_t i = 1; i < r.loss.size(); ++i) r.strictly_decreasing &= r.loss[i] < r.loss[i - 1];
  for (const auto& it : iterates) r.distance.push_back((it - iterates.back()).norm());
  // least-squares slope of log distance over the first fit_steps iterates
  const int m = std::min<int>(fit_steps, static_cast<int>(r.distance.size()) - 1);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int s = 0; s < m; ++s) {
    if (!(r.distance[static_cast<std::size_t>(s)] > 0.0)) break;
    const double ly = std::log(r.distance[static_cast<std::size_t>(s)]);
    sx += s;
    sy += ly;
    sxx += static_cast<double>(s) * s;
    sxy += s * ly;
    ++cnt;
  }
  if (cnt >= 2) {
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    r.decay = std::exp(slope);
  }
  r.status = r.separable ? "pass" : "warning";
  return r;
}

}  // namespace nac
