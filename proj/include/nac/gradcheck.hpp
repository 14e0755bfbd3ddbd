#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <string>
#include <vector>

#include "nac/search.hpp"
#include "nac/theory.hpp"

namespace nac {

inline constexpr double kFiniteDifferenceStep = 1e-6;

// ||a - b|| / max(||a||, ||b||); both near zero counts as agreement.
inline double gradient_relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-10});
  return (analytic - numeric).norm() / scale;
}

// Central differences of a scalar function of a matrix.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x,
                               double h = kFiniteDifferenceStep) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f(x);
    x.data()[i] = keep - h;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline Matrix uniform_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

struct GradCheck {
  std::string name;
  double error = 0.0;
};

// 12-node two-block graph used by the gradient checks.
inline Dataset gradient_fixture(std::uint64_t seed) {
  SynthParams p;
  p.nodes = 12;
  p.blocks = 2;
  p.p_in = 0.5;
  p.p_out = 0.1;
  p.feature_dim = 6;
  p.feature_noise = 0.5;
  p.train_fraction = 0.5;
  p.val_fraction = 0.25;
  return sbm_graph(p, seed);
}

inline std::vector<OperatorKind> all_operator_kinds(int cheb_order = 2) {
  return parse_operator_list("mlp,gcn,gat,gat_linear,gat_cos,gin,sage_mean,sage_max,cheb,geniepath", cheb_order);
}

// d/dH of sum(R o op(H)) for every operator kind, and d/dalpha of the search
// objective (CE + rho |alpha|, alpha away from zero).
inline std::vector<GradCheck> gradient_suite(std::uint64_t seed, Index hidden = 5) {
  std::vector<GradCheck> out;
  const Dataset ds = gradient_fixture(seed);
  const PreparedGraph g = PreparedGraph::from(ds.graph);
  Rng rng(mix_seed(seed, 401));

  for (const auto& kind : all_operator_kinds()) {
    const OperatorParams params = init_operator_params(kind, hidden, InitScheme::Orthogonal, rng);
    const Matrix h0 = uniform_matrix(ds.graph.num_nodes, hidden, rng);
    const Matrix r = uniform_matrix(ds.graph.num_nodes, hidden, rng);
    auto value = [&](const Matrix& h) {
      Tape tape;
      const auto w = bind_params(tape, params, false);
      return apply_operator(params, w, g, tape.leaf(h)).value().cwiseProduct(r).sum();
    };
    Tape tape;
    const auto w = bind_params(tape, params, false);
    const Tensor h = tape.leaf(h0, true);
    const Tensor loss = sum(mul(apply_operator(params, w, g, h), tape.constant(r)));
    const Matrix analytic = tape.backward(loss).at(h);
    out.push_back({"operator:" + operator_name(kind), gradient_relative_error(analytic, numeric_gradient(value, h0))});
  }

  SearchSpaceConfig space;
  space.num_layers = 2;
  space.hidden_dim = hidden;
  space.operators = all_operator_kinds();
  Supernet net = build_supernet(space, ds.graph, seed);
  Matrix alpha = uniform_matrix(net.alpha.rows(), net.alpha.cols(), rng, 0.2, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (Index i = 0; i < alpha.size(); ++i) {
    if (flip(rng)) alpha.data()[i] = -alpha.data()[i];
  }
  const double rho = 0.01;
  auto objective = [&](const Matrix& a) {
    net.alpha = a;
    Tape tape;
    const SupernetBinding b = bind_supernet(tape, net, g, {false, false, false});
    return nac_objective(net, b, g, ds.graph, ds.split, rho).total;
  };
  const Matrix numeric = numeric_gradient(objective, alpha);
  net.alpha = alpha;
  Tape tape;
  const SupernetBinding b = bind_supernet(tape, net, g, {true, false, false});
  const ObjectiveTerms terms = nac_objective(net, b, g, ds.graph, ds.split, rho);
  const Matrix analytic = tape.backward(terms.ce_loss).at(b.alpha) + rho * l1_subgradient(alpha);
  out.push_back({"objective:alpha", gradient_relative_error(analytic, numeric)});
  return out;
}

inline constexpr double kGradientTolerance = 1e-5;

inline Verdict gradient_verdict(const std::vector<GradCheck>& checks, double tol = kGradientTolerance) {
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    const double e = std::isfinite(c.error) ? c.error : std::numeric_limits<double>::infinity();
    if (e >= worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  return make_verdict("gradients", worst, tol, worst <= tol,
                      std::to_string(checks.size()) + " checks, worst " + worst_name);
}

}  // namespace nac
