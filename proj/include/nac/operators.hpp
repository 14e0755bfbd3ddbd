#pragma once

#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nac/graph.hpp"
#include "nac/init.hpp"
#include "nac/ops.hpp"

namespace nac {

enum class OperatorTag { Mlp, Gcn, GatStd, GatLinear, GatCos, Gin, SageMean, SageMax, ChebK, GeniePath };

struct OperatorKind {
  OperatorTag tag = OperatorTag::Gcn;
  int cheb_order = 2;  // ChebK only

  friend bool operator==(const OperatorKind&, const OperatorKind&) = default;
};

inline OperatorKind parse_operator(std::string_view name) {
  if (name == "mlp") return {OperatorTag::Mlp};
  if (name == "gcn") return {OperatorTag::Gcn};
  if (name == "gat") return {OperatorTag::GatStd};
  if (name == "gat_linear") return {OperatorTag::GatLinear};
  if (name == "gat_cos") return {OperatorTag::GatCos};
  if (name == "gin") return {OperatorTag::Gin};
  if (name == "sage_mean") return {OperatorTag::SageMean};
  if (name == "sage_max") return {OperatorTag::SageMax};
  if (name == "cheb") return {OperatorTag::ChebK};
  if (name == "geniepath") return {OperatorTag::GeniePath};
  throw std::invalid_argument("unknown operator '" + std::string(name) +
                              "' (expected one of mlp, gcn, gat, gat_linear, gat_cos, gin, sage_mean, "
                              "sage_max, cheb, geniepath)");
}

inline std::string operator_name(const OperatorKind& k) {
  switch (k.tag) {
    case OperatorTag::Mlp: return "mlp";
    case OperatorTag::Gcn: return "gcn";
    case OperatorTag::GatStd: return "gat";
    case OperatorTag::GatLinear: return "gat_linear";
    case OperatorTag::GatCos: return "gat_cos";
    case OperatorTag::Gin: return "gin";
    case OperatorTag::SageMean: return "sage_mean";
    case OperatorTag::SageMax: return "sage_max";
    case OperatorTag::ChebK: return "cheb";
    case OperatorTag::GeniePath: return "geniepath";
  }
  return "?";
}

inline std::vector<OperatorKind> parse_operator_list(std::string_view csv, int cheb_order = 2) {
  std::vector<OperatorKind> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string_view::npos) comma = csv.size();
    std::string_view tok = csv.substr(pos, comma - pos);
    if (!tok.empty()) {
      OperatorKind k = parse_operator(tok);
      k.cheb_order = cheb_order;
      out.push_back(k);
    }
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("operator list is empty");
  return out;
}

// MLP, GCN, GAT, GIN, GeniePath, GraphSAGE (mean), ChebNet.
inline std::vector<OperatorKind> default_operator_set() {
  return parse_operator_list("mlp,gcn,gat,gin,geniepath,sage_mean,cheb");
}

inline constexpr double kAttentionSlope = 0.2;

// Propagation structures shared by every operator on one graph.
struct PreparedGraph {
  Index num_nodes = 0;
  SparseMatrix gcn;        // D~^{-1/2}(A+I)D~^{-1/2}
  SparseMatrix adjacency;  // A
  SparseMatrix self_loop;  // A + I, attention neighborhoods
  SparseMatrix mean;       // neighbor mean
  SparseMatrix cheb;       // 2L/lambda_max - I
  SparseMatrix features;   // X in CSR form

  static PreparedGraph from(const Graph& g, double lambda_max = kDefaultLambdaMax) {
    PreparedGraph p;
    p.num_nodes = g.num_nodes;
    p.gcn = gcn_renormalize(g).matrix;
    p.adjacency = nac::adjacency(g);
    p.self_loop = raw_self_loop(g).matrix;
    p.mean = mean_neighbor(g).matrix;
    p.cheb = cheb_scaled_laplacian(g, lambda_max).matrix;
    p.features = SparseMatrix::from_dense(g.features);
    return p;
  }
};

// Fixed per-operator parameters. Layout of `weights` by kind:
//   mlp, gcn, gat_cos      [W]
//   gat                    [W, a_src, a_dst]
//   gat_linear             [W, a_dst]
//   gin                    [W_1, W_2]           (perceptron layers)
//   sage_mean, sage_max    [W (2d x d)]
//   cheb                   [W_0 .. W_order]
//   geniepath              [W, a_src, a_dst, W_gate]
struct OperatorParams {
  OperatorKind kind;
  std::vector<Matrix> weights;
  double gin_eps = 0.0;

  Index parameter_count() const {
    Index n = 0;
    for (const auto& w : weights) n += w.size();
    return n;
  }
};

inline OperatorParams init_operator_params(const OperatorKind& kind, Index hidden, InitScheme scheme, Rng& rng) {
  if (hidden < 1) throw std::invalid_argument("init_operator_params: hidden_dim must be >= 1");
  OperatorParams p{kind, {}, 0.0};
  auto square = [&] { p.weights.push_back(init_matrix(scheme, hidden, hidden, rng)); };
  auto vec = [&] { p.weights.push_back(init_matrix(scheme, hidden, 1, rng)); };
  switch (kind.tag) {
    case OperatorTag::Mlp:
    case OperatorTag::Gcn:
    case OperatorTag::GatCos: square(); break;
    case OperatorTag::GatStd: square(); vec(); vec(); break;
    case OperatorTag::GatLinear: square(); vec(); break;
    case OperatorTag::Gin: square(); square(); break;
    case OperatorTag::SageMean:
    case OperatorTag::SageMax: p.weights.push_back(init_matrix(scheme, 2 * hidden, hidden, rng)); break;
    case OperatorTag::ChebK:
      if (kind.cheb_order < 0) throw std::invalid_argument("cheb order must be >= 0");
      for (int c = 0; c <= kind.cheb_order; ++c) square();
      break;
    case OperatorTag::GeniePath: square(); vec(); vec(); square(); break;
  }
  return p;
}

// Registers the parameters on a tape; `trainable` decides whether they
// receive gradients.
inline std::vector<Tensor> bind_params(Tape& tape, const OperatorParams& p, bool trainable) {
  std::vector<Tensor> out;
  out.reserve(p.weights.size());
  for (const auto& w : p.weights) out.push_back(tape.leaf(w, trainable));
  return out;
}

namespace detail {

inline Tensor attention_aggregate(const PreparedGraph& g, const Tensor& h, const Tensor& w, const Tensor& a_src,
                                  const Tensor& a_dst) {
  const Tensor scores = leaky_relu(edge_pair_sum(g.self_loop, matmul(h, a_src), matmul(h, a_dst)), kAttentionSlope);
  return edge_aggregate(g.self_loop, edge_softmax(g.self_loop, scores), matmul(h, w));
}

}  // namespace detail

inline Tensor apply_operator(const OperatorKind& kind, std::span<const Tensor> w, double gin_eps,
                             const PreparedGraph& g, const Tensor& h) {
  if (h.rows() != g.num_nodes) {
    throw ShapeError("apply_operator(" + operator_name(kind) + "): input " + shape_string(h.value()) + " for " +
                     std::to_string(g.num_nodes) + " nodes");
  }
  auto need = [&](std::size_t n) {
    if (w.size() != n) {
      throw ShapeError("apply_operator(" + operator_name(kind) + "): expected " + std::to_string(n) +
                       " parameter tensors, got " + std::to_string(w.size()));
    }
  };
  Tape& tape = h.tape();
  switch (kind.tag) {
    case OperatorTag::Mlp:
      need(1);
      return matmul(h, w[0]);
    case OperatorTag::Gcn:
      need(1);
      return spmm(g.gcn, matmul(h, w[0]));
    case OperatorTag::GatStd:
      need(3);
      return detail::attention_aggregate(g, h, w[0], w[1], w[2]);
    case OperatorTag::GatLinear: {
      need(2);
      const Tensor zero = tape.constant(Matrix::Zero(g.num_nodes, 1));
      const Tensor scores = edge_pair_sum(g.self_loop, zero, matmul(h, w[1]));
      return edge_aggregate(g.self_loop, edge_softmax(g.self_loop, scores), matmul(h, w[0]));
    }
    case OperatorTag::GatCos: {
      need(1);
      const Tensor z = matmul(h, w[0]);
      const Tensor zn = row_l2_normalize(z);
      return edge_aggregate(g.self_loop, edge_softmax(g.self_loop, edge_dot(g.self_loop, zn, zn)), z);
    }
    case OperatorTag::Gin: {
      need(2);
      const Tensor agg = add(spmm(g.adjacency, h), scale(h, 1.0 + gin_eps));
      return matmul(relu(matmul(agg, w[0])), w[1]);
    }
    case OperatorTag::SageMean:
      need(1);
      return matmul(concat_cols(h, spmm(g.mean, h)), w[0]);
    case OperatorTag::SageMax:
      need(1);
      return matmul(concat_cols(h, neighbor_max(g.adjacency, h)), w[0]);
    case OperatorTag::ChebK: {
      need(static_cast<std::size_t>(kind.cheb_order) + 1);
      Tensor prev = h;
      Tensor out = matmul(h, w[0]);
      if (kind.cheb_order == 0) return out;
      Tensor cur = spmm(g.cheb, h);
      out = add(out, matmul(cur, w[1]));
      for (int c = 2; c <= kind.cheb_order; ++c) {
        Tensor next = sub(scale(spmm(g.cheb, cur), 2.0), prev);
        out = add(out, matmul(next, w[static_cast<std::size_t>(c)]));
        prev = cur;
        cur = next;
      }
      return out;
    }
    case OperatorTag::GeniePath: {
      need(4);
      const Tensor gate = tanh(matmul(h, w[3]));
      return mul(gate, detail::attention_aggregate(g, h, w[0], w[1], w[2]));
    }
  }
  throw std::logic_error("apply_operator: bad tag");
}

inline Tensor apply_operator(const OperatorParams& p, std::span<const Tensor> w, const PreparedGraph& g,
                             const Tensor& h) {
  return apply_operator(p.kind, w, p.gin_eps, g, h);
}

}  // namespace nac
