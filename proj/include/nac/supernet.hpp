#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nac/hash.hpp"
#include "nac/operators.hpp"

namespace nac {

enum class Activation { Relu, Elu, Identity };

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Tensor activate(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Elu: return elu(x);
    case Activation::Identity: return x;
  }
  throw std::logic_error("activate: bad activation");
}

struct SearchSpaceConfig {
  int num_layers = 3;
  std::vector<OperatorKind> operators = default_operator_set();
  Index hidden_dim = 64;
  InitScheme init = InitScheme::Orthogonal;
  Activation activation = Activation::Relu;
  double lambda_max = kDefaultLambdaMax;

  void validate(Index num_classes) const {
    if (num_layers < 1) throw std::invalid_argument("search space: num_layers must be >= 1");
    if (operators.empty()) throw std::invalid_argument("search space: operator list is empty");
    if (hidden_dim < num_classes) {
      throw std::invalid_argument("search space: hidden_dim " + std::to_string(hidden_dim) +
                                  " smaller than num_classes " + std::to_string(num_classes));
    }
  }
};

// One-shot network of mixed layers. Everything except `alpha` (and `w_out` in
// the nac-plus mode) stays at its random initialization during a NAC search.
struct Supernet {
  SearchSpaceConfig config;
  Index num_classes = 0;
  Matrix alpha;                                    // L x K, starts at all ones
  Matrix input_proj;                               // F x hidden, orthonormal
  std::vector<Matrix> layer_weights;               // W^l, hidden x hidden
  Matrix w_out;                                    // hidden x C
  std::vector<std::vector<OperatorParams>> ops;    // [layer][operator]
  Matrix projected_input;                          // X * input_proj

  Index num_layers() const { return alpha.rows(); }
  Index num_operators() const { return alpha.cols(); }

  // Fingerprint of every weight that a nac-mode search must leave untouched.
  std::uint64_t fixed_weight_hash() const {
    Fnv1a h;
    h.update(input_proj);
    for (const auto& w : layer_weights) h.update(w);
    h.update(w_out);
    for (const auto& layer : ops) {
      for (const auto& p : layer) {
        for (const auto& w : p.weights) h.update(w);
        h.update(p.gin_eps);
      }
    }
    return h.digest();
  }

  // Weights excluding alpha and w_out.
  Index hidden_weight_count() const {
    Index n = input_proj.size();
    for (const auto& w : layer_weights) n += w.size();
    for (const auto& layer : ops) {
      for (const auto& p : layer) n += p.parameter_count();
    }
    return n;
  }
};

inline Supernet build_supernet(const SearchSpaceConfig& cfg, const Graph& graph, std::uint64_t seed) {
  cfg.validate(graph.num_classes);
  Supernet net;
  net.config = cfg;
  net.num_classes = graph.num_classes;
  const Index L = cfg.num_layers;
  const Index K = static_cast<Index>(cfg.operators.size());
  const Index d = cfg.hidden_dim;
  net.alpha = Matrix::Ones(L, K);

  Rng proj_rng(mix_seed(seed, 101));
  net.input_proj = orthogonal_matrix(graph.feature_dim(), d, proj_rng);
  Rng layer_rng(mix_seed(seed, 102));
  for (Index l = 0; l < L; ++l) net.layer_weights.push_back(init_matrix(cfg.init, d, d, layer_rng));
  Rng out_rng(mix_seed(seed, 103));
  net.w_out = init_matrix(cfg.init, d, graph.num_classes, out_rng);
  Rng op_rng(mix_seed(seed, 104));
  net.ops.resize(static_cast<std::size_t>(L));
  for (Index l = 0; l < L; ++l) {
    for (const auto& kind : cfg.operators) {
      net.ops[static_cast<std::size_t>(l)].push_back(init_operator_params(kind, d, cfg.init, op_rng));
    }
  }
  net.projected_input = graph.features * net.input_proj;
  return net;
}

struct TrainableGroups {
  bool alpha = true;
  bool output = false;   // w_out
  bool weights = false;  // input projection, W^l, operator parameters
};

// Tape handles for one forward pass.
struct SupernetBinding {
  TrainableGroups groups;
  Tensor alpha;
  Tensor input_proj;
  Tensor input;
  std::vector<Tensor> layer_weights;
  Tensor w_out;
  std::vector<std::vector<std::vector<Tensor>>> ops;
};

inline SupernetBinding bind_supernet(Tape& tape, const Supernet& net, const PreparedGraph& g, TrainableGroups groups) {
  SupernetBinding b;
  b.groups = groups;
  b.alpha = tape.leaf(net.alpha, groups.alpha);
  if (groups.weights) {
    b.input_proj = tape.leaf(net.input_proj, true);
    b.input = spmm(g.features, b.input_proj);
  } else {
    b.input = tape.constant(net.projected_input);
  }
  for (const auto& w : net.layer_weights) b.layer_weights.push_back(tape.leaf(w, groups.weights));
  b.w_out = tape.leaf(net.w_out, groups.output);
  for (const auto& layer : net.ops) {
    auto& out = b.ops.emplace_back();
    for (const auto& p : layer) out.push_back(bind_params(tape, p, groups.weights));
  }
  return b;
}

// phi( sum_k alpha_lk / ||alpha_l|| * o_lk(H) * W^l )
inline Tensor mixed_layer_forward(const Supernet& net, const SupernetBinding& b, const PreparedGraph& g, Index layer,
                                  const Tensor& h) {
  if (layer < 0 || layer >= net.num_layers()) throw std::out_of_range("mixed_layer_forward: bad layer index");
  if (h.cols() != net.config.hidden_dim) {
    throw ShapeError("mixed_layer_forward: input " + shape_string(h.value()) + " but hidden_dim is " +
                     std::to_string(net.config.hidden_dim));
  }
  const auto l = static_cast<std::size_t>(layer);
  const Tensor coeffs = l2_normalize_vector(select_row(b.alpha, layer));
  std::vector<Tensor> outputs;
  outputs.reserve(net.ops[l].size());
  for (std::size_t k = 0; k < net.ops[l].size(); ++k) {
    outputs.push_back(apply_operator(net.ops[l][k], b.ops[l][k], g, h));
  }
  const Tensor mixed = mix(coeffs, outputs);
  return activate(net.config.activation, matmul(mixed, b.layer_weights[l]));
}

// Logits z * W_o with z = h^L.
inline Tensor supernet_forward(const Supernet& net, const SupernetBinding& b, const PreparedGraph& g) {
  Tensor h = b.input;
  for (Index l = 0; l < net.num_layers(); ++l) h = mixed_layer_forward(net, b, g, l, h);
  return matmul(h, b.w_out);
}

struct ArchitectureSelection {
  std::vector<Index> indices;           // per layer, into `candidates`
  std::vector<OperatorKind> candidates;  // the search space operator list
  Matrix alpha;

  std::vector<OperatorKind> layers() const {
    std::vector<OperatorKind> out;
    for (Index i : indices) out.push_back(candidates[static_cast<std::size_t>(i)]);
    return out;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> out;
    for (const auto& k : layers()) out.push_back(operator_name(k));
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (Index r = 0; r < alpha.rows(); ++r) {
      std::vector<double> row(alpha.row(r).data(), alpha.row(r).data() + alpha.cols());
      a.push_back(row);
    }
    return {{"layers", layer_names()}, {"alpha", a}};
  }

  // Rebuilds a selection from {"layers": [...], "alpha": [...]}; the candidate
  // list is the distinct layer names unless one is given.
  static ArchitectureSelection from_json(const nlohmann::json& j, std::vector<OperatorKind> candidates = {}) {
    ArchitectureSelection s;
    std::vector<OperatorKind> layers;
    for (const auto& n : j.at("layers")) layers.push_back(parse_operator(n.get<std::string>()));
    if (candidates.empty()) {
      for (const auto& k : layers) {
        if (std::find(candidates.begin(), candidates.end(), k) == candidates.end()) candidates.push_back(k);
      }
    }
    s.candidates = candidates;
    for (const auto& k : layers) {
      auto it = std::find(candidates.begin(), candidates.end(), k);
      if (it == candidates.end()) throw std::invalid_argument("selection layer " + operator_name(k) + " not a candidate");
      s.indices.push_back(static_cast<Index>(it - candidates.begin()));
    }
    if (j.contains("alpha") && !j["alpha"].empty()) {
      const auto& a = j["alpha"];
      s.alpha = Matrix(static_cast<Index>(a.size()), static_cast<Index>(a[0].size()));
      for (std::size_t r = 0; r < a.size(); ++r) {
        for (std::size_t c = 0; c < a[r].size(); ++c) s.alpha(static_cast<Index>(r), static_cast<Index>(c)) = a[r][c];
      }
    }
    return s;
  }
};

// Per layer, the operator with the largest |alpha_lk|; ties go to the lowest index.
inline std::vector<Index> argmax_by_magnitude(const Matrix& alpha) {
  std::vector<Index> out;
  for (Index l = 0; l < alpha.rows(); ++l) {
    Index best = 0;
    for (Index k = 1; k < alpha.cols(); ++k) {
      if (std::abs(alpha(l, k)) > std::abs(alpha(l, best))) best = k;
    }
    out.push_back(best);
  }
  return out;
}

inline ArchitectureSelection derive_architecture(const Supernet& net) {
  return {argmax_by_magnitude(net.alpha), net.config.operators, net.alpha};
}

}  // namespace nac
