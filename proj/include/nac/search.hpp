#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nac/supernet.hpp"

namespace nac {

enum class SearchMode { Nac, NacPlus, NacUpdating };

inline SearchMode parse_search_mode(std::string_view s) {
  if (s == "nac") return SearchMode::Nac;
  if (s == "nac-plus" || s == "nac_plus") return SearchMode::NacPlus;
  if (s == "nac-updating" || s == "nac_updating") return SearchMode::NacUpdating;
  throw std::invalid_argument("unknown search mode '" + std::string(s) + "' (nac, nac-plus, nac-updating)");
}

inline std::string to_string(SearchMode m) {
  switch (m) {
    case SearchMode::Nac: return "nac";
    case SearchMode::NacPlus: return "nac-plus";
    case SearchMode::NacUpdating: return "nac-updating";
  }
  return "?";
}

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.0;
  double weight_decay = 5e-4;
  bool cosine = true;
};

struct SearchConfig {
  SearchMode mode = SearchMode::Nac;
  int epochs = 100;
  double rho = 1e-3;
  AdamConfig arch;
  SgdConfig weights;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("search: epochs must be >= 1");
    if (!(rho >= 0.0)) throw std::invalid_argument("search: rho must be >= 0");
  }
};

// ------------------------------------------------------------- optimizers

struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;
};

// Classic Adam: weight decay is folded into the gradient; bias-corrected moments.
inline void adam_step(AdamState& state, Matrix& params, const Matrix& grads, const AdamConfig& cfg,
                      std::optional<double> lr = std::nullopt) {
  if (grads.rows() != params.rows() || grads.cols() != params.cols()) {
    throw ShapeError("adam_step: params " + shape_string(params) + " vs grads " + shape_string(grads));
  }
  if (state.step == 0) {
    state.m = Matrix::Zero(params.rows(), params.cols());
    state.v = Matrix::Zero(params.rows(), params.cols());
  } else if (state.m.rows() != params.rows() || state.m.cols() != params.cols()) {
    throw ShapeError("adam_step: optimizer state " + shape_string(state.m) + " vs params " + shape_string(params));
  }
  ++state.step;
  Matrix g = grads;
  if (cfg.weight_decay != 0.0) g += cfg.weight_decay * params;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double step = lr.value_or(cfg.lr);
  params.array() -= step * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + cfg.eps);
}

struct SgdState {
  Matrix momentum;
};

inline void sgd_step(SgdState& state, Matrix& params, const Matrix& grads, double lr, double momentum,
                     double weight_decay) {
  if (grads.rows() != params.rows() || grads.cols() != params.cols()) {
    throw ShapeError("sgd_step: params " + shape_string(params) + " vs grads " + shape_string(grads));
  }
  Matrix g = grads;
  if (weight_decay != 0.0) g += weight_decay * params;
  if (momentum != 0.0) {
    if (state.momentum.size() == 0) state.momentum = Matrix::Zero(params.rows(), params.cols());
    state.momentum = momentum * state.momentum + g;
    g = state.momentum;
  }
  params -= lr * g;
}

// Cosine decay from `base` at epoch 0 towards `floor` at `total`.
inline double cosine_lr(double base, int epoch, int total, double floor = 0.0) {
  if (total <= 0) return base;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * epoch / total));
}

// --------------------------------------------------------------- objective

inline double l1_norm(const Matrix& alpha) { return alpha.cwiseAbs().sum(); }

// sign(alpha) with sign(0) = 0.
inline Matrix l1_subgradient(const Matrix& alpha) {
  return alpha.unaryExpr([](double a) { return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0); });
}

struct ObjectiveTerms {
  Tensor ce_loss;  // on the tape; the L1 term is added as a subgradient
  Tensor logits;
  double ce = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

// CE(y_train, f(h^L)) + rho * ||alpha||_1. The reconstruction term
// ||z - h^L||_F^2 vanishes because z = h^L.
inline ObjectiveTerms nac_objective(const Supernet& net, const SupernetBinding& b, const PreparedGraph& g,
                                    const Graph& graph, const Split& split, double rho) {
  ObjectiveTerms t;
  t.logits = supernet_forward(net, b, g);
  t.ce_loss = cross_entropy(t.logits, graph.labels, split.train());
  t.ce = t.ce_loss.item();
  t.l1 = l1_norm(net.alpha);
  t.total = t.ce + rho * t.l1;
  return t;
}

// Number of scalars one search epoch updates.
inline Index updated_parameter_count(SearchMode mode, const Supernet& net) {
  const Index arch = net.alpha.size();
  switch (mode) {
    case SearchMode::Nac: return arch;
    case SearchMode::NacPlus: return arch + net.w_out.size();
    case SearchMode::NacUpdating: return arch + net.w_out.size() + net.hidden_weight_count();
  }
  return arch;
}

// ------------------------------------------------------------------ search

class SearchAborted : public std::runtime_error {
 public:
  SearchAborted(int epoch, const std::string& what)
      : std::runtime_error("search aborted at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double ce = 0.0;
  double l1 = 0.0;
  double ms = 0.0;
  Index updated_params = 0;
  Matrix alpha;  // after this epoch's update
};

struct SearchTrace {
  SearchMode mode = SearchMode::Nac;
  std::vector<EpochRecord> epochs;

  double total_ms() const {
    double t = 0.0;
    for (const auto& e : epochs) t += e.ms;
    return t;
  }

  void write_csv(std::ostream& out, bool include_timing = true) const {
    out << (include_timing ? "epoch,loss,ce,l1,ms\n" : "epoch,loss,ce,l1\n");
    out.precision(17);
    for (const auto& e : epochs) {
      out << e.epoch << ',' << e.loss << ',' << e.ce << ',' << e.l1;
      if (include_timing) out << ',' << e.ms;
      out << '\n';
    }
  }

  nlohmann::json alpha_json() const {
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& e : epochs) {
      nlohmann::json rows = nlohmann::json::array();
      for (Index r = 0; r < e.alpha.rows(); ++r) {
        rows.push_back(std::vector<double>(e.alpha.row(r).data(), e.alpha.row(r).data() + e.alpha.cols()));
      }
      snaps.push_back({{"epoch", e.epoch}, {"alpha", rows}});
    }
    return snaps;
  }
};

struct SearchResult {
  ArchitectureSelection selection;
  SearchTrace trace;
  Supernet net;
  std::uint64_t fixed_hash_before = 0;
  std::uint64_t fixed_hash_after = 0;
};

namespace detail {

inline void check_finite(double v, int epoch, const char* what) {
  if (!std::isfinite(v)) throw SearchAborted(epoch, std::string(what) + " is not finite");
}

// One SGD step on the weight groups selected in `b.groups` (excluding alpha).
inline void step_weights(Supernet& net, const SupernetBinding& b, const Gradients& grads, const SgdConfig& cfg,
                         double lr, std::vector<SgdState>& states) {
  std::size_t slot = 0;
  auto apply = [&](Matrix& param, const Tensor& t) {
    if (states.size() <= slot) states.resize(slot + 1);
    if (grads.contains(t)) sgd_step(states[slot], param, grads.at(t), lr, cfg.momentum, cfg.weight_decay);
    ++slot;
  };
  if (b.groups.output) apply(net.w_out, b.w_out);
  if (b.groups.weights) {
    apply(net.input_proj, b.input_proj);
    for (std::size_t l = 0; l < net.layer_weights.size(); ++l) apply(net.layer_weights[l], b.layer_weights[l]);
    for (std::size_t l = 0; l < net.ops.size(); ++l) {
      for (std::size_t k = 0; k < net.ops[l].size(); ++k) {
        for (std::size_t i = 0; i < net.ops[l][k].weights.size(); ++i) apply(net.ops[l][k].weights[i], b.ops[l][k][i]);
      }
    }
  }
}

}  // namespace detail

// Architecture search. Each epoch is one full-batch step on the training mask:
// an Adam step on alpha using the CE gradient plus rho * sign(alpha); in
// nac-plus / nac-updating a second pass then takes an SGD step on W_o / all
// weights.
inline SearchResult search(const SearchSpaceConfig& space, const SearchConfig& cfg, const Dataset& data,
                           const PreparedGraph& prepared) {
  cfg.validate();
  SearchResult result;
  result.net = build_supernet(space, data.graph, cfg.seed);
  Supernet& net = result.net;
  result.trace.mode = cfg.mode;
  result.fixed_hash_before = net.fixed_weight_hash();
  const Index updated = updated_parameter_count(cfg.mode, net);

  Tape tape;
  AdamState arch_state;
  std::vector<SgdState> weight_states;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.updated_params = updated;
    {
      const SupernetBinding b = bind_supernet(tape, net, prepared, {true, false, false});
      ObjectiveTerms obj;
      try {
        obj = nac_objective(net, b, prepared, data.graph, data.split, cfg.rho);
      } catch (const DegenerateCoefficientError& e) {
        throw SearchAborted(epoch, e.what());
      }
      detail::check_finite(obj.ce, epoch, "cross-entropy");
      rec.loss = obj.total;
      rec.ce = obj.ce;
      rec.l1 = obj.l1;
      const Gradients grads = tape.backward(obj.ce_loss);
      Matrix g = grads.at(b.alpha) + cfg.rho * l1_subgradient(net.alpha);
      adam_step(arch_state, net.alpha, g, cfg.arch);
    }
    if (cfg.mode != SearchMode::Nac) {
      const bool all = cfg.mode == SearchMode::NacUpdating;
      const SupernetBinding b = bind_supernet(tape, net, prepared, {false, true, all});
      const Tensor logits = supernet_forward(net, b, prepared);
      const Tensor ce = cross_entropy(logits, data.graph.labels, data.split.train());
      detail::check_finite(ce.item(), epoch, "cross-entropy (weight step)");
      const Gradients grads = tape.backward(ce);
      const double lr = cfg.weights.cosine ? cosine_lr(cfg.weights.lr, epoch, cfg.epochs) : cfg.weights.lr;
      detail::step_weights(net, b, grads, cfg.weights, lr, weight_states);
      if (all) net.projected_input = prepared.features.multiply(net.input_proj);
    }
    rec.alpha = net.alpha;
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.trace.epochs.push_back(std::move(rec));
  }
  result.fixed_hash_after = net.fixed_weight_hash();
  result.selection = derive_architecture(net);
  return result;
}

inline SearchResult search(const SearchSpaceConfig& space, const SearchConfig& cfg, const Dataset& data) {
  const PreparedGraph prepared = PreparedGraph::from(data.graph, space.lambda_max);
  return search(space, cfg, data, prepared);
}

}  // namespace nac
