#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nac/search.hpp"

namespace nac {

struct RetrainConfig {
  int epochs = 400;
  double lr = 0.0004150;
  double weight_decay = 0.0001125;
  Index hidden = 256;
  double dropout = 0.6;
  Activation activation = Activation::Relu;
  int seeds = 4;
  double lambda_max = kDefaultLambdaMax;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("retrain: epochs must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("retrain: dropout must lie in [0,1)");
    if (hidden < 1) throw std::invalid_argument("retrain: hidden must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("retrain: lr must be > 0");
    if (seeds < 1) throw std::invalid_argument("retrain: seeds must be >= 1");
  }
};

// Per-dataset retraining hyperparameters. Unknown names get the Cora values.
inline RetrainConfig retrain_defaults(std::string_view dataset) {
  RetrainConfig c;
  auto has = [&](std::string_view key) { return dataset.find(key) != std::string_view::npos; };
  if (has("citeseer")) {
    c.lr = 0.005937;
    c.weight_decay = 0.00002007;
    c.hidden = 512;
    c.dropout = 0.5;
  } else if (has("pubmed")) {
    c.lr = 0.002408;
    c.weight_decay = 0.00008850;
    c.hidden = 64;
    c.dropout = 0.5;
  } else if (has("amazon") || has("computers")) {
    c.lr = 0.002111;
    c.weight_decay = 0.000331;
    c.hidden = 64;
    c.dropout = 0.5;
    c.activation = Activation::Elu;
  } else if (has("ppi")) {
    c.lr = 0.00102;
    c.weight_decay = 0.0;
    c.hidden = 512;
    c.dropout = 0.5;
  }
  return c;
}

struct Metrics {
  double accuracy = 0.0;
  double micro_f1 = 0.0;  // single-label: equals accuracy
  double seconds = 0.0;
  int best_val_epoch = -1;
  double best_val_accuracy = 0.0;

  nlohmann::json to_json() const {
    return {{"accuracy", accuracy},
            {"micro_f1", micro_f1},
            {"seconds", seconds},
            {"best_val_epoch", best_val_epoch},
            {"best_val_accuracy", best_val_accuracy}};
  }
};

class RetrainAborted : public std::runtime_error {
 public:
  RetrainAborted(int epoch, const std::string& what)
      : std::runtime_error("retrain aborted at epoch " + std::to_string(epoch) + ": " + what) {}
};

inline std::vector<Index> predictions(const Matrix& logits) {
  std::vector<Index> out(static_cast<std::size_t>(logits.rows()));
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

inline double masked_accuracy(const std::vector<Index>& pred, const std::vector<Index>& labels,
                              const std::vector<Index>& mask) {
  if (mask.empty()) return 0.0;
  std::size_t hit = 0;
  for (Index v : mask) hit += pred[static_cast<std::size_t>(v)] == labels[static_cast<std::size_t>(v)];
  return static_cast<double>(hit) / static_cast<double>(mask.size());
}

// Trainable single-operator stack:
//   h_0 = act(X W_in + b_in), h_l = act(o_l(drop(h_{l-1})) + b_l), logits = drop(h_L) W_o + b_o
struct RetrainModel {
  std::vector<OperatorParams> ops;
  std::vector<Matrix> params;  // W_in, b_in, b_1..b_L, W_o, b_o
  Activation activation = Activation::Relu;
  double dropout = 0.0;

  std::size_t num_layers() const { return ops.size(); }
};

inline RetrainModel build_retrain_model(const std::vector<OperatorKind>& layers, Index feature_dim, Index num_classes,
                                        const RetrainConfig& cfg, std::uint64_t seed) {
  if (layers.empty()) throw std::invalid_argument("retrain: architecture has no layers");
  RetrainModel m;
  m.activation = cfg.activation;
  m.dropout = cfg.dropout;
  Rng rng(mix_seed(seed, 201));
  m.params.push_back(orthogonal_matrix(feature_dim, cfg.hidden, rng));
  m.params.push_back(Matrix::Zero(1, cfg.hidden));
  for (const auto& k : layers) {
    m.ops.push_back(init_operator_params(k, cfg.hidden, InitScheme::Orthogonal, rng));
    m.params.push_back(Matrix::Zero(1, cfg.hidden));
  }
  m.params.push_back(orthogonal_matrix(cfg.hidden, num_classes, rng));
  m.params.push_back(Matrix::Zero(1, num_classes));
  return m;
}

namespace detail {

struct BoundModel {
  std::vector<Tensor> params;
  std::vector<std::vector<Tensor>> ops;
};

inline BoundModel bind_model(Tape& tape, const RetrainModel& m, bool trainable) {
  BoundModel b;
  for (const auto& p : m.params) b.params.push_back(tape.leaf(p, trainable));
  for (const auto& op : m.ops) b.ops.push_back(bind_params(tape, op, trainable));
  return b;
}

// Inverted dropout applied to the stored entries of a sparse matrix.
inline SparseMatrix sparse_dropout(const SparseMatrix& s, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> v(s.values().begin(), s.values().end());
  for (double& x : v) x = keep(rng) ? x / (1.0 - p) : 0.0;
  return s.with_values(std::move(v));
}

// `dropped_input` must outlive backward; it receives the dropped-out features.
inline Tensor model_forward(const RetrainModel& m, const BoundModel& b, const PreparedGraph& g, bool training,
                            Rng& rng, SparseMatrix& dropped_input) {
  const double p = training ? m.dropout : 0.0;
  const SparseMatrix* x = &g.features;
  if (p > 0.0) {
    dropped_input = sparse_dropout(g.features, p, rng);
    x = &dropped_input;
  }
  Tensor h = activate(m.activation, add(spmm(*x, b.params[0]), b.params[1]));
  for (std::size_t l = 0; l < m.ops.size(); ++l) {
    if (p > 0.0) h = dropout(h, p, rng);
    h = activate(m.activation, add(apply_operator(m.ops[l], b.ops[l], g, h), b.params[2 + l]));
  }
  if (p > 0.0) h = dropout(h, p, rng);
  const std::size_t o = 2 + m.ops.size();
  return add(matmul(h, b.params[o]), b.params[o + 1]);
}

}  // namespace detail

// Logits of the model in evaluation mode (no dropout, no gradients).
inline Matrix model_logits(const RetrainModel& m, const PreparedGraph& g) {
  Tape tape;
  Rng unused(0);
  SparseMatrix scratch;
  const detail::BoundModel b = detail::bind_model(tape, m, false);
  return detail::model_forward(m, b, g, false, unused, scratch).value();
}

// Full-batch training with validation-based model selection (ties keep the
// earlier epoch). The test set is read once, after training.
inline Metrics retrain(const std::vector<OperatorKind>& layers, const Dataset& data, const PreparedGraph& g,
                       const RetrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Graph& graph = data.graph;
  RetrainModel m = build_retrain_model(layers, graph.feature_dim(), graph.num_classes, cfg, seed);
  Rng rng(mix_seed(seed, 202));

  Metrics out;
  std::vector<Index> best_pred = predictions(model_logits(m, g));
  out.best_val_accuracy = masked_accuracy(best_pred, graph.labels, data.split.val());
  out.best_val_epoch = 0;

  std::vector<AdamState> states(m.params.size());
  std::vector<std::vector<AdamState>> op_states(m.ops.size());
  AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  Tape tape;
  SparseMatrix dropped;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const detail::BoundModel b = detail::bind_model(tape, m, true);
    const Tensor logits = detail::model_forward(m, b, g, true, rng, dropped);
    const Tensor loss = cross_entropy(logits, graph.labels, data.split.train());
    if (!std::isfinite(loss.item())) throw RetrainAborted(epoch, "training loss is not finite");
    const Gradients grads = tape.backward(loss);
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (grads.contains(b.params[i])) adam_step(states[i], m.params[i], grads.at(b.params[i]), adam, lr);
    }
    for (std::size_t l = 0; l < m.ops.size(); ++l) {
      op_states[l].resize(m.ops[l].weights.size());
      for (std::size_t i = 0; i < m.ops[l].weights.size(); ++i) {
        if (grads.contains(b.ops[l][i])) {
          adam_step(op_states[l][i], m.ops[l].weights[i], grads.at(b.ops[l][i]), adam, lr);
        }
      }
    }
    std::vector<Index> pred = predictions(model_logits(m, g));
    const double val = masked_accuracy(pred, graph.labels, data.split.val());
    if (val > out.best_val_accuracy) {
      out.best_val_accuracy = val;
      out.best_val_epoch = epoch + 1;
      best_pred = std::move(pred);
    }
  }
  out.accuracy = masked_accuracy(best_pred, graph.labels, data.split.test());
  out.micro_f1 = out.accuracy;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline Metrics retrain(const ArchitectureSelection& arch, const Dataset& data, const PreparedGraph& g,
                       const RetrainConfig& cfg, std::uint64_t seed) {
  return retrain(arch.layers(), data, g, cfg, seed);
}

struct RetrainSummary {
  std::vector<std::string> arch;
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> runs;

  std::vector<double> accuracies() const {
    std::vector<double> a;
    for (const auto& r : runs) a.push_back(r.accuracy);
    return a;
  }
  double mean() const {
    const auto a = accuracies();
    return a.empty() ? 0.0 : std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  }
  // Population standard deviation over seeds.
  double stddev() const {
    const auto a = accuracies();
    if (a.empty()) return 0.0;
    const double mu = mean();
    double s = 0.0;
    for (double x : a) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(a.size()));
  }
  double max() const {
    const auto a = accuracies();
    return a.empty() ? 0.0 : *std::max_element(a.begin(), a.end());
  }
  double seconds() const {
    double t = 0.0;
    for (const auto& r : runs) t += r.seconds;
    return t;
  }

  nlohmann::json to_json() const {
    nlohmann::json runs_json = nlohmann::json::array();
    for (const auto& r : runs) runs_json.push_back(r.to_json());
    return {{"arch", arch},         {"seeds", seeds},       {"test_acc_mean", mean()}, {"test_acc_std", stddev()},
            {"test_acc_max", max()}, {"time_s", seconds()}, {"runs", runs_json}};
  }
};

inline std::vector<std::uint64_t> seed_list(std::uint64_t base, int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) s.push_back(base + static_cast<std::uint64_t>(i));
  return s;
}

inline RetrainSummary retrain_seeds(const std::vector<OperatorKind>& layers, const Dataset& data,
                                    const PreparedGraph& g, const RetrainConfig& cfg,
                                    const std::vector<std::uint64_t>& seeds) {
  RetrainSummary s;
  for (const auto& k : layers) s.arch.push_back(operator_name(k));
  s.seeds = seeds;
  for (auto seed : seeds) s.runs.push_back(retrain(layers, data, g, cfg, seed));
  return s;
}

// ------------------------------------------------------------ random search

struct RandomSearchResult {
  std::vector<OperatorKind> best;
  Metrics metrics;                                // full retrain of `best`
  std::vector<std::vector<OperatorKind>> sampled;  // in sampling order
  std::vector<double> sampled_val;
  int retrains = 0;
};

// Draws `budget` distinct architectures uniformly from K^L (all of them when
// budget >= K^L), trains each for `short_epochs`, and retrains the one with the
// best validation accuracy (ties: earliest sample) under `cfg`.
inline RandomSearchResult random_search_baseline(const Dataset& data, const PreparedGraph& g,
                                                 const std::vector<OperatorKind>& candidates, int num_layers,
                                                 int budget, const RetrainConfig& cfg, int short_epochs,
                                                 std::uint64_t seed) {
  if (budget < 1) throw std::invalid_argument("random search: budget must be >= 1");
  if (candidates.empty() || num_layers < 1) throw std::invalid_argument("random search: empty search space");
  const double space = std::pow(static_cast<double>(candidates.size()), num_layers);
  Rng rng(mix_seed(seed, 301));
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::set<std::vector<std::size_t>> seen;
  RandomSearchResult r;
  const auto want = static_cast<std::size_t>(std::min<double>(budget, space));
  while (seen.size() < want) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(num_layers));
    for (auto& i : idx) i = pick(rng);
    if (!seen.insert(idx).second) continue;
    std::vector<OperatorKind> arch;
    for (auto i : idx) arch.push_back(candidates[i]);
    r.sampled.push_back(arch);
  }
  RetrainConfig short_cfg = cfg;
  short_cfg.epochs = short_epochs;
  std::size_t best = 0;
  for (std::size_t i = 0; i < r.sampled.size(); ++i) {
    const Metrics m = retrain(r.sampled[i], data, g, short_cfg, seed);
    ++r.retrains;
    r.sampled_val.push_back(m.best_val_accuracy);
    if (m.best_val_accuracy > r.sampled_val[best]) best = i;
  }
  r.best = r.sampled[best];
  r.metrics = retrain(r.best, data, g, cfg, seed);
  ++r.retrains;
  return r;
}

// ------------------------------------------------------------------ timing

struct TimingEntry {
  SearchMode mode = SearchMode::Nac;
  std::string config_key;  // dataset checksum, seed, epochs and search space
  int epochs = 0;
  double total_ms = 0.0;
  Index updated_params = 0;
  std::vector<double> epoch_ms;

  double mean_epoch_ms() const { return epochs > 0 ? total_ms / epochs : 0.0; }
};

inline TimingEntry timing_entry(const SearchTrace& trace, std::string config_key) {
  TimingEntry e;
  e.mode = trace.mode;
  e.config_key = std::move(config_key);
  e.epochs = static_cast<int>(trace.epochs.size());
  for (const auto& r : trace.epochs) e.epoch_ms.push_back(r.ms);
  e.total_ms = trace.total_ms();
  e.updated_params = trace.epochs.empty() ? 0 : trace.epochs.front().updated_params;
  return e;
}

struct TimingReport {
  std::vector<TimingEntry> entries;

  const TimingEntry& at(SearchMode m) const {
    for (const auto& e : entries) {
      if (e.mode == m) return e;
    }
    throw std::out_of_range("timing report has no entry for mode " + to_string(m));
  }

  void write_csv(std::ostream& out) const {
    out << "mode,epochs,epoch_ms,total_ms,updated_params\n";
    for (const auto& e : entries) {
      out << to_string(e.mode) << ',' << e.epochs << ',' << e.mean_epoch_ms() << ',' << e.total_ms << ','
          << e.updated_params << '\n';
    }
  }

  // Cumulative wall-clock per epoch, per mode.
  nlohmann::json plot_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& e : entries) {
      std::vector<double> cum(e.epoch_ms.size());
      std::partial_sum(e.epoch_ms.begin(), e.epoch_ms.end(), cum.begin());
      j[to_string(e.mode)] = {{"cumulative_ms", cum}, {"updated_params", e.updated_params}};
    }
    return j;
  }
};

inline TimingReport timing_report(std::vector<TimingEntry> entries) {
  if (entries.size() < 2) throw std::invalid_argument("timing report: need at least two modes");
  for (const auto& e : entries) {
    if (e.config_key != entries.front().config_key || e.epochs != entries.front().epochs) {
      throw std::invalid_argument("timing report: mode " + to_string(e.mode) +
                                  " ran on a different configuration than " + to_string(entries.front().mode));
    }
  }
  return TimingReport{std::move(entries)};
}

// ------------------------------------------------------------ convergence

// Validation accuracy of the architecture derived at every search epoch.
// Each distinct architecture is retrained once (cached) under `cfg` and `seed`.
class ConvergenceProbe {
 public:
  ConvergenceProbe(const Dataset& data, const PreparedGraph& g, RetrainConfig cfg, std::uint64_t seed)
      : data_(data), g_(g), cfg_(std::move(cfg)), seed_(seed) {}

  double validation_accuracy(const std::vector<Index>& indices, const std::vector<OperatorKind>& candidates) {
    auto it = cache_.find(indices);
    if (it != cache_.end()) return it->second;
    std::vector<OperatorKind> layers;
    for (Index i : indices) layers.push_back(candidates[static_cast<std::size_t>(i)]);
    const double v = retrain(layers, data_, g_, cfg_, seed_).best_val_accuracy;
    cache_.emplace(indices, v);
    return v;
  }

  std::vector<double> curve(const SearchTrace& trace, const std::vector<OperatorKind>& candidates) {
    std::vector<double> out;
    for (const auto& e : trace.epochs) out.push_back(validation_accuracy(argmax_by_magnitude(e.alpha), candidates));
    return out;
  }

  std::size_t distinct_architectures() const { return cache_.size(); }

 private:
  const Dataset& data_;
  const PreparedGraph& g_;
  RetrainConfig cfg_;
  std::uint64_t seed_;
  std::map<std::vector<Index>, double> cache_;
};

// First epoch t whose window [t, t + window) has accuracy range < delta.
// Returns curve.size() when no full window qualifies.
inline std::size_t epochs_to_stabilize(const std::vector<double>& curve, std::size_t window = 10,
                                       double delta = 0.005) {
  if (window == 0) throw std::invalid_argument("epochs_to_stabilize: window must be >= 1");
  for (std::size_t t = 0; t + window <= curve.size(); ++t) {
    const auto [lo, hi] = std::minmax_element(curve.begin() + static_cast<std::ptrdiff_t>(t),
                                              curve.begin() + static_cast<std::ptrdiff_t>(t + window));
    if (*hi - *lo < delta) return t;
  }
  return curve.size();
}

}  // namespace nac
