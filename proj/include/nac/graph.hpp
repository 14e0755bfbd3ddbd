#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nac/init.hpp"
#include "nac/sparse.hpp"

namespace nac {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Undirected graph; every edge is stored once with src < dst and no self-loops.
struct Graph {
  std::string name;
  Index num_nodes = 0;
  std::vector<std::pair<Index, Index>> edges;
  Matrix features;
  std::vector<Index> labels;
  Index num_classes = 0;

  Index feature_dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() != num_nodes) {
      throw DatasetError("graph '" + name + "': features have " + std::to_string(features.rows()) +
                         " rows for " + std::to_string(num_nodes) + " nodes");
    }
    if (static_cast<Index>(labels.size()) != num_nodes) {
      throw DatasetError("graph '" + name + "': " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(num_nodes) + " nodes");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw DatasetError("graph '" + name + "': label " + std::to_string(labels[i]) + " of node " +
                           std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
      }
    }
    std::set<std::pair<Index, Index>> seen;
    for (const auto& [s, d] : edges) {
      if (s == d) throw DatasetError("graph '" + name + "': self-loop on node " + std::to_string(s));
      if (s > d || s < 0 || d >= num_nodes) {
        throw DatasetError("graph '" + name + "': edge (" + std::to_string(s) + "," + std::to_string(d) +
                           ") must satisfy 0 <= src < dst < num_nodes");
      }
      if (!seen.insert({s, d}).second) {
        throw DatasetError("graph '" + name + "': duplicate edge (" + std::to_string(s) + "," +
                           std::to_string(d) + ")");
      }
    }
  }
};

// Disjoint train/val/test node sets. Reads of the test set are counted so that
// split hygiene can be audited.
class Split {
 public:
  Split() = default;
  Split(std::vector<Index> train, std::vector<Index> val, std::vector<Index> test)
      : train_(std::move(train)), val_(std::move(val)), test_(std::move(test)) {}

  const std::vector<Index>& train() const { return train_; }
  const std::vector<Index>& val() const { return val_; }
  const std::vector<Index>& test() const {
    test_reads_->fetch_add(1, std::memory_order_relaxed);
    return test_;
  }
  std::size_t test_size() const { return test_.size(); }
  std::size_t test_reads() const { return test_reads_->load(std::memory_order_relaxed); }

  void validate(Index num_nodes) const {
    std::vector<char> owner(static_cast<std::size_t>(num_nodes), 0);
    auto mark = [&](const std::vector<Index>& set, char tag, const char* what) {
      for (Index v : set) {
        if (v < 0 || v >= num_nodes) {
          throw DatasetError(std::string("split: ") + what + " index " + std::to_string(v) + " outside [0," +
                             std::to_string(num_nodes) + ")");
        }
        if (owner[static_cast<std::size_t>(v)] != 0) {
          throw DatasetError(std::string("split: node ") + std::to_string(v) + " appears twice (" + what + ")");
        }
        owner[static_cast<std::size_t>(v)] = tag;
      }
    };
    mark(train_, 1, "train");
    mark(val_, 2, "val");
    mark(test_, 3, "test");
  }

 private:
  std::vector<Index> train_;
  std::vector<Index> val_;
  std::vector<Index> test_;
  std::shared_ptr<std::atomic<std::size_t>> test_reads_ = std::make_shared<std::atomic<std::size_t>>(0);
};

struct Dataset {
  Graph graph;
  Split split;
};

// ---------------------------------------------------------------- loading

namespace detail {

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!line.empty()) fn(line, line_no);
    pos = end + 1;
  }
}

template <typename T>
T parse_number(std::string_view token, const std::string& file, std::size_t line) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t')) token.remove_suffix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw DatasetError(file + ":" + std::to_string(line) + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

inline std::vector<Index> json_index_list(const nlohmann::json& j, const char* key, const std::string& file) {
  if (!j.contains(key) || !j[key].is_array()) throw DatasetError(file + ": missing array '" + key + "'");
  std::vector<Index> out;
  for (const auto& v : j[key]) out.push_back(v.get<Index>());
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Reads the portable dataset directory (graph.json, edges.csv, features.csv,
// labels.csv, splits.json) and validates it against the graph.json counts.
inline Dataset load_graph(const std::filesystem::path& dir) {
  using nlohmann::json;
  const auto meta_path = dir / "graph.json";
  json meta;
  try {
    meta = json::parse(detail::read_text(meta_path));
  } catch (const json::exception& e) {
    throw DatasetError(meta_path.string() + ": " + e.what());
  }
  for (const char* key : {"num_nodes", "feature_dim", "num_classes"}) {
    if (!meta.contains(key)) throw DatasetError(meta_path.string() + ": missing key '" + key + "'");
  }
  Dataset ds;
  Graph& g = ds.graph;
  g.name = meta.value("name", dir.filename().string());
  g.num_nodes = meta["num_nodes"].get<Index>();
  g.num_classes = meta["num_classes"].get<Index>();
  const Index fdim = meta["feature_dim"].get<Index>();

  {
    const std::string file = (dir / "edges.csv").string();
    const std::string text = detail::read_text(file);
    std::set<std::pair<Index, Index>> seen;
    detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos) throw DatasetError(file + ":" + std::to_string(no) + ": expected 'src,dst'");
      const auto s = detail::parse_number<Index>(line.substr(0, comma), file, no);
      const auto d = detail::parse_number<Index>(line.substr(comma + 1), file, no);
      if (s < 0 || d < 0 || s >= g.num_nodes || d >= g.num_nodes) {
        throw DatasetError(file + ":" + std::to_string(no) + ": node index out of range [0," +
                           std::to_string(g.num_nodes) + ")");
      }
      if (s >= d) throw DatasetError(file + ":" + std::to_string(no) + ": expected src < dst");
      if (!seen.insert({s, d}).second) throw DatasetError(file + ":" + std::to_string(no) + ": duplicate edge");
      g.edges.emplace_back(s, d);
    });
  }
  {
    const std::string file = (dir / "features.csv").string();
    const std::string text = detail::read_text(file);
    g.features = Matrix::Zero(g.num_nodes, fdim);
    Index row = 0;
    detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
      if (row >= g.num_nodes) {
        throw DatasetError(file + ":" + std::to_string(no) + ": more rows than num_nodes=" + std::to_string(g.num_nodes));
      }
      Index col = 0;
      std::size_t pos = 0;
      while (pos <= line.size()) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) comma = line.size();
        if (col >= fdim) {
          throw DatasetError(file + ":" + std::to_string(no) + ": more than feature_dim=" + std::to_string(fdim) +
                             " values");
        }
        g.features(row, col++) = detail::parse_number<double>(line.substr(pos, comma - pos), file, no);
        pos = comma + 1;
      }
      if (col != fdim) {
        throw DatasetError(file + ":" + std::to_string(no) + ": " + std::to_string(col) + " values, expected " +
                           std::to_string(fdim));
      }
      ++row;
    });
    if (row != g.num_nodes) {
      throw DatasetError(file + ": " + std::to_string(row) + " rows, expected " + std::to_string(g.num_nodes));
    }
  }
  {
    const std::string file = (dir / "labels.csv").string();
    const std::string text = detail::read_text(file);
    detail::for_each_line(text, [&](std::string_view line, std::size_t no) {
      const auto y = detail::parse_number<Index>(line, file, no);
      if (y < 0 || y >= g.num_classes) {
        throw DatasetError(file + ":" + std::to_string(no) + ": label " + std::to_string(y) + " outside [0," +
                           std::to_string(g.num_classes) + ")");
      }
      g.labels.push_back(y);
    });
    if (static_cast<Index>(g.labels.size()) != g.num_nodes) {
      throw DatasetError(file + ": " + std::to_string(g.labels.size()) + " labels, expected " +
                         std::to_string(g.num_nodes));
    }
  }
  {
    const std::string file = (dir / "splits.json").string();
    json sj;
    try {
      sj = json::parse(detail::read_text(file));
    } catch (const json::exception& e) {
      throw DatasetError(file + ": " + e.what());
    }
    ds.split = Split(detail::json_index_list(sj, "train", file), detail::json_index_list(sj, "val", file),
                     detail::json_index_list(sj, "test", file));
    try {
      ds.split.validate(g.num_nodes);
    } catch (const DatasetError& e) {
      throw DatasetError(file + ": " + e.what());
    }
  }
  g.validate();
  return ds;
}

// Writes the portable format. Decimals use the shortest round-trip form, so
// load_graph(save_graph(d)) reproduces every value bit for bit.
inline void save_graph(const Dataset& ds, const std::filesystem::path& dir) {
  using nlohmann::json;
  const Graph& g = ds.graph;
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + (dir / name).string());
    return out;
  };
  {
    json meta = {{"num_nodes", g.num_nodes}, {"feature_dim", g.feature_dim()},
                 {"num_classes", g.num_classes}, {"name", g.name}};
    open("graph.json") << meta.dump(2) << "\n";
  }
  {
    auto out = open("edges.csv");
    for (const auto& [s, d] : g.edges) out << s << ',' << d << '\n';
  }
  {
    auto out = open("features.csv");
    std::string line;
    for (Index i = 0; i < g.num_nodes; ++i) {
      line.clear();
      for (Index j = 0; j < g.feature_dim(); ++j) {
        if (j) line += ',';
        line += detail::format_double(g.features(i, j));
      }
      out << line << '\n';
    }
  }
  {
    auto out = open("labels.csv");
    for (Index y : g.labels) out << y << '\n';
  }
  {
    json sj = {{"train", ds.split.train()}, {"val", ds.split.val()}, {"test", ds.split.test()}};
    open("splits.json") << sj.dump() << "\n";
  }
}

inline void row_normalize_features(Graph& g) {
  for (Index i = 0; i < g.features.rows(); ++i) {
    const double s = g.features.row(i).sum();
    if (s != 0.0) g.features.row(i) /= s;
  }
}

// ------------------------------------------------------- propagation matrices

enum class PropagationKind { GcnRenorm, SymLaplacian, ChebScaled, MeanNeighbor, RawSelfLoop };

struct PropagationMatrix {
  PropagationKind kind;
  SparseMatrix matrix;
};

inline std::vector<Index> degrees(const Graph& g) {
  std::vector<Index> deg(static_cast<std::size_t>(g.num_nodes), 0);
  for (const auto& [s, d] : g.edges) {
    ++deg[static_cast<std::size_t>(s)];
    ++deg[static_cast<std::size_t>(d)];
  }
  return deg;
}

// Symmetric 0/1 adjacency, no self-loops.
inline SparseMatrix adjacency(const Graph& g) {
  std::vector<Triplet> t;
  t.reserve(g.edges.size() * 2);
  for (const auto& [s, d] : g.edges) {
    t.push_back({s, d, 1.0});
    t.push_back({d, s, 1.0});
  }
  return SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t));
}

// A + I
inline PropagationMatrix raw_self_loop(const Graph& g) {
  std::vector<Triplet> t;
  t.reserve(g.edges.size() * 2 + static_cast<std::size_t>(g.num_nodes));
  for (const auto& [s, d] : g.edges) {
    t.push_back({s, d, 1.0});
    t.push_back({d, s, 1.0});
  }
  for (Index i = 0; i < g.num_nodes; ++i) t.push_back({i, i, 1.0});
  return {PropagationKind::RawSelfLoop, SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t))};
}

// D~^{-1/2} (A + I) D~^{-1/2}
inline PropagationMatrix gcn_renormalize(const Graph& g) {
  const auto deg = degrees(g);
  std::vector<double> inv_sqrt(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
  std::vector<Triplet> t;
  t.reserve(g.edges.size() * 2 + deg.size());
  for (const auto& [s, d] : g.edges) {
    const double w = inv_sqrt[static_cast<std::size_t>(s)] * inv_sqrt[static_cast<std::size_t>(d)];
    t.push_back({s, d, w});
    t.push_back({d, s, w});
  }
  for (Index i = 0; i < g.num_nodes; ++i) {
    const double w = inv_sqrt[static_cast<std::size_t>(i)];
    t.push_back({i, i, w * w});
  }
  return {PropagationKind::GcnRenorm, SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t))};
}

namespace detail {

// I - D^{-1/2} A D^{-1/2}; isolated nodes either throw or keep L_ii = 1.
inline SparseMatrix normalized_laplacian(const Graph& g, bool allow_isolated) {
  const auto deg = degrees(g);
  std::vector<double> inv_sqrt(deg.size(), 0.0);
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (deg[i] == 0) {
      if (!allow_isolated) {
        throw DatasetError("sym_laplacian: node " + std::to_string(i) + " has degree zero");
      }
      continue;
    }
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i]));
  }
  std::vector<Triplet> t;
  t.reserve(g.edges.size() * 2 + deg.size());
  for (const auto& [s, d] : g.edges) {
    const double w = -inv_sqrt[static_cast<std::size_t>(s)] * inv_sqrt[static_cast<std::size_t>(d)];
    t.push_back({s, d, w});
    t.push_back({d, s, w});
  }
  for (Index i = 0; i < g.num_nodes; ++i) t.push_back({i, i, 1.0});
  return SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t));
}

}  // namespace detail

inline PropagationMatrix sym_laplacian(const Graph& g) {
  return {PropagationKind::SymLaplacian, detail::normalized_laplacian(g, false)};
}

inline constexpr double kDefaultLambdaMax = 2.0;

// (2 / lambda_max) L - I. Isolated nodes keep L_ii = 1 here instead of throwing.
inline PropagationMatrix cheb_scaled_laplacian(const Graph& g, double lambda_max = kDefaultLambdaMax) {
  if (!(lambda_max > 0.0)) throw std::invalid_argument("cheb_scaled_laplacian: lambda_max must be positive");
  const SparseMatrix lap = detail::normalized_laplacian(g, true);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(lap.nnz()));
  const double c = 2.0 / lambda_max;
  for (Index i = 0; i < lap.rows(); ++i) {
    for (Index e = lap.row_begin(i); e < lap.row_end(i); ++e) {
      const double v = c * lap.value(e) - (lap.col(e) == i ? 1.0 : 0.0);
      t.push_back({i, lap.col(e), v});
    }
  }
  return {PropagationKind::ChebScaled, SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t))};
}

// Row i averages the neighbors of i (self excluded); isolated rows are empty.
inline PropagationMatrix mean_neighbor(const Graph& g) {
  const auto deg = degrees(g);
  std::vector<Triplet> t;
  t.reserve(g.edges.size() * 2);
  for (const auto& [s, d] : g.edges) {
    t.push_back({s, d, 1.0 / static_cast<double>(deg[static_cast<std::size_t>(s)])});
    t.push_back({d, s, 1.0 / static_cast<double>(deg[static_cast<std::size_t>(d)])});
  }
  return {PropagationKind::MeanNeighbor, SparseMatrix::from_triplets(g.num_nodes, g.num_nodes, std::move(t))};
}

// ---------------------------------------------------------------- synthetic

enum class SynthKind { Sbm, Grid, Star, Citation };

inline SynthKind parse_synth_kind(std::string_view name) {
  if (name == "sbm") return SynthKind::Sbm;
  if (name == "grid") return SynthKind::Grid;
  if (name == "star") return SynthKind::Star;
  if (name == "citation") return SynthKind::Citation;
  throw std::invalid_argument("unknown synthetic graph kind '" + std::string(name) + "'");
}

struct SynthParams {
  // sbm: `nodes` split evenly over `blocks`; star: `nodes` including the hub;
  // citation: `nodes` split over `blocks` classes.
  Index nodes = 20;
  Index blocks = 2;
  double p_in = 0.5;
  double p_out = 0.05;
  // grid
  Index grid_rows = 4;
  Index grid_cols = 4;
  // features: 0 means one-hot labels; otherwise label one-hot embedded in the
  // first `blocks` columns plus Gaussian noise of std feature_noise.
  Index feature_dim = 0;
  double feature_noise = 0.0;
  // citation-like bag-of-words fixture
  Index citation_edges = 0;           // 0: nodes * 1.95
  double homophily = 0.81;
  Index words_per_node = 18;
  double topic_strength = 0.5;
  // split
  Index train_per_class = 0;          // >0: fixed count per class, else fractions
  double train_fraction = 0.3;
  double val_fraction = 0.2;
  Index val_size = 0;                 // used with train_per_class
  Index test_size = 0;                // used with train_per_class
};

namespace detail {

inline Split stratified_split(const std::vector<Index>& labels, Index num_classes, const SynthParams& p, Rng& rng) {
  std::vector<Index> order(labels.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> train, val, test;
  if (p.train_per_class > 0) {
    std::vector<Index> taken(static_cast<std::size_t>(num_classes), 0);
    std::vector<Index> rest;
    for (Index v : order) {
      auto& c = taken[static_cast<std::size_t>(labels[static_cast<std::size_t>(v)])];
      if (c < p.train_per_class) {
        train.push_back(v);
        ++c;
      } else {
        rest.push_back(v);
      }
    }
    const std::size_t nval = std::min<std::size_t>(static_cast<std::size_t>(p.val_size), rest.size());
    const std::size_t ntest = std::min<std::size_t>(static_cast<std::size_t>(p.test_size), rest.size() - nval);
    val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(nval));
    test.assign(rest.begin() + static_cast<std::ptrdiff_t>(nval),
                rest.begin() + static_cast<std::ptrdiff_t>(nval + ntest));
  } else {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
    for (Index v : order) by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(v)])].push_back(v);
    for (const auto& members : by_class) {
      const auto n = static_cast<double>(members.size());
      auto ntrain = static_cast<std::size_t>(std::max(1.0, std::round(n * p.train_fraction)));
      auto nval = static_cast<std::size_t>(std::round(n * p.val_fraction));
      ntrain = std::min(ntrain, members.size());
      nval = std::min(nval, members.size() - ntrain);
      for (std::size_t i = 0; i < members.size(); ++i) {
        (i < ntrain ? train : i < ntrain + nval ? val : test).push_back(members[i]);
      }
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  return Split(std::move(train), std::move(val), std::move(test));
}

inline Matrix label_features(const std::vector<Index>& labels, Index num_classes, const SynthParams& p, Rng& rng) {
  const Index dim = p.feature_dim > 0 ? std::max(p.feature_dim, num_classes) : num_classes;
  Matrix x = Matrix::Zero(static_cast<Index>(labels.size()), dim);
  for (std::size_t i = 0; i < labels.size(); ++i) x(static_cast<Index>(i), labels[i]) = 1.0;
  if (p.feature_noise > 0.0) x += gaussian_matrix(x.rows(), x.cols(), rng, p.feature_noise);
  return x;
}

inline void add_edge(std::set<std::pair<Index, Index>>& edges, Index a, Index b) {
  if (a == b) return;
  edges.insert({std::min(a, b), std::max(a, b)});
}

}  // namespace detail

inline Dataset sbm_graph(const SynthParams& p, std::uint64_t seed) {
  if (p.blocks < 1 || p.nodes < p.blocks) throw std::invalid_argument("sbm: need nodes >= blocks >= 1");
  if (p.p_in < 0 || p.p_in > 1 || p.p_out < 0 || p.p_out > 1) throw std::invalid_argument("sbm: probabilities must lie in [0,1]");
  Rng rng(mix_seed(seed, 11));
  Dataset ds;
  Graph& g = ds.graph;
  g.name = "sbm";
  g.num_nodes = p.nodes;
  g.num_classes = p.blocks;
  for (Index i = 0; i < p.nodes; ++i) g.labels.push_back(i * p.blocks / p.nodes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < p.nodes; ++i) {
    for (Index j = i + 1; j < p.nodes; ++j) {
      const double prob = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)] ? p.p_in : p.p_out;
      if (u(rng) < prob) g.edges.emplace_back(i, j);
    }
  }
  g.features = detail::label_features(g.labels, g.num_classes, p, rng);
  ds.split = detail::stratified_split(g.labels, g.num_classes, p, rng);
  g.validate();
  return ds;
}

// 4-neighbor lattice; labels split the lattice into left/right halves.
inline Dataset grid_graph(const SynthParams& p, std::uint64_t seed) {
  if (p.grid_rows < 1 || p.grid_cols < 2) throw std::invalid_argument("grid: need rows >= 1 and cols >= 2");
  Rng rng(mix_seed(seed, 12));
  Dataset ds;
  Graph& g = ds.graph;
  g.name = "grid";
  g.num_nodes = p.grid_rows * p.grid_cols;
  g.num_classes = 2;
  for (Index r = 0; r < p.grid_rows; ++r) {
    for (Index c = 0; c < p.grid_cols; ++c) {
      const Index v = r * p.grid_cols + c;
      g.labels.push_back(c < p.grid_cols / 2 ? 0 : 1);
      if (c + 1 < p.grid_cols) g.edges.emplace_back(v, v + 1);
      if (r + 1 < p.grid_rows) g.edges.emplace_back(v, v + p.grid_cols);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.features = detail::label_features(g.labels, g.num_classes, p, rng);
  ds.split = detail::stratified_split(g.labels, g.num_classes, p, rng);
  g.validate();
  return ds;
}

// Node 0 is the hub (class 0); leaves are class 1.
inline Dataset star_graph(const SynthParams& p, std::uint64_t seed) {
  if (p.nodes < 2) throw std::invalid_argument("star: need at least 2 nodes");
  Rng rng(mix_seed(seed, 13));
  Dataset ds;
  Graph& g = ds.graph;
  g.name = "star";
  g.num_nodes = p.nodes;
  g.num_classes = 2;
  g.labels.push_back(0);
  for (Index v = 1; v < p.nodes; ++v) {
    g.labels.push_back(1);
    g.edges.emplace_back(0, v);
  }
  g.features = detail::label_features(g.labels, g.num_classes, p, rng);
  ds.split = detail::stratified_split(g.labels, g.num_classes, p, rng);
  g.validate();
  return ds;
}

// Bag-of-words citation-style graph: homophilous edges, sparse binary
// features where a fraction of each node's words comes from a class topic.
inline Dataset citation_graph(const SynthParams& p, std::uint64_t seed) {
  if (p.blocks < 2 || p.nodes < 2 * p.blocks) throw std::invalid_argument("citation: need blocks >= 2 and nodes >= 2*blocks");
  if (p.feature_dim < p.blocks) throw std::invalid_argument("citation: feature_dim must be >= number of classes");
  if (p.homophily < 0 || p.homophily > 1 || p.topic_strength < 0 || p.topic_strength > 1) {
    throw std::invalid_argument("citation: homophily and topic_strength must lie in [0,1]");
  }
  Rng rng(mix_seed(seed, 14));
  Dataset ds;
  Graph& g = ds.graph;
  g.name = "citation";
  g.num_nodes = p.nodes;
  g.num_classes = p.blocks;

  // uneven class sizes: weights 1..blocks shuffled
  std::vector<double> weight(static_cast<std::size_t>(p.blocks));
  std::iota(weight.begin(), weight.end(), 2.0);
  std::shuffle(weight.begin(), weight.end(), rng);
  std::discrete_distribution<Index> pick_class(weight.begin(), weight.end());
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(p.blocks));
  for (Index v = 0; v < p.nodes; ++v) {
    Index c = v < 2 * p.blocks ? v % p.blocks : pick_class(rng);
    g.labels.push_back(c);
    members[static_cast<std::size_t>(c)].push_back(v);
  }

  std::set<std::pair<Index, Index>> edges;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_member = [&](Index c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    return m[std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(rng)];
  };
  // every node gets one homophilous edge so none is isolated
  for (Index v = 0; v < p.nodes; ++v) {
    Index w = v;
    while (w == v) w = random_member(g.labels[static_cast<std::size_t>(v)]);
    detail::add_edge(edges, v, w);
  }
  const Index target = p.citation_edges > 0 ? p.citation_edges : static_cast<Index>(std::llround(1.95 * p.nodes));
  std::uniform_int_distribution<Index> any_node(0, p.nodes - 1);
  for (Index guard = 0; static_cast<Index>(edges.size()) < target && guard < 50 * target; ++guard) {
    const Index a = any_node(rng);
    const Index b = u(rng) < p.homophily ? random_member(g.labels[static_cast<std::size_t>(a)]) : any_node(rng);
    detail::add_edge(edges, a, b);
  }
  g.edges.assign(edges.begin(), edges.end());

  const Index vocab = p.feature_dim;
  const Index chunk = vocab / p.blocks;
  g.features = Matrix::Zero(p.nodes, vocab);
  std::uniform_int_distribution<Index> any_word(0, vocab - 1);
  std::uniform_int_distribution<Index> topic_word(0, chunk - 1);
  for (Index v = 0; v < p.nodes; ++v) {
    const Index c = g.labels[static_cast<std::size_t>(v)];
    for (Index w = 0; w < p.words_per_node; ++w) {
      const Index word = u(rng) < p.topic_strength ? c * chunk + topic_word(rng) : any_word(rng);
      g.features(v, word) = 1.0;
    }
  }
  ds.split = detail::stratified_split(g.labels, g.num_classes, p, rng);
  g.validate();
  return ds;
}

inline Dataset synth_graph(SynthKind kind, const SynthParams& p, std::uint64_t seed) {
  switch (kind) {
    case SynthKind::Sbm: return sbm_graph(p, seed);
    case SynthKind::Grid: return grid_graph(p, seed);
    case SynthKind::Star: return star_graph(p, seed);
    case SynthKind::Citation: return citation_graph(p, seed);
  }
  throw std::logic_error("synth_graph: bad kind");
}

// Cora-shaped stand-in: 2708 nodes, 1433 binary features, 7 classes,
// 20 labels per class for training, 500 validation and 1000 test nodes.
inline SynthParams cora_like_params() {
  SynthParams p;
  p.nodes = 2708;
  p.blocks = 7;
  p.feature_dim = 1433;
  p.citation_edges = 5278;
  p.homophily = 0.81;
  p.words_per_node = 18;
  p.topic_strength = 0.3;
  p.train_per_class = 20;
  p.val_size = 500;
  p.test_size = 1000;
  return p;
}

// PubMed-shaped (500 features, 3 classes) at reduced node count.
inline SynthParams pubmed_like_params(Index nodes = 3000) {
  SynthParams p;
  p.nodes = nodes;
  p.blocks = 3;
  p.feature_dim = 500;
  p.citation_edges = static_cast<Index>(std::llround(2.25 * static_cast<double>(nodes)));
  p.homophily = 0.80;
  p.words_per_node = 50;
  p.topic_strength = 0.25;
  p.train_per_class = 20;
  p.val_size = 500;
  p.test_size = 1000;
  return p;
}

}  // namespace nac
