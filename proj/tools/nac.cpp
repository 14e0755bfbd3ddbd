// nac: search, retrain, baseline, verify, bench and sweep.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nac/datasets.hpp"
#include "nac/evaluation.hpp"
#include "nac/gradcheck.hpp"
#include "nac/runtime.hpp"
#include "nac/search.hpp"
#include "nac/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nac;

namespace {

constexpr const char* kVersion = "1.0.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_csv(s)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size()) throw UsageError("'" + t + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

int env_threads() {
  const char* v = std::getenv("NAC_THREADS");
  if (v == nullptr) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// Runs fn(i) for i in [0, n) on up to NAC_THREADS workers.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(env_threads()), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ------------------------------------------------------------ shared flags

struct DataOptions {
  std::string data;
  std::string row_normalize = "auto";
  std::uint64_t seed = 0;
  std::string out = "nac-out";

  void add(CLI::App* cmd) {
    cmd->add_option("--data", data, "dataset directory or synth:NAME[:SEED]")->required();
    cmd->add_option("--row-normalize", row_normalize, "row-normalize features: auto|true|false")
        ->check(CLI::IsMember({"auto", "true", "false"}));
    cmd->add_option("--seed", seed, "run seed");
    cmd->add_option("--out", out, "output directory");
  }

  ResolvedDataset load() const {
    std::optional<bool> rn;
    if (row_normalize != "auto") rn = row_normalize == "true";
    return resolve_dataset(data, rn);
  }
};

struct SpaceOptions {
  int layers = 3;
  std::string ops = "mlp,gcn,gat,gin,geniepath,sage_mean,cheb";
  int cheb_order = 2;
  Index hidden = 64;
  std::string init = "orthogonal";
  std::string activation = "relu";
  double lambda_max = kDefaultLambdaMax;

  void add(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "number of mixed layers");
    cmd->add_option("--ops", ops, "comma-separated operator names");
    cmd->add_option("--cheb-order", cheb_order, "Chebyshev order of the cheb operator");
    cmd->add_option("--hidden", hidden, "hidden dimension");
    cmd->add_option("--init", init, "orthogonal|kaiming-normal|kaiming-uniform");
    cmd->add_option("--activation", activation, "relu|elu|identity");
    cmd->add_option("--lambda-max", lambda_max, "spectral bound for the scaled Laplacian");
  }

  SearchSpaceConfig config() const {
    SearchSpaceConfig c;
    c.num_layers = layers;
    c.operators = parse_operator_list(ops, cheb_order);
    c.hidden_dim = hidden;
    c.init = parse_init_scheme(init);
    c.activation = parse_activation(activation);
    c.lambda_max = lambda_max;
    return c;
  }

  json to_json() const {
    return {{"layers", layers},         {"ops", ops},       {"cheb_order", cheb_order}, {"hidden", hidden},
            {"init", init},             {"activation", activation}, {"lambda_max", lambda_max}};
  }
};

struct SearchOptions {
  std::string mode = "nac";
  int epochs = 100;
  double rho = 1e-3;
  double arch_lr = 3e-4;
  double arch_wd = 1e-3;
  double weight_lr = 0.025;
  double weight_wd = 5e-4;

  void add(CLI::App* cmd, bool with_mode = true, bool with_rho = true) {
    if (with_mode) cmd->add_option("--mode", mode, "nac|nac-plus|nac-updating");
    cmd->add_option("--epochs", epochs, "search epochs");
    if (with_rho) cmd->add_option("--rho", rho, "L1 weight on alpha");
    cmd->add_option("--arch-lr", arch_lr, "Adam learning rate for alpha");
    cmd->add_option("--arch-wd", arch_wd, "Adam weight decay for alpha");
    cmd->add_option("--weight-lr", weight_lr, "SGD learning rate for weights (nac-plus, nac-updating)");
    cmd->add_option("--weight-wd", weight_wd, "SGD weight decay for weights");
  }

  SearchConfig config(std::uint64_t seed) const {
    SearchConfig c;
    c.mode = parse_search_mode(mode);
    c.epochs = epochs;
    c.rho = rho;
    c.arch.lr = arch_lr;
    c.arch.weight_decay = arch_wd;
    c.weights.lr = weight_lr;
    c.weights.weight_decay = weight_wd;
    c.seed = seed;
    return c;
  }

  json to_json() const {
    return {{"mode", mode},       {"epochs", epochs},       {"rho", rho},
            {"arch_lr", arch_lr}, {"arch_wd", arch_wd},     {"weight_lr", weight_lr},
            {"weight_wd", weight_wd}};
  }
};

// Retraining flags; unset values fall back to the per-dataset defaults.
struct RetrainOptions {
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> wd;
  std::optional<Index> hidden;
  std::optional<double> dropout;
  std::optional<std::string> activation;
  int seeds = 4;

  void add(CLI::App* cmd, const std::string& prefix = "") {
    cmd->add_option("--" + prefix + "epochs", epochs, "retraining epochs (default 400)");
    cmd->add_option("--" + prefix + "lr", lr, "retraining learning rate");
    cmd->add_option("--" + prefix + "wd", wd, "retraining weight decay");
    cmd->add_option("--" + prefix + "hidden", hidden, "retraining hidden dimension");
    cmd->add_option("--" + prefix + "dropout", dropout, "retraining dropout");
    cmd->add_option("--" + prefix + "activation", activation, "relu|elu|identity");
    cmd->add_option("--seeds", seeds, "number of retraining seeds");
  }

  RetrainConfig config(const std::string& dataset) const {
    RetrainConfig c = retrain_defaults(dataset);
    if (epochs) c.epochs = *epochs;
    if (lr) c.lr = *lr;
    if (wd) c.weight_decay = *wd;
    if (hidden) c.hidden = *hidden;
    if (dropout) c.dropout = *dropout;
    if (activation) c.activation = parse_activation(*activation);
    c.seeds = seeds;
    c.validate();
    return c;
  }
};

json retrain_json(const RetrainConfig& c) {
  return {{"epochs", c.epochs},   {"lr", c.lr},           {"weight_decay", c.weight_decay},
          {"hidden", c.hidden},   {"dropout", c.dropout}, {"activation", to_string(c.activation)},
          {"seeds", c.seeds}};
}

json manifest(const std::string& command, const json& config, std::uint64_t seed, const ResolvedDataset* ds,
              const std::string& started, const json& timing) {
  json m = {{"tool", "nac"},
            {"version", kVersion},
            {"command", command},
            {"config", config},
            {"seed", seed},
            {"started_at", started},
            {"finished_at", utc_now()},
            {"timing", timing},
            {"operator_notes", {{"geniepath", "breadth-only attention with tanh gate"}, {"gat", "single head"}}}};
  if (ds != nullptr) {
    m["dataset"] = {{"name", ds->data.graph.name},
                    {"source", ds->source},
                    {"synthetic", ds->synthetic},
                    {"row_normalized", ds->row_normalized},
                    {"nodes", ds->data.graph.num_nodes},
                    {"edges", ds->data.graph.edges.size()},
                    {"features", ds->data.graph.feature_dim()},
                    {"classes", ds->data.graph.num_classes},
                    {"checksums", ds->checksums}};
  }
  return m;
}

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

std::vector<OperatorKind> parse_arch(const std::string& arch, int cheb_order) {
  if (fs::is_regular_file(arch)) {
    std::ifstream in(arch);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw UsageError("cannot parse architecture file " + arch + ": " + e.what());
    }
    std::vector<OperatorKind> out;
    for (const auto& n : j.at("layers")) {
      OperatorKind k = parse_operator(n.get<std::string>());
      k.cheb_order = cheb_order;
      out.push_back(k);
    }
    return out;
  }
  return parse_operator_list(arch, cheb_order);
}

std::size_t near_zero_count(const Matrix& alpha, double threshold = 1e-3) {
  return static_cast<std::size_t>((alpha.array().abs() < threshold).count());
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? sep : "") + parts[i];
  return s;
}

// ----------------------------------------------------------------- search

struct SearchCmd {
  DataOptions data;
  SpaceOptions space;
  SearchOptions search;

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("search", "architecture search with frozen weights");
    data.add(cmd);
    space.add(cmd);
    search.add(cmd);
    cmd->callback([this] { run(); });
  }

  void run() {
    const std::string started = utc_now();
    const SearchSpaceConfig sc = space.config();
    const SearchConfig cfg = search.config(data.seed);
    const ResolvedDataset ds = data.load();
    const SearchResult r = nac::search(sc, cfg, ds.data);
    const fs::path out = prepare_out(data.out);

    json arch = r.selection.to_json();
    arch["manifest"] = "manifest.json";
    write_json(out / "arch.json", arch);
    std::ostringstream trace;
    r.trace.write_csv(trace);
    write_text(out / "trace.csv", trace.str());
    write_json(out / "alpha.json", {{"manifest", "manifest.json"}, {"snapshots", r.trace.alpha_json()}});
    json cfg_json = {{"space", space.to_json()}, {"search", search.to_json()}, {"data", data.data}};
    json timing = {{"search_ms", r.trace.total_ms()},
                   {"updated_params_per_epoch", updated_parameter_count(cfg.mode, r.net)}};
    {
      char buf[2][17];
      std::snprintf(buf[0], 17, "%016llx", static_cast<unsigned long long>(r.fixed_hash_before));
      std::snprintf(buf[1], 17, "%016llx", static_cast<unsigned long long>(r.fixed_hash_after));
      timing["fixed_hash_before"] = buf[0];
      timing["fixed_hash_after"] = buf[1];
    }
    write_json(out / "manifest.json", manifest("search", cfg_json, data.seed, &ds, started, timing));
    std::cout << "selected: " << join(r.selection.layer_names(), ",") << "\n"
              << "final loss: " << r.trace.epochs.back().loss << "  search time: " << r.trace.total_ms() / 1000.0
              << " s\n"
              << "wrote " << (out / "arch.json").string() << "\n";
  }
};

// ---------------------------------------------------------------- retrain

struct RetrainCmd {
  DataOptions data;
  RetrainOptions retrain;
  std::string arch;
  int cheb_order = 2;

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("retrain", "train a derived architecture from scratch");
    data.add(cmd);
    cmd->add_option("--arch", arch, "arch.json from search, or a comma-separated operator list")->required();
    cmd->add_option("--cheb-order", cheb_order, "Chebyshev order of cheb layers");
    retrain.add(cmd);
    cmd->callback([this] { run(); });
  }

  void run() {
    const std::string started = utc_now();
    const auto layers = parse_arch(arch, cheb_order);
    const ResolvedDataset ds = data.load();
    const RetrainConfig cfg = retrain.config(ds.data.graph.name);
    const PreparedGraph g = PreparedGraph::from(ds.data.graph, cfg.lambda_max);
    const RetrainSummary s = retrain_seeds(layers, ds.data, g, cfg, seed_list(data.seed, cfg.seeds));
    const fs::path out = prepare_out(data.out);
    json res = s.to_json();
    res["manifest"] = "manifest.json";
    write_json(out / "results.json", res);
    write_json(out / "manifest.json",
               manifest("retrain", {{"retrain", retrain_json(cfg)}, {"arch", arch}, {"data", data.data}}, data.seed,
                        &ds, started, {{"time_s", s.seconds()}}));
    std::cout << join(s.arch, ",") << ": test accuracy " << std::fixed << std::setprecision(4) << s.mean() << " +- "
              << s.stddev() << " (max " << s.max() << ") over " << s.runs.size() << " seeds\n";
  }
};

// --------------------------------------------------------------- baseline

struct BaselineCmd {
  DataOptions data;
  SpaceOptions space;
  RetrainOptions retrain;
  std::string kind = "random";
  int budget = 5;
  int short_epochs = 100;

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("baseline", "random-search or single-operator baselines");
    data.add(cmd);
    space.add(cmd);
    retrain.add(cmd, "retrain-");
    cmd->add_option("--kind", kind, "random|single")->check(CLI::IsMember({"random", "single"}));
    cmd->add_option("--budget", budget, "random-search budget");
    cmd->add_option("--short-epochs", short_epochs, "epochs of each candidate retrain in random search");
    cmd->callback([this] { run(); });
  }

  void run() {
    const std::string started = utc_now();
    const SearchSpaceConfig sc = space.config();
    const ResolvedDataset ds = data.load();
    const RetrainConfig cfg = retrain.config(ds.data.graph.name);
    const PreparedGraph g = PreparedGraph::from(ds.data.graph, cfg.lambda_max);
    const auto seeds = seed_list(data.seed, cfg.seeds);
    const fs::path out = prepare_out(data.out);
    json rows = json::array();
    std::ostringstream csv;
    csv << "baseline,arch,test_acc_mean,test_acc_std,test_acc_max\n";
    double total_s = 0.0;
    if (kind == "random") {
      std::vector<RandomSearchResult> runs(seeds.size());
      parallel_for(seeds.size(), [&](std::size_t i) {
        runs[i] = random_search_baseline(ds.data, g, sc.operators, sc.num_layers, budget, cfg, short_epochs, seeds[i]);
      });
      RetrainSummary s;
      s.seeds = seeds;
      json per_seed = json::array();
      for (const auto& r : runs) {
        s.runs.push_back(r.metrics);
        std::vector<std::string> names;
        for (const auto& k : r.best) names.push_back(operator_name(k));
        per_seed.push_back({{"arch", names}, {"accuracy", r.metrics.accuracy}, {"retrains", r.retrains}});
      }
      json j = s.to_json();
      j.erase("arch");
      j["per_seed"] = per_seed;
      j["budget"] = budget;
      rows.push_back(j);
      total_s = s.seconds();
      csv << "random," << "per-seed," << s.mean() << ',' << s.stddev() << ',' << s.max() << '\n';
    } else {
      std::vector<RetrainSummary> runs(sc.operators.size());
      parallel_for(sc.operators.size(), [&](std::size_t i) {
        const std::vector<OperatorKind> layers(static_cast<std::size_t>(sc.num_layers), sc.operators[i]);
        runs[i] = retrain_seeds(layers, ds.data, g, cfg, seeds);
      });
      for (const auto& s : runs) {
        rows.push_back(s.to_json());
        total_s += s.seconds();
        csv << "single," << join(s.arch, "-") << ',' << s.mean() << ',' << s.stddev() << ',' << s.max() << '\n';
      }
    }
    write_json(out / "baseline.json", {{"manifest", "manifest.json"}, {"kind", kind}, {"results", rows}});
    write_text(out / "baseline.csv", csv.str());
    write_json(out / "manifest.json",
               manifest("baseline",
                        {{"kind", kind}, {"budget", budget}, {"short_epochs", short_epochs}, {"space", space.to_json()},
                         {"retrain", retrain_json(cfg)}, {"data", data.data}},
                        data.seed, &ds, started, {{"time_s", total_s}}));
    std::cout << csv.str();
  }
};

// ----------------------------------------------------------------- verify

struct VerifyCmd {
  std::string checks = "theorem1,coherence,spectrum,dictionary-form,gradients";
  std::uint64_t seed = 0;
  int instances = 100;
  std::string out = "nac-out";

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("verify", "numerical checks of the theory");
    cmd->add_option("--check", checks,
                    "comma-separated: theorem1,coherence,spectrum,dictionary-form,gradients,ce-convergence");
    cmd->add_option("--seed", seed, "base seed");
    cmd->add_option("--instances", instances, "random instances / seeds per check");
    cmd->add_option("--out", out, "output directory");
    cmd->callback([this] { run(); });
  }

  Verdict theorem1() const {
    Rng rng(mix_seed(seed, 1));
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      const EquivalenceCase c = random_equivalence_case(rng);
      worst = std::max(worst, verify_output_equivalence(c.instance, c.trained, c.trained_out, 1e-6).discrepancy);
    }
    return make_verdict("theorem1", worst, 1e-6, worst <= 1e-6, std::to_string(instances) + " instances");
  }

  Verdict coherence() const {
    int below = 0;
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      Rng rng(mix_seed(seed + static_cast<std::uint64_t>(i), 2));
      const double phi = mutual_coherence(gaussian_matrix(4096, 32, rng)).phi;
      below += phi < 0.08;
      worst = std::max(worst, phi);
    }
    Rng rng(mix_seed(seed, 3));
    const double ortho = mutual_coherence(orthogonal_matrix(4096, 32, rng)).phi;
    const int need = (95 * instances + 99) / 100;
    return make_verdict("coherence", worst, 0.08, below >= need && ortho < 1e-12,
                        std::to_string(below) + "/" + std::to_string(instances) + " below 0.08; orthonormal phi " +
                            std::to_string(ortho));
  }

  Verdict spectrum_check() const {
    int larger = 0;
    double worst_ortho = 1.0;
    for (int i = 0; i < instances; ++i) {
      Rng rng(mix_seed(seed + static_cast<std::uint64_t>(i), 4));
      const double co = spectrum(random_weight_stack(InitScheme::Orthogonal, 64, 3, rng)).condition;
      const double ck = spectrum(random_weight_stack(InitScheme::KaimingNormal, 64, 3, rng)).condition;
      worst_ortho = std::max(worst_ortho, co);
      larger += ck > co;
    }
    const int need = (95 * instances + 99) / 100;
    return make_verdict("spectrum", worst_ortho, 1.0 + 1e-5, worst_ortho <= 1.0 + 1e-5 && larger >= need,
                        std::to_string(larger) + "/" + std::to_string(instances) + " kaiming products worse conditioned");
  }

  Verdict dictionary() const {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Rng rng(mix_seed(seed + static_cast<std::uint64_t>(i), 5));
      SynthParams p;
      p.nodes = 10;
      p.p_in = 0.4;
      p.p_out = 0.2;
      const Dataset ds = sbm_graph(p, rng());
      worst = std::max(worst, dictionary_form_check(ds.graph, DictionaryFamily::Gcn, 2, 4, false, rng).value);
    }
    return make_verdict("dictionary-form", worst, 1e-10, worst <= 1e-10, "20 graphs, 2-layer linear gcn");
  }

  Verdict gradients() const { return gradient_verdict(gradient_suite(seed)); }

  Verdict ce_convergence() const {
    Rng rng(mix_seed(seed, 6));
    Matrix x;
    std::vector<Index> y;
    separable_blobs(50, 1.5, rng, x, y);
    const ConvergenceReport r = ce_convergence_probe(x, y, 200, 0.1);
    Verdict v = make_verdict("ce-convergence", r.decay, 1.0, r.strictly_decreasing && r.decay > 0 && r.decay < 1,
                             "fitted geometric factor of distance to final iterate");
    if (!r.separable) v.status = "fail";
    return v;
  }

  void run() {
    const std::string started = utc_now();
    std::vector<Verdict> verdicts;
    for (const auto& c : split_csv(checks)) {
      if (c == "theorem1") verdicts.push_back(theorem1());
      else if (c == "coherence") verdicts.push_back(coherence());
      else if (c == "spectrum") verdicts.push_back(spectrum_check());
      else if (c == "dictionary-form") verdicts.push_back(dictionary());
      else if (c == "gradients") verdicts.push_back(gradients());
      else if (c == "ce-convergence") verdicts.push_back(ce_convergence());
      else throw UsageError("unknown check '" + c + "'");
    }
    if (verdicts.empty()) throw UsageError("no checks selected");
    const fs::path dir = prepare_out(out);
    json arr = json::array();
    bool ok = true;
    for (const auto& v : verdicts) {
      arr.push_back(v.to_json());
      ok = ok && v.passed();
      std::cout << std::left << std::setw(16) << v.check << ' ' << std::setw(5) << v.status << " value=" << v.value
                << " tol=" << v.tolerance << (v.detail.empty() ? "" : "  (" + v.detail + ")") << "\n";
    }
    write_json(dir / "verdicts.json", {{"manifest", "manifest.json"}, {"verdicts", arr}});
    write_json(dir / "manifest.json",
               manifest("verify", {{"checks", checks}, {"instances", instances}}, seed, nullptr, started, json::object()));
    if (!ok) throw std::runtime_error("verification failed");
  }
};

// ------------------------------------------------------------------ bench

struct BenchCmd {
  DataOptions data;
  SpaceOptions space;
  SearchOptions search;
  RetrainOptions retrain;
  std::string modes = "nac,nac-updating";
  bool no_retrain = false;
  int random_budget = 0;
  int short_epochs = 100;

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("bench", "timing and accuracy leaderboard across search modes");
    data.add(cmd);
    space.add(cmd);
    search.add(cmd, false);
    retrain.add(cmd, "retrain-");
    cmd->add_option("--modes", modes, "comma-separated search modes");
    cmd->add_flag("--no-retrain", no_retrain, "report timing only");
    cmd->add_option("--random-budget", random_budget, "add a random-search row with this budget (0: none)");
    cmd->add_option("--short-epochs", short_epochs, "epochs of each candidate retrain in random search");
    cmd->callback([this] { run(); });
  }

  void run() {
    const std::string started = utc_now();
    const SearchSpaceConfig sc = space.config();
    const ResolvedDataset ds = data.load();
    const PreparedGraph g = PreparedGraph::from(ds.data.graph, sc.lambda_max);
    const auto mode_names = split_csv(modes);
    if (mode_names.size() < 2) throw UsageError("bench needs at least two modes");
    std::vector<SearchResult> results;
    std::vector<TimingEntry> entries;
    const std::string key = ds.checksums["content"].get<std::string>() + "/" + std::to_string(data.seed) + "/" +
                            std::to_string(search.epochs) + "/" + space.ops;
    // sequential: timings must not compete for cores
    for (const auto& m : mode_names) {
      SearchOptions o = search;
      o.mode = m;
      results.push_back(nac::search(sc, o.config(data.seed), ds.data, g));
      entries.push_back(timing_entry(results.back().trace, key));
    }
    const TimingReport report = timing_report(entries);
    const fs::path out = prepare_out(data.out);
    std::ostringstream timing_csv;
    report.write_csv(timing_csv);
    write_text(out / "timing.csv", timing_csv.str());
    write_json(out / "timing_plot.json", report.plot_json());

    std::ostringstream board;
    board << "method,arch,test_acc_mean,test_acc_std,search_s,updated_params\n";
    json rows = json::array();
    if (!no_retrain) {
      const RetrainConfig cfg = retrain.config(ds.data.graph.name);
      const auto seeds = seed_list(data.seed, cfg.seeds);
      std::vector<RetrainSummary> sums(results.size());
      parallel_for(results.size(), [&](std::size_t i) {
        sums[i] = retrain_seeds(results[i].selection.layers(), ds.data, g, cfg, seeds);
      });
      for (std::size_t i = 0; i < results.size(); ++i) {
        board << to_string(results[i].trace.mode) << ',' << join(sums[i].arch, "-") << ',' << sums[i].mean() << ','
              << sums[i].stddev() << ',' << entries[i].total_ms / 1000.0 << ',' << entries[i].updated_params << '\n';
        json r = sums[i].to_json();
        r["method"] = to_string(results[i].trace.mode);
        r["search_s"] = entries[i].total_ms / 1000.0;
        rows.push_back(r);
      }
      if (random_budget > 0) {
        std::vector<RandomSearchResult> rs(seeds.size());
        const auto t0 = std::chrono::steady_clock::now();
        parallel_for(seeds.size(), [&](std::size_t i) {
          rs[i] = random_search_baseline(ds.data, g, sc.operators, sc.num_layers, random_budget, cfg, short_epochs,
                                         seeds[i]);
        });
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        RetrainSummary s;
        s.seeds = seeds;
        for (const auto& r : rs) s.runs.push_back(r.metrics);
        board << "random,per-seed," << s.mean() << ',' << s.stddev() << ',' << secs << ",0\n";
        json r = s.to_json();
        r["method"] = "random";
        rows.push_back(r);
      }
    } else {
      for (std::size_t i = 0; i < results.size(); ++i) {
        board << to_string(results[i].trace.mode) << ',' << join(results[i].selection.layer_names(), "-") << ",,,"
              << entries[i].total_ms / 1000.0 << ',' << entries[i].updated_params << '\n';
      }
    }
    write_text(out / "leaderboard.csv", board.str());
    write_json(out / "leaderboard.json", {{"manifest", "manifest.json"}, {"rows", rows}});
    write_json(out / "manifest.json",
               manifest("bench", {{"modes", modes}, {"space", space.to_json()}, {"search", search.to_json()},
                                  {"data", data.data}},
                        data.seed, &ds, started, report.plot_json()));
    std::cout << timing_csv.str() << board.str();
    const TimingEntry* nac = nullptr;
    const TimingEntry* upd = nullptr;
    for (const auto& e : report.entries) {
      if (e.mode == SearchMode::Nac) nac = &e;
      if (e.mode == SearchMode::NacUpdating) upd = &e;
    }
    if (nac && upd) {
      std::cout << "nac total " << nac->total_ms << " ms vs nac-updating " << upd->total_ms << " ms\n";
    }
  }
};

// ------------------------------------------------------------------ sweep

struct SweepCmd {
  DataOptions data;
  SpaceOptions space;
  SearchOptions search;
  RetrainOptions retrain;
  std::string rhos = "0.001,0.1,1,10";
  std::string inits = "orthogonal";
  bool no_retrain = false;

  void add(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("sweep", "ablation grid over init x rho x seed");
    data.add(cmd);
    space.add(cmd);
    search.add(cmd, true, false);
    cmd->add_option("--rho", rhos, "comma-separated rho values");
    cmd->add_option("--inits", inits, "comma-separated init schemes");
    cmd->add_option("--retrain-epochs", retrain.epochs, "retraining epochs per cell");
    cmd->add_option("--retrain-lr", retrain.lr, "retraining learning rate");
    cmd->add_option("--retrain-hidden", retrain.hidden, "retraining hidden dimension");
    cmd->add_option("--seeds", retrain.seeds, "number of seeds (one search + retrain per seed)");
    cmd->add_flag("--no-retrain", no_retrain, "skip retraining");
    cmd->callback([this] { run(); });
  }

  void run() {
    const std::string started = utc_now();
    const std::vector<double> rho_list = parse_doubles(rhos);
    std::vector<InitScheme> init_list;
    for (const auto& s : split_csv(inits)) init_list.push_back(parse_init_scheme(s));
    const ResolvedDataset ds = data.load();
    SearchSpaceConfig base = space.config();
    const PreparedGraph g = PreparedGraph::from(ds.data.graph, base.lambda_max);
    const RetrainConfig rcfg = retrain.config(ds.data.graph.name);
    const auto seeds = seed_list(data.seed, retrain.seeds);

    struct Cell {
      InitScheme init;
      double rho;
      std::uint64_t seed;
      std::vector<std::string> arch;
      std::size_t near_zero = 0;
      double final_loss = 0;
      double search_s = 0;
      double test_acc = std::nan("");
    };
    std::vector<Cell> cells;
    for (auto init : init_list) {
      for (double rho : rho_list) {
        for (auto seed : seeds) cells.push_back({init, rho, seed});
      }
    }
    parallel_for(cells.size(), [&](std::size_t i) {
      Cell& c = cells[i];
      SearchSpaceConfig sc = base;
      sc.init = c.init;
      SearchOptions o = search;
      o.rho = c.rho;
      const SearchResult r = nac::search(sc, o.config(c.seed), ds.data, g);
      c.arch = r.selection.layer_names();
      c.near_zero = near_zero_count(r.net.alpha);
      c.final_loss = r.trace.epochs.back().loss;
      c.search_s = r.trace.total_ms() / 1000.0;
      if (!no_retrain) c.test_acc = nac::retrain(r.selection, ds.data, g, rcfg, c.seed).accuracy;
    });
    std::ostringstream csv;
    csv << std::setprecision(10) << "init,rho,seed,arch,near_zero_alpha,final_loss,test_acc,search_s\n";
    for (const auto& c : cells) {
      csv << to_string(c.init) << ',' << c.rho << ',' << c.seed << ',' << join(c.arch, "-") << ',' << c.near_zero << ','
          << c.final_loss << ',' << (std::isnan(c.test_acc) ? std::string() : std::to_string(c.test_acc)) << ','
          << c.search_s << '\n';
    }
    const fs::path out = prepare_out(data.out);
    write_text(out / "sweep.csv", csv.str());
    write_json(out / "manifest.json",
               manifest("sweep", {{"rho", rhos}, {"inits", inits}, {"space", space.to_json()},
                                  {"search", search.to_json()}, {"retrain", retrain_json(rcfg)}, {"data", data.data}},
                        data.seed, &ds, started, json::object()));
    std::cout << csv.str();
  }
};

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"NAC: architecture search for graph networks with frozen random weights"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "key-value config file (flags override it)");
  app.require_subcommand(1);
  SearchCmd search;
  RetrainCmd retrain;
  BaselineCmd baseline;
  VerifyCmd verify;
  BenchCmd bench;
  SweepCmd sweep;
  search.add(app);
  retrain.add(app);
  baseline.add(app);
  verify.add(app);
  bench.add(app);
  sweep.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
