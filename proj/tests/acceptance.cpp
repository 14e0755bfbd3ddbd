// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
// Exit status: 0 pass, 1 fail, 77 skip (ctest SKIP_RETURN_CODE), 2 usage.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nac/datasets.hpp"
#include "nac/evaluation.hpp"
#include "nac/gradcheck.hpp"
#include "nac/runtime.hpp"
#include "nac/theory.hpp"

using namespace nac;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Result {
  Outcome outcome = Outcome::Fail;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Result verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string join(const std::vector<std::string>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

// ------------------------------------------------------------ theory checks

Result theorem1() {
  const Stopwatch sw;
  Rng rng(mix_seed(0, 1));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const EquivalenceCase c = random_equivalence_case(rng, 64, 16, 4);
    worst = std::max(worst, verify_output_equivalence(c.instance, c.trained, c.trained_out, 1e-6).discrepancy);
  }
  const double t = sw.seconds();
  return verdict(worst <= 1e-6 && t < 5.0,
                 fmt("100 instances, worst relative discrepancy %.2e (tol 1e-6), %.2f s (limit 5 s)", worst, t));
}

Result gradients() {
  const Stopwatch sw;
  std::vector<GradCheck> all;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto& c : gradient_suite(seed)) all.push_back(std::move(c));
  }
  const Verdict v = gradient_verdict(all);
  const double t = sw.seconds();
  return verdict(v.passed() && t < 30.0,
                 fmt("12-node fixtures, 5 seeds: worst relative error %.2e (tol 1e-5; %s), %.2f s (limit 30 s)",
                     v.value, v.detail.c_str(), t));
}

Result coherence() {
  int below = 0;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(s), 2));
    const double phi = mutual_coherence(gaussian_matrix(4096, 32, rng)).phi;
    below += phi < 0.08;
    worst = std::max(worst, phi);
  }
  const double canonical = mutual_coherence(Matrix::Identity(4096, 32)).phi;
  Rng rng(mix_seed(0, 3));
  const double qr = mutual_coherence(orthogonal_matrix(4096, 32, rng)).phi;
  return verdict(below >= 95 && canonical == 0.0 && qr <= 1e-12,
                 fmt("gaussian 4096x32: %d/100 seeds below 0.08 (need 95), worst %.4f; canonical orthonormal phi = "
                     "%g (need exactly 0); QR orthonormal phi = %.1e (round-off)",
                     below, worst, canonical, qr));
}

Result spectrum_check() {
  int larger = 0;
  double worst = 1.0;
  for (int s = 0; s < 100; ++s) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(s), 4));
    const double co = spectrum(random_weight_stack(InitScheme::Orthogonal, 64, 3, rng)).condition;
    const double ck = spectrum(random_weight_stack(InitScheme::KaimingNormal, 64, 3, rng)).condition;
    worst = std::max(worst, co);
    larger += ck > co;
  }
  return verdict(worst <= 1.0 + 1e-5 && larger >= 95,
                 fmt("hidden 64, L=3: orthogonal worst cond %.12f (tol 1+1e-5); kaiming-normal larger on %d/100 "
                     "seeds (need 95)",
                     worst, larger));
}

Result dictionary_form() {
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(i), 5));
    SynthParams p;
    p.nodes = 10 + 2 * i;
    p.p_in = 0.4;
    p.p_out = 0.1;
    const Dataset ds = sbm_graph(p, rng());
    worst = std::max(worst, dictionary_form_check(ds.graph, DictionaryFamily::Gcn, 2, 4, false, rng).value);
  }
  return verdict(worst <= 1e-10, fmt("20 random graphs, 2-layer linear gcn, worst ||F - D W||_F = %.2e (tol 1e-10)", worst));
}

// ----------------------------------------------------------------- searches

SearchConfig search_config(SearchMode mode, int epochs, std::uint64_t seed, double rho = 1e-3) {
  SearchConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.seed = seed;
  c.rho = rho;
  return c;
}

Result cora(const std::optional<std::string>& data_spec) {
  std::string spec;
  bool proxy = false;
  if (data_spec) {
    spec = *data_spec;
    proxy = spec.rfind("synth:", 0) == 0;
  } else if (const char* dir = std::getenv("NAC_CORA_DIR"); dir && *dir) {
    spec = dir;
  } else {
    return {Outcome::Skip,
            "real Cora (public split) is not available; set NAC_CORA_DIR to a converted dataset directory, or pass "
            "--cora-data synth:cora-like for a fixture proxy run (paper reference 87.41 +- 0.92, not asserted)"};
  }
  const Stopwatch sw;
  const ResolvedDataset rd = resolve_dataset(spec);
  const Dataset& ds = rd.data;
  const PreparedGraph g = PreparedGraph::from(ds.graph);
  const RetrainConfig rc = retrain_defaults(proxy ? "cora" : rd.data.graph.name);
  const SearchSpaceConfig space;
  const auto seeds = seed_list(0, 4);

  const SearchResult sr = search(space, search_config(SearchMode::Nac, 100, 0), ds, g);
  const RetrainSummary nac = retrain_seeds(sr.selection.layers(), ds, g, rc, seeds);
  double random_sum = 0.0;
  std::vector<std::string> random_arch;
  for (auto s : seeds) {
    const RandomSearchResult r = random_search_baseline(ds, g, space.operators, space.num_layers, 5, rc, 100, s);
    random_sum += r.metrics.accuracy;
    std::vector<std::string> names;
    for (const auto& k : r.best) names.push_back(operator_name(k));
    random_arch.push_back(join(names, "-"));
  }
  const double random_mean = random_sum / static_cast<double>(seeds.size());
  const double t = sw.seconds();
  const bool ok = nac.mean() >= 0.78 && nac.mean() >= random_mean && t < 20 * 60;
  return verdict(ok, fmt("%s%s: nac [%s] mean test acc %.4f +- %.4f (need >= 0.78), random search budget 5 "
                         "mean %.4f [%s] on paired seeds, %.0f s (limit 1200 s); paper reference 0.8741 +- 0.0092",
                         proxy ? "PROXY fixture " : "", spec.c_str(), join(nac.arch).c_str(), nac.mean(),
                         nac.stddev(), random_mean, join(random_arch, " ").c_str(), t));
}

Result no_update() {
  const ResolvedDataset rd = resolve_dataset("synth:cora-like");
  const PreparedGraph g = PreparedGraph::from(rd.data.graph);
  const SearchSpaceConfig space;
  const int epochs = 10;
  std::map<SearchMode, SearchResult> runs;
  for (auto mode : {SearchMode::Nac, SearchMode::NacPlus, SearchMode::NacUpdating}) {
    runs.emplace(mode, search(space, search_config(mode, epochs, 0), rd.data, g));
  }
  const Supernet& net = runs.at(SearchMode::Nac).net;
  const Index lk = net.alpha.size();
  const Index wo = net.w_out.size();
  const Index full = lk + wo + net.hidden_weight_count();
  auto count = [&](SearchMode m) { return runs.at(m).trace.epochs.front().updated_params; };
  const bool hash_ok = runs.at(SearchMode::Nac).fixed_hash_before == runs.at(SearchMode::Nac).fixed_hash_after;
  const bool counts_ok = lk == 21 && count(SearchMode::Nac) == lk && count(SearchMode::NacPlus) == lk + wo &&
                         count(SearchMode::NacUpdating) == full;
  const double t_nac = runs.at(SearchMode::Nac).trace.total_ms();
  const double t_upd = runs.at(SearchMode::NacUpdating).trace.total_ms();
  return verdict(hash_ok && counts_ok && t_nac < t_upd,
                 fmt("synth:cora-like, %d epochs: nac fixed-weight hash %s; updated params nac %ld (L*K = %ld), "
                     "nac-plus %ld (L*K+|W_o| = %ld), nac-updating %ld (full = %ld); wall-clock nac %.0f ms < "
                     "nac-updating %.0f ms",
                     epochs, hash_ok ? "unchanged" : "CHANGED", static_cast<long>(count(SearchMode::Nac)),
                     static_cast<long>(lk), static_cast<long>(count(SearchMode::NacPlus)), static_cast<long>(lk + wo),
                     static_cast<long>(count(SearchMode::NacUpdating)), static_cast<long>(full), t_nac, t_upd));
}

Result sparsity() {
  const ResolvedDataset rd = resolve_dataset("synth:cora-like");
  const PreparedGraph g = PreparedGraph::from(rd.data.graph);
  const RetrainConfig rc = retrain_defaults("cora");
  const SearchSpaceConfig space;
  std::map<std::vector<Index>, double> retrained;  // deterministic per architecture at a fixed seed
  std::vector<Index> near_zero;
  std::vector<double> acc;
  std::string rows;
  for (double rho : {0.001, 0.1, 1.0, 10.0}) {
    const SearchResult r = search(space, search_config(SearchMode::Nac, 100, 0, rho), rd.data, g);
    near_zero.push_back((r.net.alpha.array().abs() < 1e-3).count());
    auto it = retrained.find(r.selection.indices);
    if (it == retrained.end()) {
      it = retrained.emplace(r.selection.indices, retrain(r.selection, rd.data, g, rc, 0).accuracy).first;
    }
    acc.push_back(it->second);
    rows += fmt(" rho=%g:[%s] near0=%ld acc=%.4f;", rho, join(r.selection.layer_names()).c_str(),
                static_cast<long>(near_zero.back()), acc.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < near_zero.size(); ++i) monotone &= near_zero[i] >= near_zero[i - 1];
  const double spread = *std::max_element(acc.begin(), acc.end()) - *std::min_element(acc.begin(), acc.end());
  return verdict(monotone && spread <= 0.03,
                 fmt("synth:cora-like;%s near-zero (|alpha|<1e-3) count %s in rho; accuracy spread %.2f points "
                     "(limit 3)",
                     rows.c_str(), monotone ? "non-decreasing" : "DECREASES", 100.0 * spread));
}

Result convergence() {
  const ResolvedDataset rd = resolve_dataset("synth:pubmed-like");
  const PreparedGraph g = PreparedGraph::from(rd.data.graph);
  RetrainConfig probe_cfg = retrain_defaults("pubmed");
  probe_cfg.epochs = 50;
  const SearchSpaceConfig space;
  const int epochs = 60;
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ConvergenceProbe probe(rd.data, g, probe_cfg, seed);
    std::size_t stab[2];
    int i = 0;
    for (auto mode : {SearchMode::Nac, SearchMode::NacUpdating}) {
      const SearchResult r = search(space, search_config(mode, epochs, seed), rd.data, g);
      stab[i++] = epochs_to_stabilize(probe.curve(r.trace, space.operators), 10, 0.005);
    }
    wins += stab[0] <= stab[1];
    rows += fmt(" seed %lu: nac %zu vs nac-updating %zu;", static_cast<unsigned long>(seed), stab[0], stab[1]);
  }
  return verdict(wins >= 3, fmt("synth:pubmed-like, %d search epochs, epochs to stabilize (val acc range < 0.5 pt "
                                "over 10 epochs):%s nac <= nac-updating on %d/4 seeds (need 3)",
                                epochs, rows.c_str(), wins));
}

const std::vector<std::string> kCriteria{"theorem1",  "gradients", "coherence", "spectrum",   "dictionary-form",
                                         "cora",      "no-update", "sparsity",  "convergence"};

Result run(const std::string& name, const std::optional<std::string>& cora_data) {
  if (name == "theorem1") return theorem1();
  if (name == "gradients") return gradients();
  if (name == "coherence") return coherence();
  if (name == "spectrum") return spectrum_check();
  if (name == "dictionary-form") return dictionary_form();
  if (name == "cora") return cora(cora_data);
  if (name == "no-update") return no_update();
  if (name == "sparsity") return sparsity();
  if (name == "convergence") return convergence();
  throw std::invalid_argument("unknown criterion '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  std::vector<std::string> selected;
  std::optional<std::string> cora_data;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if ((a == "--criterion" || a == "--cora-data") && i + 1 < argc) {
      (a == "--criterion" ? selected.emplace_back(argv[++i]) : cora_data.emplace(argv[++i]));
    } else if (a == "--list") {
      for (const auto& c : kCriteria) std::cout << c << "\n";
      return 0;
    } else {
      std::cerr << "usage: acceptance [--criterion NAME]... [--cora-data SPEC] [--list]\n";
      return 2;
    }
  }
  if (selected.empty()) selected = kCriteria;

  bool failed = false, skipped = false;
  for (const auto& name : selected) {
    Result r;
    const Stopwatch sw;
    try {
      r = run(name, cora_data);
    } catch (const std::invalid_argument& e) {
      std::cerr << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      r = {Outcome::Fail, std::string("error: ") + e.what()};
    }
    const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Skip ? "SKIP" : "FAIL";
    std::cout << tag << ' ' << name << ": " << r.detail << fmt(" [%.1f s]", sw.seconds()) << std::endl;
    failed |= r.outcome == Outcome::Fail;
    skipped |= r.outcome == Outcome::Skip;
  }
  if (failed) return 1;
  return skipped && selected.size() == 1 ? 77 : 0;
}
