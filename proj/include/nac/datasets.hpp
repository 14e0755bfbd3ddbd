#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nac/graph.hpp"
#include "nac/hash.hpp"

namespace nac {

inline constexpr const char* kDatasetFiles[] = {"graph.json", "edges.csv", "features.csv", "labels.csv",
                                                "splits.json"};

// Content hash over structure, features, labels and split.
inline std::string dataset_fingerprint(const Dataset& ds) {
  Fnv1a h;
  h.update(ds.graph.name);
  for (const auto& [s, d] : ds.graph.edges) {
    const Index pair[2] = {s, d};
    h.update(std::as_bytes(std::span<const Index>(pair)));
  }
  h.update(ds.graph.features);
  h.update(std::as_bytes(std::span<const Index>(ds.graph.labels)));
  for (const auto* part : {&ds.split.train(), &ds.split.val()}) h.update(std::as_bytes(std::span<const Index>(*part)));
  h.update(static_cast<double>(ds.split.test_size()));
  return h.hex();
}

inline bool is_citation_name(std::string_view name) {
  for (std::string_view key : {"cora", "citeseer", "pubmed", "citation"}) {
    if (name.find(key) != std::string_view::npos) return true;
  }
  return false;
}

struct ResolvedDataset {
  Dataset data;
  std::string source;  // directory path or synthetic spec
  bool synthetic = false;
  bool row_normalized = false;
  nlohmann::json checksums = nlohmann::json::object();
};

// Synthetic specs: synth:NAME[:SEED] with NAME one of cora-like,
// pubmed-like, sbm, grid, star, citation. Anything else is a dataset directory.
// Features are row-normalized when `row_normalize` says so, or by default for
// citation datasets.
inline ResolvedDataset resolve_dataset(const std::string& spec, std::optional<bool> row_normalize = std::nullopt) {
  ResolvedDataset r;
  r.source = spec;
  if (spec.rfind("synth:", 0) == 0) {
    r.synthetic = true;
    std::string rest = spec.substr(6);
    std::uint64_t seed = 0;
    if (const auto colon = rest.find(':'); colon != std::string::npos) {
      const std::string s = rest.substr(colon + 1);
      std::size_t used = 0;
      try {
        seed = std::stoull(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) throw std::invalid_argument("synthetic dataset seed '" + s + "' is not an integer");
      rest = rest.substr(0, colon);
    }
    if (rest == "cora-like") {
      r.data = citation_graph(cora_like_params(), seed);
      r.data.graph.name = "cora-like";
    } else if (rest == "pubmed-like") {
      r.data = citation_graph(pubmed_like_params(), seed);
      r.data.graph.name = "pubmed-like";
    } else {
      SynthParams p;
      const SynthKind kind = parse_synth_kind(rest);
      if (kind == SynthKind::Citation) {
        p.nodes = 300;
        p.blocks = 3;
        p.feature_dim = 60;
      }
      r.data = synth_graph(kind, p, seed);
    }
  } else {
    const std::filesystem::path dir(spec);
    if (!std::filesystem::is_directory(dir)) throw DatasetError("dataset directory '" + spec + "' does not exist");
    r.data = load_graph(dir);
    for (const char* f : kDatasetFiles) r.checksums[f] = file_checksum((dir / f).string());
  }
  r.row_normalized = row_normalize.value_or(is_citation_name(r.data.graph.name));
  if (r.row_normalized) row_normalize_features(r.data.graph);
  r.checksums["content"] = dataset_fingerprint(r.data);
  return r;
}

}  // namespace nac
