#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lte4g/error.hpp"
#include "lte4g/graph.hpp"

namespace lte4g {

/// Bookkeeping from a load, kept because raw citation edge lists are directed and files
/// may carry duplicates or self-loops.
struct LoadStats {
  std::size_t edge_lines = 0;       // non-empty lines in edges.tsv
  std::size_t self_loops = 0;       // dropped
  std::size_t undirected_edges = 0; // after symmetrisation and dedup
};

struct DatasetMeta {
  std::size_t n = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
};

namespace io_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s, const std::string& file, std::size_t line, const char* what) {
  T v{};
  s = trim(s);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
    throw ParseError(file, line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

inline std::pair<std::string_view, std::string_view> split_tab(std::string_view line,
                                                               const std::string& file,
                                                               std::size_t lineno) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ParseError(file, lineno, "expected a TAB separator");
  return {line.substr(0, tab), line.substr(tab + 1)};
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  return in;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace io_detail

inline DatasetMeta load_meta(const std::filesystem::path& meta_path) {
  auto in = io_detail::open_in(meta_path);
  nlohmann::json j;
  try {
    in >> j;
    return {j.at("n").get<std::size_t>(), j.at("num_features").get<std::size_t>(),
            j.at("num_classes").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string(), 1, e.what());
  }
}

/// Reads the canonical TSV dataset format. Directed edges are symmetrised.
inline Graph load_graph(const std::filesystem::path& edge_path,
                        const std::filesystem::path& feature_path,
                        const std::filesystem::path& label_path, const DatasetMeta& meta,
                        LoadStats* stats = nullptr) {
  using namespace io_detail;
  LoadStats st;
  std::vector<Edge> edges;
  {
    auto in = open_in(edge_path);
    const std::string f = edge_path.string();
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      std::string_view s = trim(line);
      if (s.empty()) continue;
      auto [a, b] = split_tab(s, f, ln);
      const auto u = parse_number<std::size_t>(a, f, ln, "source id");
      const auto v = parse_number<std::size_t>(b, f, ln, "target id");
      if (u >= meta.n || v >= meta.n)
        throw ValidationError(f + ":" + std::to_string(ln) + ": node id out of range");
      ++st.edge_lines;
      if (u == v) {
        ++st.self_loops;
        continue;
      }
      edges.emplace_back(u, v);
    }
  }
  std::vector<Triplet> feats;
  {
    auto in = open_in(feature_path);
    const std::string f = feature_path.string();
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      std::string_view s = trim(line);
      if (s.empty()) continue;
      auto [id, rest] = split_tab(line, f, ln);
      const auto v = parse_number<std::size_t>(id, f, ln, "node id");
      if (v >= meta.n) throw ValidationError(f + ":" + std::to_string(ln) + ": node id out of range");
      rest = trim(rest);
      if (rest.empty()) continue;
      if (rest.find(':') != std::string_view::npos) {
        std::size_t pos = 0;
        while (pos < rest.size()) {
          auto end = rest.find(' ', pos);
          if (end == std::string_view::npos) end = rest.size();
          auto tok = rest.substr(pos, end - pos);
          pos = end + 1;
          if (tok.empty()) continue;
          const auto colon = tok.find(':');
          if (colon == std::string_view::npos) throw ParseError(f, ln, "expected idx:val");
          const auto idx = parse_number<std::size_t>(tok.substr(0, colon), f, ln, "feature index");
          const auto val = parse_number<double>(tok.substr(colon + 1), f, ln, "feature value");
          if (idx >= meta.num_features) throw ParseError(f, ln, "feature index out of range");
          feats.push_back({v, idx, val});
        }
      } else {
        std::size_t pos = 0, idx = 0;
        while (pos <= rest.size()) {
          auto end = rest.find(',', pos);
          if (end == std::string_view::npos) end = rest.size();
          const auto val = parse_number<double>(rest.substr(pos, end - pos), f, ln, "feature value");
          if (idx >= meta.num_features) throw ParseError(f, ln, "too many dense feature values");
          if (val != 0.0) feats.push_back({v, idx, val});
          ++idx;
          pos = end + 1;
        }
        if (idx != meta.num_features) throw ParseError(f, ln, "dense row has wrong length");
      }
    }
  }
  std::vector<ClassId> labels(meta.n, 0);
  {
    auto in = open_in(label_path);
    const std::string f = label_path.string();
    std::vector<bool> seen(meta.n, false);
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
      std::string_view s = trim(line);
      if (s.empty()) continue;
      auto [a, b] = split_tab(s, f, ln);
      const auto v = parse_number<std::size_t>(a, f, ln, "node id");
      const auto y = parse_number<std::size_t>(b, f, ln, "class id");
      if (v >= meta.n) throw ValidationError(f + ":" + std::to_string(ln) + ": node id out of range");
      if (y >= meta.num_classes)
        throw ValidationError(f + ":" + std::to_string(ln) + ": label " + std::to_string(y) +
                              " outside declared range [0," + std::to_string(meta.num_classes) + ")");
      labels[v] = y;
      seen[v] = true;
    }
    for (std::size_t v = 0; v < meta.n; ++v)
      if (!seen[v]) throw ValidationError(f + ": node " + std::to_string(v) + " has no label");
  }
  Graph g(meta.n, std::move(edges),
          SparseMat::from_triplets(meta.n, meta.num_features, std::move(feats)), std::move(labels),
          meta.num_classes);
  st.undirected_edges = g.num_edges();
  if (stats) *stats = st;
  return g;
}

/// Loads `edges.tsv`, `features.tsv`, `labels.tsv` and `meta.json` from a directory.
inline Graph load_dataset_dir(const std::filesystem::path& dir, LoadStats* stats = nullptr) {
  const DatasetMeta meta = load_meta(dir / "meta.json");
  return load_graph(dir / "edges.tsv", dir / "features.tsv", dir / "labels.tsv", meta, stats);
}

/// Writes the canonical format: undirected edges once as `u<TAB>v` with u < v, sparse
/// feature rows `id<TAB>idx:val ...`, and shortest round-trip decimal values.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  using io_detail::format_double;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [u, v] : g.edges()) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    const SparseMat& x = g.features();
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      out << v << '\t';
      auto c = x.row_cols(v);
      auto val = x.row_values(v);
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (k) out << ' ';
        out << c[k] << ':' << format_double(val[k]);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (NodeId v = 0; v < g.num_nodes(); ++v) out << v << '\t' << g.label(v) << '\n';
  }
  {
    std::ofstream out(dir / "meta.json");
    nlohmann::ordered_json j;
    j["n"] = g.num_nodes();
    j["num_features"] = g.num_features();
    j["num_classes"] = g.class_count();
    out << j.dump() << '\n';
  }
}

}  // namespace lte4g
