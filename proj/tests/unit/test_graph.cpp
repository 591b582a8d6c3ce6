#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "lte4g/dataset_io.hpp"
#include "lte4g/graph.hpp"
#include "support/oracles.hpp"

using namespace lte4g;
namespace fs = std::filesystem;

namespace {

Graph featureless(std::size_t n, std::vector<Edge> edges) {
  return Graph(n, std::move(edges), SparseMat(n, 1), std::vector<ClassId>(n, 0), 1);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lte4g_graph_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& name, const std::string& body) const { std::ofstream(path / name) << body; }
};

void write_meta(const TempDir& d, std::size_t n, std::size_t f, std::size_t c) {
  d.write("meta.json", "{\"n\":" + std::to_string(n) + ",\"num_features\":" + std::to_string(f) +
                           ",\"num_classes\":" + std::to_string(c) + "}");
}

}  // namespace

TEST(Graph, CanonicalisesEdges) {
  const Graph g = featureless(4, {{1, 0}, {0, 1}, {2, 2}, {3, 1}});
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 1}, {1, 3}}));
  EXPECT_EQ(g.degree(1), 2u);
  EXPECT_EQ(g.degree(2), 0u);
}

TEST(Graph, RejectsInvalidInput) {
  EXPECT_THROW(featureless(2, {{0, 2}}), ValidationError);
  EXPECT_THROW(Graph(2, {}, SparseMat(3, 1), {0, 0}, 1), ValidationError);
  EXPECT_THROW(Graph(2, {}, SparseMat(2, 1), {0, 1}, 1), ValidationError);
  EXPECT_THROW(Graph(2, {}, SparseMat(2, 1), {0}, 1), ValidationError);
}

TEST(NormalizeAdjacency, SingleNode) {
  const auto a = normalize_adjacency(featureless(1, {}));
  EXPECT_EQ(oracle::densify(a.matrix), DenseMat::from_rows({{1.0}}));
}

TEST(NormalizeAdjacency, TwoNodesOneEdge) {
  const auto a = normalize_adjacency(featureless(2, {{0, 1}}));
  EXPECT_EQ(oracle::densify(a.matrix), DenseMat::from_rows({{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(NormalizeAdjacency, IsolatedNodesGiveIdentity) {
  const auto a = normalize_adjacency(featureless(3, {}));
  EXPECT_EQ(oracle::densify(a.matrix), DenseMat::identity(3));
}

TEST(NormalizeAdjacency, MatchesBruteForceDegreeFormula) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 8;
    std::bernoulli_distribution e(0.35);
    DenseMat a(n, n);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (e(rng)) {
          edges.emplace_back(j, i);
          a(i, j) = a(j, i) = 1.0;
        }
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    std::vector<double> dhat(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dhat[i] += a(i, j);
    const DenseMat got = oracle::densify(normalize_adjacency(featureless(n, edges)).matrix);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GT(got(i, i), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double want = a(i, j) != 0.0 ? 1.0 / std::sqrt(dhat[i] * dhat[j]) : 0.0;
        EXPECT_NEAR(got(i, j), want, 1e-15);
        EXPECT_EQ(got(i, j), got(j, i));
      }
    }
  }
}

TEST(Degree, StarCenterAndIsolated) {
  const Graph g = featureless(8, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}});
  EXPECT_EQ(g.degree(0), 6u);
  EXPECT_EQ(g.degree(7), 0u);
  EXPECT_EQ(g.degree(3), 1u);
}

TEST(Degree, HandshakeLemma) {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 20; ++rep) {
    const Graph g = oracle::random_toy_graph(rng, 12, 2, 2, 0.3);
    std::size_t s = 0;
    for (NodeId v = 0; v < g.num_nodes(); ++v) s += g.degree(v);
    EXPECT_EQ(s, 2 * g.num_edges());
  }
}

TEST(Degree, OutOfRangeThrows) {
  const Graph g = featureless(3, {});
  EXPECT_THROW(g.degree(3), ContractError);
  EXPECT_THROW(g.neighbors(5), ContractError);
}

TEST(KnnByFeature, DuplicateRowRanksFirst) {
  std::mt19937_64 rng(33);
  auto x = oracle::random_dense(6, 4, rng);
  for (std::size_t j = 0; j < 4; ++j) x(4, j) = x(1, j);
  const Graph g(6, {}, SparseMat::from_dense(x), std::vector<ClassId>(6, 0), 1);
  EXPECT_EQ(knn_by_feature(g, 1, 3).front(), 4u);
}

TEST(KnnByFeature, OrthogonalOneHotFallsBackToIdOrder) {
  const Graph g(5, {}, SparseMat::from_dense(DenseMat::identity(5)), std::vector<ClassId>(5, 0), 1);
  EXPECT_EQ(knn_by_feature(g, 2, 3), (std::vector<NodeId>{0, 1, 3}));
}

TEST(KnnByFeature, ZeroNormRowsScoreZero) {
  DenseMat x = DenseMat::from_rows({{1, 0}, {0, 0}, {-1, 0}, {1, 1}});
  const Graph g(4, {}, SparseMat::from_dense(x), std::vector<ClassId>(4, 0), 1);
  // similarities from node 0: 1 -> 0, 2 -> -1, 3 -> 0.707
  EXPECT_EQ(knn_by_feature(g, 0, 3), (std::vector<NodeId>{3, 1, 2}));
  EXPECT_EQ(knn_by_feature(g, 1, 2), (std::vector<NodeId>{0, 2}));
}

TEST(KnnByFeature, MatchesExhaustiveCosineRanking) {
  std::mt19937_64 rng(34);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 10;
    const auto x = oracle::random_dense(n, 5, rng);
    const Graph g(n, {}, SparseMat::from_dense(x), std::vector<ClassId>(n, 0), 1);
    for (NodeId v = 0; v < n; ++v) {
      std::vector<std::pair<double, NodeId>> all;
      for (NodeId u = 0; u < n; ++u) {
        if (u == v) continue;
        double dot = 0, a = 0, b = 0;
        for (std::size_t j = 0; j < 5; ++j) {
          dot += x(v, j) * x(u, j);
          a += x(v, j) * x(v, j);
          b += x(u, j) * x(u, j);
        }
        all.push_back({-dot / std::sqrt(a * b), u});
      }
      std::sort(all.begin(), all.end());
      const auto got = knn_by_feature(g, v, 4);
      for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(got[i], all[i].second);
    }
  }
}

TEST(KnnByFeature, RequiresKBelowN) {
  const Graph g = featureless(3, {});
  EXPECT_THROW(knn_by_feature(g, 0, 3), ContractError);
}

TEST(Sbm, CompleteBlocksAreDisjointCliques) {
  const std::size_t sizes[] = {4, 3};
  const Graph g = sbm_generate(1, sizes, 1.0, 0.0, 1.0);
  EXPECT_EQ(g.num_edges(), 6u + 3u);
  for (const auto& [u, v] : g.edges()) EXPECT_EQ(g.label(u), g.label(v));
  EXPECT_EQ(g.degree(0), 3u);
  EXPECT_EQ(g.degree(5), 2u);
}

TEST(Sbm, DeterministicPerSeed) {
  const std::size_t sizes[] = {20, 10};
  EXPECT_EQ(sbm_generate(9, sizes, 0.3, 0.05, 1.0).edges(), sbm_generate(9, sizes, 0.3, 0.05, 1.0).edges());
  EXPECT_NE(sbm_generate(9, sizes, 0.3, 0.05, 1.0).edges(), sbm_generate(10, sizes, 0.3, 0.05, 1.0).edges());
}

TEST(Sbm, EmpiricalWithinClassRate) {
  const std::size_t sizes[] = {50, 5};
  const double p_in = 0.3;
  const Graph g = sbm_generate(3, sizes, p_in, 0.02, 1.0);
  std::size_t within = 0;
  for (const auto& [u, v] : g.edges())
    if (g.label(u) == g.label(v)) ++within;
  const double pairs = 50.0 * 49 / 2 + 5.0 * 4 / 2;
  EXPECT_NEAR(within / pairs, p_in, 0.1);
}

TEST(Sbm, RejectsBadProbabilities) {
  const std::size_t sizes[] = {2};
  EXPECT_THROW(sbm_generate(0, sizes, 1.5, 0.0, 1.0), ContractError);
}

TEST(LoadGraph, EmptyEdgesThreeIsolatedNodes) {
  TempDir d("empty");
  write_meta(d, 3, 2, 2);
  d.write("edges.tsv", "");
  d.write("features.tsv", "0\t1,0\n1\t0,1\n2\t0.5,0.5\n");
  d.write("labels.tsv", "0\t0\n1\t1\n2\t1\n");
  const Graph g = load_dataset_dir(d.path);
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 0u);
  EXPECT_EQ(oracle::densify(normalize_adjacency(g).matrix), DenseMat::identity(3));
}

TEST(LoadGraph, SymmetrisesAndCountsDirectedLines) {
  TempDir d("sym");
  write_meta(d, 3, 2, 1);
  d.write("edges.tsv", "0\t1\n1\t0\n1\t2\n2\t2\n");
  d.write("features.tsv", "0\t0:1\n1\t1:2.5\n2\t\n");
  d.write("labels.tsv", "0\t0\n1\t0\n2\t0\n");
  LoadStats st;
  const Graph g = load_dataset_dir(d.path, &st);
  EXPECT_EQ(st.edge_lines, 4u);
  EXPECT_EQ(st.self_loops, 1u);
  EXPECT_EQ(st.undirected_edges, 2u);
  EXPECT_DOUBLE_EQ(g.features().at(1, 1), 2.5);
  EXPECT_EQ(g.features().row_cols(2).size(), 0u);
}

TEST(LoadGraph, MalformedLineReportsLineNumber) {
  TempDir d("bad");
  write_meta(d, 2, 1, 1);
  d.write("edges.tsv", "0\t1\n1 0\n");
  d.write("features.tsv", "0\t1\n1\t1\n");
  d.write("labels.tsv", "0\t0\n1\t0\n");
  try {
    load_dataset_dir(d.path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  d.write("edges.tsv", "0\tx\n");
  EXPECT_THROW(load_dataset_dir(d.path), ParseError);
  d.write("edges.tsv", "");
  d.write("features.tsv", "0\t1,2\n1\t1\n");
  EXPECT_THROW(load_dataset_dir(d.path), ParseError);
}

TEST(LoadGraph, LabelOutOfRangeIsValidationError) {
  TempDir d("label");
  write_meta(d, 2, 1, 2);
  d.write("edges.tsv", "");
  d.write("features.tsv", "0\t1\n1\t1\n");
  d.write("labels.tsv", "0\t0\n1\t2\n");
  EXPECT_THROW(load_dataset_dir(d.path), ValidationError);
  d.write("labels.tsv", "0\t0\n");
  EXPECT_THROW(load_dataset_dir(d.path), ValidationError);
  d.write("labels.tsv", "0\t0\n5\t1\n");
  EXPECT_THROW(load_dataset_dir(d.path), ValidationError);
}

TEST(LoadGraph, MissingFileIsValidationError) {
  TempDir d("missing");
  write_meta(d, 1, 1, 1);
  EXPECT_THROW(load_dataset_dir(d.path), ValidationError);
}

TEST(SaveGraph, RoundTripIsIdentity) {
  std::mt19937_64 rng(35);
  for (int rep = 0; rep < 5; ++rep) {
    const Graph g = oracle::random_toy_graph(rng, 15, 4, 3, 0.25);
    TempDir d("rt" + std::to_string(rep));
    save_graph(g, d.path);
    const Graph h = load_dataset_dir(d.path);
    EXPECT_EQ(h.edges(), g.edges());
    EXPECT_EQ(h.features(), g.features());
    EXPECT_EQ(h.labels(), g.labels());
    EXPECT_EQ(h.class_count(), g.class_count());
    TempDir e("rt2" + std::to_string(rep));
    save_graph(h, e.path);
    for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv", "meta.json"}) {
      std::ifstream a(d.path / f), b(e.path / f);
      const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
      EXPECT_EQ(sa, sb) << f;
    }
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io_detail::format_double(0.1), "0.1");
  EXPECT_EQ(io_detail::format_double(1.0), "1");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(io_detail::parse_number<double>(io_detail::format_double(v), "", 0, "x"), v);
}
