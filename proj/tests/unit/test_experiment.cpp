#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lte4g/experiment.hpp"

using namespace lte4g;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("lte4g_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path write_sbm(const fs::path& dir, std::uint64_t seed, std::vector<std::size_t> sizes, double shift) {
  save_graph(sbm_generate(seed, sizes, 0.1, 0.005, shift, 16), dir);
  return dir;
}

ExperimentConfig toy_config(const fs::path& data, const fs::path& out) {
  ExperimentConfig c;
  c.dataset = data.string();
  c.out = out.string();
  c.imb_classes = 2;
  c.imb_ratio = 0.25;
  c.val_per_class = 10;
  c.test_per_class = 25;
  c.seeds = {0, 1};
  c.train.hidden = 16;
  c.train.max_epochs = 60;
  c.train.patience = 30;
  return c;
}

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const char* cli = std::getenv("LTE4G_CLI");
  if (!cli) return {};
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

}  // namespace

TEST(Config, RoundTripsEveryField) {
  ExperimentConfig c;
  c.dataset = "data/x";
  c.protocol = ProtocolKind::longtail;
  c.imb_ratio = 0.01;
  c.imb_classes = 3;
  c.per_class_head = 30;
  c.val_per_class = 7;
  c.test_per_class = 9;
  c.lt_max_count = 40;
  c.method = Method::oversample;
  c.seeds = {4, 5};
  c.out = "o";
  TrainConfig& t = c.train;
  t.lr = 0.005;
  t.weight_decay = 0.0;
  t.hidden = 8;
  t.max_epochs = 12;
  t.patience = 3;
  t.student_epochs = 9;
  t.p = 0.4;
  t.degree_threshold = 2;
  t.gamma = 2.0;
  t.alpha_mode = AlphaMode::uniform;
  t.alpha = 0.25;
  t.scheduler = SchedulerKind::cos2E;
  t.kd_temperature = 2.0;
  t.use_kd = false;
  t.finetune_encoder = true;
  t.split_mode = SplitMode::random_both;
  t.expansion.order = ExpansionConfig::parse_order("v->y");
  t.expansion.budget = BudgetRule::max;
  t.expansion.confidence = ConfidenceRule::threshold;
  t.expansion.tau = 0.8;
  t.expansion.k = 3;
  ExperimentConfig back;
  apply_json(back, nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_NE(to_json(ExperimentConfig{}).dump(), to_json(c).dump());
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  ExperimentConfig c;
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"gama": 1})")), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"hidden": "big"})")), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"([1, 2])")), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"candidate_budget": "min"})")), ConfigError);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"method": "smote"})")), ConfigError);
  EXPECT_NO_THROW(apply_json(c, nlohmann::json::parse(R"({"gamma": 2})")));
  EXPECT_EQ(c.train.gamma, 2.0);
}

TEST(Config, DefaultAlphaIsInverseFrequency) {
  EXPECT_EQ(alpha_string(TrainConfig{}), "invfreq");
}

TEST(Config, ParseAlpha) {
  TrainConfig t;
  parse_alpha("uniform:0.5", t);
  EXPECT_EQ(t.alpha_mode, AlphaMode::uniform);
  EXPECT_EQ(t.alpha, 0.5);
  EXPECT_EQ(alpha_string(t), "uniform:0.5");
  parse_alpha("invfreq", t);
  EXPECT_EQ(t.alpha_mode, AlphaMode::invfreq);
  for (const char* bad : {"uniform:", "uniform:-1", "uniform:0", "uniform:1x", "inv", ""})
    EXPECT_THROW(parse_alpha(bad, t), ConfigError) << bad;
}

TEST(Config, ParseConfidenceAndSeeds) {
  ExpansionConfig e;
  parse_confidence("tau:0.9", e);
  EXPECT_EQ(e.confidence, ConfidenceRule::threshold);
  EXPECT_EQ(e.tau, 0.9);
  EXPECT_THROW(parse_confidence("tau:1.5", e), ConfigError);
  EXPECT_THROW(parse_confidence("top", e), ConfigError);
  EXPECT_EQ(parse_seeds("0,1,2"), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(parse_seeds("7"), (std::vector<std::uint64_t>{7}));
  for (const char* bad : {"", "1,,2", "a", "1,-2", "3 "}) EXPECT_THROW(parse_seeds(bad), ConfigError) << bad;
}

TEST(Config, ValidateAndLoad) {
  ScratchDir d("cfg");
  ExperimentConfig c;
  c.imb_ratio = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c.imb_ratio = 0.1;
  c.seeds.clear();
  EXPECT_THROW(validate(c), ConfigError);
  std::ofstream(d.path() / "c.json") << R"({"hidden": 7, "seeds": [3]})";
  const auto loaded = load_config(d.path() / "c.json");
  EXPECT_EQ(loaded.train.hidden, 7u);
  EXPECT_EQ(loaded.seeds, (std::vector<std::uint64_t>{3}));
  std::ofstream(d.path() / "bad.json") << "{";
  EXPECT_THROW(load_config(d.path() / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(d.path() / "missing.json"), ConfigError);
}

TEST(Predictions, TsvRoundTripAndParseErrors) {
  ScratchDir d("tsv");
  PredictionRow a;
  a.node = 3;
  a.route = {Side::tail, 5, false};
  a.predicted = 5;
  a.truth = 4;
  PredictionRow b;
  b.node = 9;
  b.routed = false;
  b.predicted = 1;
  b.truth = 2;
  {
    std::ofstream out(d.path() / "p.tsv");
    const std::vector<PredictionRow> rows{a, b};
    write_predictions_tsv(out, rows);
  }
  const auto back = read_predictions(d.path() / "p.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].route.student, Side::tail);
  EXPECT_EQ(back[0].route.c_star, 5u);
  EXPECT_FALSE(back[1].routed);
  EXPECT_EQ(back[1].truth, 2u);
  std::ofstream(d.path() / "bad.tsv") << "header\n1\tH\t0\t0\t0\n2\tX\t0\t0\t0\n";
  try {
    read_predictions(d.path() / "bad.tsv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(Experiment, OriginOnBalancedToyIsAccurateAndFast) {
  ScratchDir d("origin");
  const auto data = write_sbm(d.path() / "data", 1, {100, 100, 100, 100}, 1.5);
  ExperimentConfig c;
  c.dataset = data.string();
  c.out = (d.path() / "out").string();
  c.method = Method::origin;
  c.imb_classes = 0;
  c.imb_ratio = 1.0;
  c.val_per_class = 10;
  c.test_per_class = 30;
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = run_experiment(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GT(s["metrics"]["acc"]["mean"].get<double>(), 0.9);
  EXPECT_LT(secs, 60.0);
  EXPECT_EQ(s["metrics"]["acc"]["values"].size(), 3u);
}

TEST(Experiment, DeterministicMetricsAndReproducibleOutputs) {
  ScratchDir d("det");
  const auto data = write_sbm(d.path() / "data", 2, {90, 80, 70, 50, 50}, 1.2);
  const auto a = toy_config(data, d.path() / "a");
  const auto b = toy_config(data, d.path() / "b");
  run_experiment(a);
  run_experiment(b);
  for (auto seed : a.seeds) {
    const fs::path da = seed_dir(a, seed), db = seed_dir(b, seed);
    for (const char* f : {"manifest.json", "partition.json", "checkpoint.json", "predictions.tsv",
                          "metrics.json", "metrics.csv", "events.jsonl"}) {
      ASSERT_TRUE(fs::exists(da / f)) << f;
      EXPECT_EQ(slurp(da / f), slurp(db / f)) << f;
    }
    const auto m = read_json(da / "metrics.json");
    EXPECT_TRUE(m["test"]["accuracy_le_routing"].get<bool>());
    EXPECT_LE(m["test"]["acc"].get<double>(), m["test"]["routing_side_accuracy"].get<double>());
    EXPECT_EQ(m["test"]["count"], 125u);
  }
  EXPECT_TRUE(fs::exists(fs::path(a.out) / "config.json"));
  EXPECT_EQ(slurp(fs::path(a.out) / "summary.json"), slurp(fs::path(b.out) / "summary.json"));
}

TEST(Experiment, OutputDirectoryAloneSufficesToReevaluate) {
  ScratchDir d("reeval");
  const auto data = write_sbm(d.path() / "data", 3, {90, 80, 70, 50, 50}, 1.2);
  auto c = toy_config(data, d.path() / "out");
  c.seeds = {0};
  run_experiment(c);
  const fs::path sd = seed_dir(c, 0);
  const std::string metrics = slurp(sd / "metrics.json");
  const std::string preds = slurp(sd / "predictions.tsv");
  fs::remove(sd / "metrics.json");
  fs::remove(sd / "predictions.tsv");
  const ExperimentConfig snap = load_config(fs::path(c.out) / "config.json");
  const Graph g = load_experiment_graph(snap);
  stage_infer(snap, g, 0);
  stage_eval(snap, g, 0);
  EXPECT_EQ(slurp(sd / "predictions.tsv"), preds);
  EXPECT_EQ(slurp(sd / "metrics.json"), metrics);
}

TEST(Experiment, SampleStdAcrossSeeds) {
  ScratchDir d("std");
  ExperimentConfig c;
  c.out = d.path().string();
  c.seeds = {0, 1, 2};
  const double acc[] = {0.5, 0.7, 0.9};
  for (std::size_t i = 0; i < 3; ++i) {
    fs::create_directories(seed_dir(c, i));
    nlohmann::ordered_json j;
    j["test"] = {{"acc", acc[i]}, {"bacc", 0.5}, {"macro_f1", 0.5}, {"gmeans", 0.5}};
    write_json(seed_dir(c, i) / "metrics.json", j);
  }
  const auto s = summarize(c);
  EXPECT_NEAR(s["metrics"]["acc"]["mean"].get<double>(), 0.7, 1e-15);
  EXPECT_NEAR(s["metrics"]["acc"]["std"].get<double>(), 0.2, 1e-15);
  EXPECT_EQ(s["metrics"]["bacc"]["std"].get<double>(), 0.0);
}

TEST(Experiment, FailuresAreStageTaggedAndKeepPartialOutputs) {
  ScratchDir d("fail");
  auto c = toy_config(d.path() / "nowhere", d.path() / "out");
  try {
    run_experiment(c);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "load");
  }
  const auto data = write_sbm(d.path() / "data", 4, {90, 80, 70, 50, 50}, 1.2);
  c.dataset = data.string();
  const Graph g = load_experiment_graph(c);
  stage_prepare(c, g, 0);
  try {
    tagged("infer seed 0", [&] { stage_infer(c, g, 0); });
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "infer seed 0");
    EXPECT_NE(std::string(e.what()).find("[infer seed 0]"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(seed_dir(c, 0) / "manifest.json"));
  c.imb_classes = 5;  // every class a minority class
  try {
    run_experiment(c);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "prepare seed 0");
  }
}

TEST(Cli, ExitCodesAndDiagnostics) {
  if (!std::getenv("LTE4G_CLI")) GTEST_SKIP() << "LTE4G_CLI not set";
  ScratchDir d("cli");
  const auto data = write_sbm(d.path() / "data", 5, {90, 80, 70, 50, 50}, 1.2);
  std::ofstream(d.path() / "c.json") << R"({"val_per_class": 10, "test_per_class": 25})";
  const std::string base = "--config " + (d.path() / "c.json").string() + " --dataset " + data.string() +
                           " --imb-classes 2 --imb-ratio 0.25 --max-epochs 20 --patience 10 --hidden 8 --seeds 0";
  const fs::path out = d.path() / "out";
  auto ok = run_cli("run " + base + " --out " + out.string(), d.path());
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "seed_0" / "metrics.json"));
  EXPECT_EQ(read_json(out / "config.json")["hidden"], 8);

  auto rep = run_cli("report --out " + out.string() + " --seeds 0", d.path());
  EXPECT_EQ(rep.code, 0) << rep.err;

  auto missing = run_cli("run --dataset " + (d.path() / "none").string() + " --out " + out.string(), d.path());
  EXPECT_NE(missing.code, 0);
  EXPECT_NE(missing.err.find("[load]"), std::string::npos) << missing.err;

  auto alpha = run_cli("run " + base + " --alpha uniform:-2 --out " + out.string(), d.path());
  EXPECT_NE(alpha.code, 0);
  EXPECT_NE(alpha.err.find("[config]"), std::string::npos) << alpha.err;

  auto stage = run_cli("eval " + base + " --out " + (d.path() / "empty").string(), d.path());
  EXPECT_NE(stage.code, 0);
  EXPECT_NE(stage.err.find("[eval seed 0]"), std::string::npos) << stage.err;

  EXPECT_NE(run_cli("", d.path()).code, 0);
  EXPECT_NE(run_cli("frobnicate", d.path()).code, 0);
}

TEST(Cli, FlagsOverrideConfigFile) {
  if (!std::getenv("LTE4G_CLI")) GTEST_SKIP() << "LTE4G_CLI not set";
  ScratchDir d("override");
  const auto data = write_sbm(d.path() / "data", 6, {90, 80, 70, 50, 50}, 1.2);
  const fs::path out = d.path() / "out";
  std::ofstream(d.path() / "c.json") << R"({"gamma": 2, "hidden": 8, "seeds": [0], "method": "origin",
                                        "val_per_class": 10, "test_per_class": 25})";
  auto r = run_cli("prepare --config " + (d.path() / "c.json").string() + " --gamma 0 --dataset " +
                       data.string() + " --imb-classes 2 --imb-ratio 0.25 --out " + out.string(),
                   d.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto snap = read_json(out / "config.json");
  EXPECT_EQ(snap["gamma"], 0.0);
  EXPECT_EQ(snap["hidden"], 8);
  EXPECT_EQ(snap["method"], "origin");
  EXPECT_TRUE(fs::exists(out / "seed_0" / "manifest.json"));
}
