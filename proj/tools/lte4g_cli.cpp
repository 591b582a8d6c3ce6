// lte4g: prepare splits, train, infer, evaluate and aggregate experiments.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lte4g/experiment.hpp"

namespace {

struct Overrides {
  std::optional<std::string> config, dataset, protocol, method, alpha, scheduler, seeds, out, split_mode,
      candidate_order;
  std::optional<double> imb_ratio, p, gamma, lr;
  std::optional<std::size_t> imb_classes, degree_threshold, max_epochs, patience, student_epochs, hidden;
  bool no_kd = false;
};

void add_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--dataset", o.dataset, "dataset directory (edges.tsv, features.tsv, labels.tsv, meta.json)");
  app.add_option("--protocol", o.protocol, "manual|lt|natural");
  app.add_option("--imb-ratio", o.imb_ratio, "imbalance ratio");
  app.add_option("--imb-classes", o.imb_classes, "number of minority classes (manual)");
  app.add_option("--method", o.method, "lte4g|origin|reweight|oversample");
  app.add_option("--p", o.p, "head-class fraction");
  app.add_option("--degree-threshold", o.degree_threshold, "tail-degree threshold (degree <= N)");
  app.add_option("--gamma", o.gamma, "focal gamma");
  app.add_option("--alpha", o.alpha, "uniform:F|invfreq");
  app.add_option("--scheduler", o.scheduler, "paper|linear|cos2E");
  app.add_option("--seeds", o.seeds, "comma-separated seeds");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--lr", o.lr, "learning rate");
  app.add_option("--hidden", o.hidden, "hidden dimension");
  app.add_option("--max-epochs", o.max_epochs, "epoch cap per stage");
  app.add_option("--patience", o.patience, "early-stopping patience");
  app.add_option("--student-epochs", o.student_epochs, "scheduler horizon E (0: max epochs)");
  app.add_option("--split-mode", o.split_mode, "balanced|random_class|random_degree|random_both");
  app.add_option("--candidate-order", o.candidate_order, "prototype candidate order, e.g. v->n->s");
  app.add_flag("--no-kd", o.no_kd, "skip distillation; predict with the routed expert");
}

lte4g::ExperimentConfig effective_config(const Overrides& o) {
  using namespace lte4g;
  ExperimentConfig c = o.config ? load_config(*o.config) : ExperimentConfig{};
  TrainConfig& t = c.train;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.protocol) c.protocol = protocol_from_string(*o.protocol);
  if (o.imb_ratio) c.imb_ratio = *o.imb_ratio;
  if (o.imb_classes) c.imb_classes = *o.imb_classes;
  if (o.method) c.method = method_from_string(*o.method);
  if (o.seeds) c.seeds = parse_seeds(*o.seeds);
  if (o.out) c.out = *o.out;
  if (o.p) t.p = *o.p;
  if (o.degree_threshold) t.degree_threshold = *o.degree_threshold;
  if (o.gamma) t.gamma = *o.gamma;
  if (o.alpha) parse_alpha(*o.alpha, t);
  if (o.scheduler) t.scheduler = scheduler_from_string(*o.scheduler);
  if (o.lr) t.lr = *o.lr;
  if (o.hidden) t.hidden = *o.hidden;
  if (o.max_epochs) t.max_epochs = *o.max_epochs;
  if (o.patience) t.patience = *o.patience;
  if (o.student_epochs) t.student_epochs = *o.student_epochs;
  if (o.split_mode) t.split_mode = split_mode_from_string(*o.split_mode);
  if (o.candidate_order) t.expansion.order = ExpansionConfig::parse_order(*o.candidate_order);
  if (o.no_kd) t.use_kd = false;
  validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LTE4G long-tail node classification"};
  app.require_subcommand(1);
  Overrides o;
  add_flags(app, o);
  app.fallthrough();

  auto* prepare = app.add_subcommand("prepare", "build the split manifest for each seed");
  auto* train = app.add_subcommand("train", "train from the manifests");
  auto* infer = app.add_subcommand("infer", "predict the test nodes from the checkpoints");
  auto* eval = app.add_subcommand("eval", "score the predictions");
  auto* run = app.add_subcommand("run", "prepare, train, infer and eval every seed, then report");
  auto* report = app.add_subcommand("report", "aggregate per-seed metrics into summary.json");

  CLI11_PARSE(app, argc, argv);

  using namespace lte4g;
  try {
    ExperimentConfig cfg;
    tagged("config", [&] { cfg = effective_config(o); });
    if (run->parsed()) {
      const auto summary = run_experiment(cfg);
      std::cout << summary.dump(2) << '\n';
      return EXIT_SUCCESS;
    }
    if (report->parsed()) {
      tagged("report", [&] { stage_report(cfg); });
      std::cout << summarize(cfg).dump(2) << '\n';
      return EXIT_SUCCESS;
    }
    Graph g;
    tagged("load", [&] { g = load_experiment_graph(cfg); });
    tagged("config", [&] { snapshot_config(cfg); });
    for (auto seed : cfg.seeds) {
      const std::string tag = " seed " + std::to_string(seed);
      if (prepare->parsed()) tagged("prepare" + tag, [&] { stage_prepare(cfg, g, seed); });
      if (train->parsed()) tagged("train" + tag, [&] { stage_train(cfg, g, seed); });
      if (infer->parsed()) tagged("infer" + tag, [&] { stage_infer(cfg, g, seed); });
      if (eval->parsed()) tagged("eval" + tag, [&] { stage_eval(cfg, g, seed); });
    }
  } catch (const StageError& e) {
    std::cerr << "lte4g: error " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
