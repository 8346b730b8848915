// notmad command-line front end: generate / train / predict / evaluate /
// baselines / check. Every subcommand except `check` writes manifest.json
// into its output directory.

#include "notmad/baselines.hpp"
#include "notmad/eval.hpp"
#include "notmad/io.hpp"
#include "notmad/parallel.hpp"
#include "notmad/selfcheck.hpp"
#include "notmad/synth.hpp"
#include "notmad/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace notmad;

namespace {

struct GenerateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct PredictArgs {
  std::string model;
  std::string contexts;
  std::string out;
  bool project = false;
  double threshold = 0.0;
};

struct EvaluateArgs {
  std::vector<std::string> models;
  std::string test;
  std::string train;
  std::string truth;
  std::string out;
  int resamples = 1;
  bool ablation = false;
  std::uint64_t seed = 0;
};

struct BaselineArgs {
  std::string train;
  std::string test;
  std::string truth;
  std::string out;
  int resamples = 10;
  int clusters = 3;
  double ridge_lambda = 1e-2;
  bool project_lioness = true;
  std::uint64_t seed = 0;
};

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

fs::path join(const std::string& dir, const std::string& name) { return fs::path(dir) / name; }

void write_manifest(RunManifest& manifest, const std::string& out_dir) {
  save_json(join(out_dir, "manifest.json"), manifest.to_json());
}

// Contexts come either from a dataset file or from a c_0..c_{m-1} file.
Matrix load_contexts(const std::string& path) {
  const std::string text = read_text(path);
  if (text.rfind("c_0", 0) != 0) return dataset_from_csv(text, path).C;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> header = split_csv_line(line);
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] != "c_" + std::to_string(j))
      throw ParseError(path + ": malformed header at column " + std::to_string(j + 1) + " ('" + header[j] + "')");
  std::vector<std::vector<double>> rows;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(header.size()));
    std::vector<double> r;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::optional<double> v = parse_double(cells[j]);
      if (!v || !std::isfinite(*v))
        throw ParseError(path + ": row " + std::to_string(row) + ", column " + header[j] + ": invalid value ('" +
                         cells[j] + "')");
      r.push_back(*v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  Matrix c(static_cast<Index>(rows.size()), static_cast<Index>(header.size()));
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = 0; j < c.cols(); ++j) c(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return c;
}

int run_generate(const GenerateArgs& a) {
  SynthSpec spec;
  RunManifest manifest;
  manifest.command = "generate";
  if (!a.spec.empty()) {
    spec = synth_spec_from_json(load_json(a.spec));
    manifest.add_input(a.spec);
  }
  if (a.seed) spec.seed = *a.seed;
  const SynthTruth truth = generate(spec);
  const fs::path train = join(a.out, "train.csv");
  const fs::path test = join(a.out, "test.csv");
  const fs::path truth_path = join(a.out, "truth.json");
  save_dataset(train, truth.train);
  save_dataset(test, truth.test);
  save_json(truth_path, truth_to_json(spec, truth));
  manifest.config = to_json(spec);
  manifest.seed = spec.seed;
  for (const auto& p : {train, test, truth_path}) manifest.add_output(p);
  write_manifest(manifest, a.out);
  std::cout << "wrote " << train.generic_string() << ", " << test.generic_string() << ", "
            << truth_path.generic_string() << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  RunManifest manifest;
  manifest.command = "train";
  TrainConfig config;
  if (!a.config.empty()) {
    config = train_config_from_json(load_json(a.config));
    manifest.add_input(a.config);
  }
  if (a.seed) config.seed = *a.seed;
  const Dataset data = load_dataset(a.data);
  manifest.add_input(a.data);
  const TrainedModel trained = train(data, config);
  const fs::path model = join(a.out, "model.json");
  const fs::path log = join(a.out, "training_log.csv");
  save_model(model, trained.model, config);
  write_atomic(log, training_log_csv(trained.log));
  manifest.config = to_json(config);
  manifest.seed = config.seed;
  manifest.add_output(model);
  manifest.add_output(log);
  write_manifest(manifest, a.out);
  std::cout << "objective " << format_double(trained.initial_objective) << " -> "
            << format_double(trained.final_objective) << "\n";
  return 0;
}

int run_predict(const PredictArgs& a) {
  RunManifest manifest;
  manifest.command = "predict";
  const LoadedModel loaded = load_model(a.model);
  manifest.add_input(a.model);
  const Matrix contexts = load_contexts(a.contexts);
  manifest.add_input(a.contexts);
  require(contexts.cols() == loaded.model.context_dim(),
          "predict: contexts have " + std::to_string(contexts.cols()) + " columns, model expects " +
              std::to_string(loaded.model.context_dim()));
  for (Index i = 0; i < contexts.rows(); ++i) {
    const WeightedGraph w = predict_network(loaded.model, contexts.row(i).transpose(), a.project, a.threshold);
    char name[32];
    std::snprintf(name, sizeof name, "network_%06ld.csv", static_cast<long>(i));
    const fs::path path = join(a.out, name);
    save_network(path, w.weights());
    manifest.add_output(path);
  }
  manifest.config = Json{{"project", a.project}, {"threshold", a.threshold}};
  manifest.seed = loaded.config.seed;
  write_manifest(manifest, a.out);
  std::cout << "wrote " << contexts.rows() << " networks\n";
  return 0;
}

void write_report(const EvalReport& report, const std::string& out, RunManifest& manifest) {
  const fs::path json = join(out, "report.json");
  const fs::path csv = join(out, "report.csv");
  save_json(json, report_to_json(report));
  write_atomic(csv, report_to_csv(report));
  manifest.add_output(json);
  manifest.add_output(csv);
  write_manifest(manifest, out);
  for (const auto& m : report.methods)
    std::cout << m.method << " mse " << format_double(m.mse.mean) << " var " << format_double(m.mse.variance) << "\n";
  for (const auto& r : report.ablation) std::cout << r.variant << " mse " << format_double(r.mse) << "\n";
}

MethodReport score(const std::string& name, const std::vector<Matrix>& nets, const Dataset& test,
                   std::optional<MseSummary> bootstrap, const std::optional<std::vector<Matrix>>& truth_nets) {
  MethodReport m;
  m.method = name;
  const Vector errors = row_errors(nets, test.X);
  m.mse = bootstrap ? *bootstrap : summarize({errors.mean()});
  if (test.groups) m.per_group = per_group_mse(errors, *test.groups);
  if (truth_nets) m.structure = structure_sweep(nets, *truth_nets);
  return m;
}

int run_evaluate(const EvaluateArgs& a) {
  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.seed = a.seed;
  const Dataset test = load_dataset(a.test);
  manifest.add_input(a.test);
  std::optional<Dataset> train_data;
  if (!a.train.empty()) {
    train_data = load_dataset(a.train);
    manifest.add_input(a.train);
  }
  require(a.resamples == 1 || train_data, "evaluate: --resamples > 1 needs --train");
  require(!a.ablation || train_data, "evaluate: --ablation needs --train");
  std::optional<LoadedTruth> truth;
  std::optional<std::vector<Matrix>> truth_nets;
  if (!a.truth.empty()) {
    truth = truth_from_json(load_json(a.truth));
    manifest.add_input(a.truth);
    truth_nets = truth_networks(*truth, test.C);
  }

  EvalReport report;
  if (truth_nets) report.methods.push_back(score("ground_truth", *truth_nets, test, std::nullopt, std::nullopt));
  Json model_configs = Json::array();
  std::optional<TrainConfig> first_config;
  for (const auto& path : a.models) {
    const LoadedModel loaded = load_model(path);
    manifest.add_input(path);
    model_configs.push_back(to_json(loaded.config));
    if (!first_config) first_config = loaded.config;
    const TrainConfig& cfg = loaded.config;
    const std::vector<Matrix> nets = notmad_networks(loaded.model, test.C, cfg.project_predictions, cfg.eval_threshold);
    std::optional<MseSummary> boot;
    if (a.resamples > 1) boot = bootstrap_mse(notmad_method(cfg), *train_data, test, a.resamples, a.seed);
    const std::string name = a.models.size() == 1 ? "notmad" : "notmad:" + fs::path(path).stem().string();
    MethodReport m = score(name, nets, test, boot, std::nullopt);
    if (truth_nets) {
      m.structure = structure_sweep(notmad_networks(loaded.model, test.C, cfg.project_predictions, 0.0), *truth_nets);
      if (loaded.model.archetype_count() >= truth->archetypes.count())
        m.archetype_recovery = archetype_recovery(loaded.model.dict, truth->archetypes, m.structure->best.threshold);
    }
    report.methods.push_back(std::move(m));
  }
  if (a.ablation) {
    require(first_config.has_value(), "evaluate: --ablation needs a model for its configuration");
    report.ablation = run_ablation(*train_data, test, *first_config);
  }
  manifest.config = Json{{"resamples", a.resamples}, {"ablation", a.ablation}, {"models", model_configs}};
  write_report(report, a.out, manifest);
  return 0;
}

int run_baselines(const BaselineArgs& a) {
  RunManifest manifest;
  manifest.command = "baselines";
  manifest.seed = a.seed;
  const Dataset train_data = load_dataset(a.train);
  manifest.add_input(a.train);
  const Dataset test = load_dataset(a.test);
  manifest.add_input(a.test);
  std::optional<std::vector<Matrix>> truth_nets;
  if (!a.truth.empty()) {
    const LoadedTruth truth = truth_from_json(load_json(a.truth));
    manifest.add_input(a.truth);
    truth_nets = truth_networks(truth, test.C);
  }

  NotearsOptions notears;
  notears.seed = a.seed;
  ClusteredOptions clustered;
  clustered.n_clusters = a.clusters;
  clustered.seed = a.seed;
  clustered.notears = notears;
  ClusteredOptions oracle = clustered;
  oracle.use_oracle_labels = true;
  RidgeNetworkFit ridge;
  ridge.lambda = a.ridge_lambda;

  std::vector<std::pair<std::string, NetworkMethod>> methods{{"population", population_method(notears)},
                                                             {"clustered", clustered_method(clustered)}};
  if (train_data.groups && test.groups) methods.emplace_back("oracle_clustered", clustered_method(oracle));
  methods.emplace_back("lioness", lioness_method(ridge, a.project_lioness));

  EvalReport report;
  for (const auto& [name, method] : methods) {
    const std::vector<Matrix> nets = method(train_data, test);
    std::optional<MseSummary> boot;
    if (a.resamples > 1) boot = bootstrap_mse(method, train_data, test, a.resamples, a.seed);
    report.methods.push_back(score(name, nets, test, boot, truth_nets));
  }
  manifest.config = Json{{"resamples", a.resamples},
                         {"clusters", a.clusters},
                         {"ridge_lambda", a.ridge_lambda},
                         {"project_lioness", a.project_lioness},
                         {"oracle", train_data.groups && test.groups}};
  write_report(report, a.out, manifest);
  return 0;
}

int run_check() {
  bool ok = true;
  for (const CheckResult& r : run_self_checks()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  if (!ok) print_error("check_failed", "one or more self-checks failed");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-specific Bayesian networks as mixtures of archetype DAGs"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: NOTMAD_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Draw a synthetic dataset and its ground truth");
  generate_cmd->add_option("--spec", gen.spec, "SynthSpec JSON (defaults used when omitted)")->check(CLI::ExistingFile);
  generate_cmd->add_option("--out", gen.out, "Output directory")->required();
  generate_cmd->add_option("--seed", gen.seed, "Override the spec's seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a mixture model");
  train_cmd->add_option("--data", tr.data, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "TrainConfig JSON (defaults used when omitted)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Override the config's seed");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Write one network file per context row");
  predict_cmd->add_option("--model", pr.model, "Model JSON")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--contexts", pr.contexts, "Dataset or context CSV")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pr.out, "Output directory")->required();
  predict_cmd->add_flag("--project", pr.project, "Project each network onto a DAG");
  predict_cmd->add_option("--threshold", pr.threshold, "Zero edges with |w| <= threshold")
      ->check(CLI::NonNegativeNumber);

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score models on a test set");
  evaluate_cmd->add_option("--model", ev.models, "Model JSON (repeatable)")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--test", ev.test, "Test dataset CSV")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--train", ev.train, "Training dataset CSV, for refits")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--truth", ev.truth, "Ground truth JSON")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--resamples", ev.resamples, "Bootstrap refits (1 = score the given model only)")
      ->check(CLI::PositiveNumber);
  evaluate_cmd->add_flag("--ablation", ev.ablation, "Also run the four-variant ablation");
  evaluate_cmd->add_option("--seed", ev.seed, "Bootstrap seed");
  evaluate_cmd->add_option("--out", ev.out, "Output directory")->required();

  BaselineArgs bl;
  auto* baselines_cmd = app.add_subcommand("baselines", "Population, clustered, oracle and LIONESS baselines");
  baselines_cmd->add_option("--train", bl.train, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  baselines_cmd->add_option("--test", bl.test, "Test dataset CSV")->required()->check(CLI::ExistingFile);
  baselines_cmd->add_option("--truth", bl.truth, "Ground truth JSON")->check(CLI::ExistingFile);
  baselines_cmd->add_option("--resamples", bl.resamples, "Bootstrap refits (1 = single fit)")
      ->check(CLI::PositiveNumber);
  baselines_cmd->add_option("--clusters", bl.clusters, "k-means clusters")->check(CLI::PositiveNumber);
  baselines_cmd->add_option("--ridge-lambda", bl.ridge_lambda, "LIONESS ridge penalty")->check(CLI::PositiveNumber);
  baselines_cmd->add_flag("!--no-project-lioness", bl.project_lioness, "Keep LIONESS networks dense");
  baselines_cmd->add_option("--seed", bl.seed, "Seed for k-means, NOTEARS and the bootstrap");
  baselines_cmd->add_option("--out", bl.out, "Output directory")->required();

  auto* check_cmd = app.add_subcommand("check", "Run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    print_error("usage", e.what());
    return 2;
  }

  if (threads > 0) set_thread_count(threads);
  try {
    if (*generate_cmd) return run_generate(gen);
    if (*train_cmd) return run_train(tr);
    if (*predict_cmd) return run_predict(pr);
    if (*evaluate_cmd) return run_evaluate(ev);
    if (*baselines_cmd) return run_baselines(bl);
    if (*check_cmd) return run_check();
  } catch (const ParseError& e) {
    print_error("parse_error", e.what());
  } catch (const InvalidInput& e) {
    print_error("invalid_input", e.what());
  } catch (const TrainingDiverged& e) {
    print_error("training_diverged", e.what());
  } catch (const BootstrapFailure& e) {
    print_error("bootstrap_failure", e.what());
  } catch (const fs::filesystem_error& e) {
    print_error("io_error", e.what());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
  }
  return 1;
}
