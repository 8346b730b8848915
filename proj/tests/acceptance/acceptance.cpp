// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Reference values come from the independent implementations in oracles.hpp.

#include "notmad/acyclicity.hpp"
#include "notmad/baselines.hpp"
#include "notmad/dag.hpp"
#include "notmad/eval.hpp"
#include "notmad/io.hpp"
#include "notmad/synth.hpp"
#include "notmad/train.hpp"
#include "oracles.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef NOTMAD_CLI_PATH
#error "NOTMAD_CLI_PATH must point at the notmad executable"
#endif

using namespace notmad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Configuration shared by the synthetic experiments (criteria 5-7).
TrainConfig experiment_config(std::uint64_t seed) {
  TrainConfig c;
  c.archetypes = 3;
  c.epochs = 50;
  c.learning_rate = 0.01;
  c.batch_size = 64;
  c.encoder = EncoderKind::feedforward;
  c.hidden = 16;
  c.dag_weight_growth = 1.15;
  c.dag_weight_max = 1000.0;
  c.eval_threshold = 0.05;
  c.project_predictions = true;
  c.seed = seed;
  return c;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome acyclicity_oracle() {
  long graphs = 0, mismatches = 0;
  for (int p = 2; p <= 4; ++p)
    for (const Matrix& a : oracle::all_structures(p)) {
      ++graphs;
      const bool truth = is_dag(binarize(a));
      if ((dag_penalty(a) < kDagTolerance) != truth) ++mismatches;
      if (truth != oracle::acyclic_by_permutation(a)) ++mismatches;
    }
  return {mismatches == 0, std::to_string(graphs) + " graphs, " + std::to_string(mismatches) + " disagreements"};
}

Outcome gradient_suite() {
  std::mt19937_64 rng(2024);
  const Index sizes[3] = {3, 5, 8};
  double worst_h = 0, worst_sem = 0, worst_obj = 0;

  for (int t = 0; t < 100; ++t) {
    const Index p = sizes[t % 3];
    const Matrix w = oracle::random_matrix(p, p, rng);
    const Vector numeric = oracle::central_difference(
        [p](const Vector& v) { return oracle::series_h(Matrix(v.reshaped(p, p))); }, Vector(w.reshaped()), 1e-5);
    worst_h = std::max(worst_h, oracle::relative_error(Vector(dag_penalty_gradient(w).reshaped()), numeric));
  }

  for (int t = 0; t < 100; ++t) {
    const Index p = sizes[t % 3];
    const Matrix x = oracle::random_matrix(12, p, rng);
    const Matrix w = oracle::random_matrix(p, p, rng);
    const Vector numeric = oracle::central_difference(
        [&x, p](const Vector& v) {
          const Matrix r = x - x * Matrix(v.reshaped(p, p));
          return r.squaredNorm() / (2.0 * static_cast<double>(x.rows()));
        },
        Vector(w.reshaped()), 1e-5);
    worst_sem = std::max(worst_sem, oracle::relative_error(Vector(sem_loss_gradient(x, w).reshaped()), numeric));
  }

  for (int t = 0; t < 100; ++t) {
    const Index p = sizes[t % 3];
    const Index k = (t / 3) % 2 ? 3 : 1;
    const EncoderKind kind = (t / 6) % 2 ? EncoderKind::feedforward : EncoderKind::linear;
    TrainConfig cfg;
    cfg.archetypes = static_cast<int>(k);
    cfg.encoder = kind;
    cfg.hidden = 5;
    MixtureModel model = initialize_model(p, 2, cfg, rng);
    // Dense archetypes keep every entry away from the L1 kink at zero.
    for (auto& wk : model.dict.archetypes) wk = oracle::random_offdiag(p, rng, 0.05, 0.4);
    for (auto& b : model.encoder.parameters()) b = oracle::random_matrix(b.rows(), b.cols(), rng);
    const Matrix x = oracle::random_matrix(4, p, rng);
    const Matrix c = oracle::random_matrix(4, 2, rng);
    const PenaltyWeights weights{0.8, 0.05, 1.2};
    MixtureGradient grad;
    evaluate_objective(model, x, c, weights, Reduction::sum, &grad);
    MixtureModel probe = model;
    const Vector numeric = oracle::central_difference(
        [&](const Vector& v) {
          assign(probe, v);
          double total = 0.0;
          for (Index i = 0; i < x.rows(); ++i) {
            const Vector z = oracle::softmax(probe.encoder.logits(c.row(i).transpose()));
            Matrix wi = Matrix::Zero(p, p);
            for (Index a = 0; a < k; ++a) wi += z(a) * probe.dict.archetypes[static_cast<std::size_t>(a)];
            wi.diagonal().setZero();
            total += (x.row(i) - x.row(i) * wi).squaredNorm() + weights.alpha * oracle::series_h(wi);
          }
          for (const auto& wk : probe.dict.archetypes)
            total += weights.beta * wk.cwiseAbs().sum() + weights.gamma * oracle::series_h(wk);
          return total;
        },
        flatten(model), 1e-6);
    worst_obj = std::max(worst_obj, oracle::relative_error(flatten(grad), numeric));
  }

  const bool ok = worst_h < 1e-4 && worst_sem < 1e-4 && worst_obj < 1e-4;
  return {ok, "worst relative error: h " + sci(worst_h) + ", sem " + sci(worst_sem) + ", objective " +
                  sci(worst_obj) + " (limit 1e-4)"};
}

// Acyclicity via depth-first search, independent of the library's Kahn sort.
bool has_cycle(const Matrix& a) {
  const Index p = a.rows();
  std::vector<int> state(static_cast<std::size_t>(p), 0);
  std::function<bool(Index)> visit = [&](Index u) {
    state[static_cast<std::size_t>(u)] = 1;
    for (Index v = 0; v < p; ++v) {
      if (a(u, v) == 0.0) continue;
      if (state[static_cast<std::size_t>(v)] == 1) return true;
      if (state[static_cast<std::size_t>(v)] == 0 && visit(v)) return true;
    }
    state[static_cast<std::size_t>(u)] = 2;
    return false;
  };
  for (Index u = 0; u < p; ++u)
    if (state[static_cast<std::size_t>(u)] == 0 && visit(u)) return true;
  return false;
}

Outcome projection_contract() {
  std::mt19937_64 rng(3);
  int cyclic = 0, not_idempotent = 0, altered = 0;
  for (int t = 0; t < 1000; ++t) {
    const Matrix w = oracle::random_offdiag(10, rng);
    const WeightedGraph out = project_to_dag(WeightedGraph(w));
    if (has_cycle(out.weights()) || !is_dag(binarize(out))) ++cyclic;
    if (!(project_to_dag(out) == out)) ++not_idempotent;
    for (Index i = 0; i < 10; ++i)
      for (Index j = 0; j < 10; ++j)
        if (out(i, j) != 0.0 && out(i, j) != w(i, j)) ++altered;
  }
  return {cyclic == 0 && not_idempotent == 0 && altered == 0,
          "1000 dense p=10 graphs: " + std::to_string(cyclic) + " cyclic, " + std::to_string(not_idempotent) +
              " not idempotent, " + std::to_string(altered) + " altered weights"};
}

Outcome compatibility() {
  std::mt19937_64 rng(4);
  const Index p = 8;
  // Acyclic unions: both archetypes respect one shared random order.
  long bad_mixtures = 0, mixtures = 0;
  for (int pair = 0; pair < 1000; ++pair) {
    std::vector<Index> order(p);
    for (Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Matrix w[2] = {Matrix::Zero(p, p), Matrix::Zero(p, p)};
    std::bernoulli_distribution keep(0.35);
    std::uniform_real_distribution<double> mag(-2.0, 2.0);
    for (auto& wk : w)
      for (Index a = 0; a < p; ++a)
        for (Index b = a + 1; b < p; ++b)
          if (keep(rng)) wk(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]) = mag(rng);
    const CompatibilityResult r = mixture_compatibility_check(WeightedGraph(w[0]), WeightedGraph(w[1]), 50, rng);
    if (!r.union_acyclic) return {false, "generated acyclic-union pair reported cyclic"};
    mixtures += r.trials;
    bad_mixtures += r.trials - r.acyclic_mixtures;
  }

  // Cyclic unions: archetypes drawn from independent orders, kept only when the union has a cycle.
  long cyclic_weightings = 0, weightings = 0;
  int pairs = 0;
  std::uniform_real_distribution<double> coef(-10.0, 10.0);
  while (pairs < 200) {
    const Matrix w1 = oracle::random_dag(p, 0.35, rng);
    const Matrix w2 = oracle::random_dag(p, 0.35, rng);
    if (!has_cycle(w1.cwiseAbs() + w2.cwiseAbs())) continue;
    ++pairs;
    for (int t = 0; t < 50; ++t) {
      ++weightings;
      if (has_cycle(coef(rng) * w1 + w2)) ++cyclic_weightings;
    }
  }
  const double cyclic_share = static_cast<double>(cyclic_weightings) / static_cast<double>(weightings);
  return {bad_mixtures == 0 && cyclic_share >= 0.99,
          std::to_string(mixtures) + " mixtures of acyclic-union pairs, " + std::to_string(bad_mixtures) +
              " cyclic; cyclic-union pairs give cyclic mixtures " + fmt(100.0 * cyclic_share, 5) + "% of the time"};
}

Outcome degenerate_recovery() {
  std::vector<double> f1;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec s;
    s.p = 8;
    s.k_true = 1;
    s.n_train = 2000;
    s.n_test = 1;
    s.edge_density = 0.25;
    s.noise_scale = 1.0;
    s.seed = seed;
    const SynthTruth truth = generate(s);
    TrainConfig c = experiment_config(seed);
    c.archetypes = 1;
    const TrainedModel m = train(truth.train, c);
    const Matrix est = predict_network(m.model, truth.train.C.row(0).transpose(), true, 0.0).weights();
    const StructureSweep sweep = structure_sweep({est}, {truth.archetypes.archetypes[0]});
    f1.push_back(sweep.best.f1);
    per_seed += (seed ? ", " : "") + fmt(sweep.best.f1, 3);
  }
  const double med = median(f1);
  return {med >= 0.9, "median best-threshold F1 " + fmt(med, 3) + " over seeds [" + per_seed + "] (need >= 0.9)"};
}

Outcome table_direction() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthSpec s;  // defaults: p=10, m=4, K=3, n_train=2000, n_test=500, simplex-smooth
    s.seed = seed;
    const SynthTruth t = generate(s);
    NotearsOptions no;
    no.seed = seed;
    ClusteredOptions co;
    co.seed = seed;
    co.n_clusters = 3;
    co.notears = no;
    ClusteredOptions oracle_opt = co;
    oracle_opt.use_oracle_labels = true;

    const MseSummary notmad = bootstrap_mse(notmad_method(experiment_config(seed)), t.train, t.test, 10, seed);
    const MseSummary oracle = bootstrap_mse(clustered_method(oracle_opt), t.train, t.test, 10, seed);
    const MseSummary clustered = bootstrap_mse(clustered_method(co), t.train, t.test, 10, seed);
    const MseSummary population = bootstrap_mse(population_method(no), t.train, t.test, 10, seed);
    const MseSummary lioness = bootstrap_mse(lioness_method(RidgeNetworkFit{}, true), t.train, t.test, 10, seed);

    const double sd = std::sqrt(notmad.variance + population.variance);
    const bool ordered = notmad.mean < oracle.mean && oracle.mean < clustered.mean && clustered.mean < population.mean;
    const bool separated = population.mean - notmad.mean >= 2.0 * sd;
    const bool lioness_worse = lioness.mean > notmad.mean;
    ok = ok && ordered && separated && lioness_worse;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + ": notmad " + fmt(notmad.mean) +
              " < oracle " + fmt(oracle.mean) + " < clustered " + fmt(clustered.mean) + " < population " +
              fmt(population.mean) + " (gap " + fmt((population.mean - notmad.mean) / sd, 3) + " sd), lioness " +
              fmt(lioness.mean) + (ordered && separated && lioness_worse ? "" : " [violated]");
  }
  return {ok, detail};
}

Outcome ablation_direction() {
  bool ok = true;
  std::string detail;
  for (auto kind : {MixingKind::simplex_smooth, MixingKind::one_hot}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      SynthSpec s;
      s.mixing = kind;
      s.seed = seed;
      const SynthTruth t = generate(s);
      const auto rows = bootstrap_ablation(t.train, t.test, experiment_config(seed), 10, seed);
      std::map<std::string, MseSummary> by;
      for (const auto& r : rows) by[r.variant] = r.mse;
      const MseSummary& full = by.at(kFullModel);
      bool seed_ok = true;
      std::string note;
      if (kind == MixingKind::simplex_smooth) {
        for (const auto& r : rows)
          if (r.variant != kFullModel && full.mean > r.mse.mean) seed_ok = false;
        double best_other = 1e300;
        for (const auto& r : rows)
          if (r.variant != kFullModel) best_other = std::min(best_other, r.mse.mean);
        note = "smooth seed " + std::to_string(seed) + ": full " + fmt(full.mean) + " vs best variant " +
               fmt(best_other);
      } else {
        const MseSummary& grouped = by.at(kMixtureGroupAverage);
        const double sigma = std::sqrt(full.variance + grouped.variance);
        const double gap = std::abs(full.mean - grouped.mean);
        seed_ok = gap <= 2.0 * sigma;
        note = "one-hot seed " + std::to_string(seed) + ": full " + fmt(full.mean) + " vs group-averaged " +
               fmt(grouped.mean) + ", |gap| " + fmt(gap, 3) + " vs 2 sigma " + fmt(2.0 * sigma, 3);
      }
      ok = ok && seed_ok;
      detail += (detail.empty() ? "" : "; ") + note + (seed_ok ? "" : " [violated]");
    }
  }
  return {ok, detail};
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" NOTMAD_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = read_text(e.path());
  return files;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("notmad_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::map<std::string, std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = root / ("run" + std::to_string(r));
    fs::create_directories(dir);
    write_atomic(dir / "spec.json", R"({"p": 6, "m": 2, "k_true": 2, "n_train": 300, "n_test": 60, "seed": 11})");
    write_atomic(dir / "config.json", R"({"epochs": 5, "archetypes": 2, "batch_size": 32, "seed": 5})");
    const std::string threads = r == 0 ? "" : "--threads 2 ";
    const std::vector<std::string> steps = {
        "generate --spec spec.json --out data",
        "train --data data/train.csv --config config.json --out model",
        "predict --model model/model.json --contexts data/test.csv --out nets --project --threshold 0.01",
        "evaluate --model model/model.json --test data/test.csv --train data/train.csv --truth data/truth.json "
        "--resamples 3 --ablation --seed 2 --out eval",
        "baselines --train data/train.csv --test data/test.csv --truth data/truth.json --resamples 3 --seed 2 "
        "--out base"};
    for (const auto& step : steps)
      if (int code = run_cli(dir, threads + step); code != 0) {
        fs::remove_all(root);
        return {false, "step '" + step + "' exited with " + std::to_string(code)};
      }
    runs[r] = snapshot(dir);
  }
  fs::remove_all(root);
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) differing.push_back(name);
  }
  for (const auto& [name, bytes] : runs[1])
    if (!runs[0].count(name)) differing.push_back(name);
  std::string detail = std::to_string(runs[0].size()) + " files compared across two runs (1 and 2 threads)";
  if (!differing.empty()) detail += "; differing: " + differing.front();
  return {differing.empty() && !runs[0].empty(), detail};
}

Outcome exponential_kernel() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> norm(0.01, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index p = 2 + t % 9;
    Matrix a = oracle::random_matrix(p, p, rng);
    a *= norm(rng) / a.norm();
    worst = std::max(worst, oracle::relative_error(matrix_exponential(a), oracle::series_expm(a)));
  }
  return {worst <= 1e-9, "worst relative error " + sci(worst) + " over 100 matrices with norm <= 10 (limit 1e-9)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0: no runtime limit
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "acyclicity oracle equivalence", 30, acyclicity_oracle},
      {2, "gradient suite", 120, gradient_suite},
      {3, "projection contract", 60, projection_contract},
      {4, "mixture compatibility", 60, compatibility},
      {5, "single-archetype recovery", 300, degenerate_recovery},
      {6, "baseline ordering", 1200, table_direction},
      {7, "ablation direction", 1500, ablation_direction},
      {8, "CLI determinism", 0, cli_determinism},
      {9, "matrix exponential kernel", 10, exponential_kernel},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && seconds > c.budget_seconds) {
      o.passed = false;
      o.detail += "; exceeded the " + fmt(c.budget_seconds) + " s budget";
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(seconds, 3) << " s]" << std::endl;
  }
  std::cout << (failures ? "FAILED: " : "ALL PASSED: ") << 9 - failures << "/9 criteria" << std::endl;
  return failures ? 1 : 0;
}
