#pragma once

// Held-out error, bootstrap refits, structure-recovery metrics and ablations.

#include "notmad/baselines.hpp"
#include "notmad/core.hpp"
#include "notmad/dag.hpp"
#include "notmad/mixture.hpp"
#include "notmad/parallel.hpp"
#include "notmad/sem.hpp"
#include "notmad/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace notmad {

// ---------------------------------------------------------------------------
// Held-out error

/// Per-row ||x - xW||^2 / p.
inline Vector row_errors(const std::vector<Matrix>& networks, const Matrix& x_test) {
  require(static_cast<Index>(networks.size()) == x_test.rows(),
          "heldout_mse: " + std::to_string(networks.size()) + " networks for " + std::to_string(x_test.rows()) +
              " test rows");
  const double p = static_cast<double>(x_test.cols());
  Vector e(x_test.rows());
  for (Index i = 0; i < x_test.rows(); ++i) {
    const Matrix& w = networks[static_cast<std::size_t>(i)];
    require(w.rows() == x_test.cols() && w.cols() == x_test.cols(), "heldout_mse: network has the wrong size");
    const Eigen::RowVectorXd x = x_test.row(i);
    e(i) = (x - x * w).squaredNorm() / p;
  }
  return e;
}

/// Mean over test rows of ||x - xW||^2 / p.
inline double heldout_mse(const std::vector<Matrix>& networks, const Matrix& x_test) {
  require(x_test.rows() >= 1, "heldout_mse: empty test set");
  return row_errors(networks, x_test).mean();
}

/// Mean row error per group label.
inline std::map<int, double> per_group_mse(const Vector& errors, const std::vector<int>& groups) {
  require(static_cast<Index>(groups.size()) == errors.size(), "per_group_mse: label count mismatch");
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    acc[groups[i]].first += errors(static_cast<Index>(i));
    ++acc[groups[i]].second;
  }
  std::map<int, double> out;
  for (const auto& [g, sc] : acc) out[g] = sc.first / sc.second;
  return out;
}

/// Standard error of mean(a - b) for paired per-row errors.
inline double paired_standard_error(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() >= 2, "paired_standard_error: need equal sizes >= 2");
  const Vector d = a - b;
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / static_cast<double>(d.size() - 1);
  return std::sqrt(var / static_cast<double>(d.size()));
}

inline double standard_error(const Vector& a) {
  require(a.size() >= 2, "standard_error: need at least two values");
  const double mean = a.mean();
  return std::sqrt((a.array() - mean).square().sum() / static_cast<double>(a.size() - 1) /
                   static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// Bootstrap

/// Fits on a training set and returns one network per test row.
using NetworkMethod = std::function<std::vector<Matrix>(const Dataset& train, const Dataset& test)>;

struct MseSummary {
  double mean = 0.0;
  double variance = 0.0;  // sample variance across resamples
  std::vector<double> values;
};

class BootstrapFailure : public std::runtime_error {
 public:
  BootstrapFailure(int resample, const std::string& what)
      : std::runtime_error("bootstrap resample " + std::to_string(resample) + " failed: " + what),
        resample_(resample) {}
  int resample() const noexcept { return resample_; }

 private:
  int resample_;
};

inline MseSummary summarize(std::vector<double> values) {
  MseSummary s;
  s.values = std::move(values);
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  if (s.values.size() >= 2) {
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / (n - 1.0);
  }
  return s;
}

namespace detail {

// All index sets are drawn up front so results do not depend on scheduling.
inline std::vector<std::vector<Index>> bootstrap_draws(Index n, int resamples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::vector<std::vector<Index>> draws(static_cast<std::size_t>(resamples));
  for (auto& d : draws) {
    d.resize(static_cast<std::size_t>(n));
    for (auto& i : d) i = pick(rng);
  }
  return draws;
}

}  // namespace detail

/// Refits `method` on `resamples` with-replacement draws of the training set
/// and scores each on the fixed test set.
inline MseSummary bootstrap_mse(const NetworkMethod& method, const Dataset& train, const Dataset& test,
                                int resamples = 10, std::uint64_t seed = 0) {
  require(resamples >= 2, "bootstrap_mse: resamples must be >= 2");
  train.validate();
  test.validate();
  const auto draws = detail::bootstrap_draws(train.rows(), resamples, seed);
  std::vector<double> values(draws.size());
  std::vector<std::string> errors(draws.size());
  parallel_for(draws.size(), [&](std::size_t r) {
    try {
      values[r] = heldout_mse(method(train.subset(draws[r]), test), test.X);
    } catch (const std::exception& e) {
      errors[r] = e.what();
      if (errors[r].empty()) errors[r] = "unknown error";
    }
  });
  for (std::size_t r = 0; r < errors.size(); ++r)
    if (!errors[r].empty()) throw BootstrapFailure(static_cast<int>(r), errors[r]);
  return summarize(std::move(values));
}

// ---------------------------------------------------------------------------
// Structure metrics

/// Edge insertions + deletions + reversals between two structures; each
/// unordered node pair whose edge state differs counts once.
inline int structural_hamming(const BinaryStructure& estimated, const BinaryStructure& truth) {
  require(estimated.size() == truth.size(), "structural_hamming: dimension mismatch");
  int distance = 0;
  const Index p = truth.size();
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j)
      if (estimated(i, j) != truth(i, j) || estimated(j, i) != truth(j, i)) ++distance;
  return distance;
}

struct EdgeMetrics {
  long true_positive = 0;
  long false_positive = 0;
  long false_negative = 0;

  EdgeMetrics& operator+=(const EdgeMetrics& o) {
    true_positive += o.true_positive;
    false_positive += o.false_positive;
    false_negative += o.false_negative;
    return *this;
  }
  // Empty prediction against empty truth scores 1.
  double precision() const {
    const long d = true_positive + false_positive;
    return d == 0 ? 1.0 : static_cast<double>(true_positive) / static_cast<double>(d);
  }
  double recall() const {
    const long d = true_positive + false_negative;
    return d == 0 ? 1.0 : static_cast<double>(true_positive) / static_cast<double>(d);
  }
  double f1() const {
    const long d = 2 * true_positive + false_positive + false_negative;
    return d == 0 ? 1.0 : 2.0 * static_cast<double>(true_positive) / static_cast<double>(d);
  }
};

/// Directed-edge confusion counts.
inline EdgeMetrics edge_metrics(const BinaryStructure& estimated, const BinaryStructure& truth) {
  require(estimated.size() == truth.size(), "edge_metrics: dimension mismatch");
  EdgeMetrics m;
  const Index p = truth.size();
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) {
      if (i == j) continue;
      const bool e = estimated(i, j);
      const bool t = truth(i, j);
      m.true_positive += e && t;
      m.false_positive += e && !t;
      m.false_negative += !e && t;
    }
  return m;
}

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> t{0.01, 0.05, 0.1, 0.2, 0.3};
  return t;
}

struct ThresholdPoint {
  double threshold = 0.0;
  double mean_shd = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct StructureSweep {
  std::vector<ThresholdPoint> points;
  ThresholdPoint best;  // highest F1; the lowest threshold wins ties
};

/// Compares estimated networks (binarized at each threshold) with the true
/// structures; precision/recall/F1 pool the edge counts over all pairs.
inline StructureSweep structure_sweep(const std::vector<Matrix>& estimated, const std::vector<Matrix>& truth,
                                      const std::vector<double>& thresholds = default_thresholds()) {
  require(estimated.size() == truth.size() && !truth.empty(), "structure_sweep: network count mismatch");
  StructureSweep sweep;
  for (double t : thresholds) {
    EdgeMetrics pooled;
    double shd = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const BinaryStructure e = binarize(estimated[i], t);
      const BinaryStructure g = binarize(truth[i], 0.0);
      pooled += edge_metrics(e, g);
      shd += structural_hamming(e, g);
    }
    sweep.points.push_back({t, shd / static_cast<double>(truth.size()), pooled.precision(), pooled.recall(),
                            pooled.f1()});
  }
  sweep.best = *std::max_element(sweep.points.begin(), sweep.points.end(),
                                 [](const auto& a, const auto& b) { return a.f1 < b.f1; });
  return sweep;
}

/// Greedy one-to-one matching of estimated to true archetypes by edge F1;
/// returns the mean matched F1 over the true archetypes.
inline double archetype_recovery(const ArchetypeDictionary& estimated, const ArchetypeDictionary& truth,
                                 double threshold) {
  require(truth.count() >= 1, "archetype_recovery: empty true dictionary");
  require(estimated.count() >= truth.count(), "archetype_recovery: estimated dictionary has " +
                                                  std::to_string(estimated.count()) + " archetypes, truth has " +
                                                  std::to_string(truth.count()));
  require(estimated.nodes() == truth.nodes(), "archetype_recovery: node count mismatch");
  const Index ke = estimated.count();
  const Index kt = truth.count();
  Matrix f1(ke, kt);
  for (Index a = 0; a < ke; ++a)
    for (Index b = 0; b < kt; ++b)
      f1(a, b) = edge_metrics(binarize(estimated.archetypes[static_cast<std::size_t>(a)], threshold),
                              binarize(truth.archetypes[static_cast<std::size_t>(b)], 0.0))
                     .f1();
  std::vector<char> used_e(static_cast<std::size_t>(ke), 0);
  std::vector<char> used_t(static_cast<std::size_t>(kt), 0);
  double total = 0.0;
  for (Index round = 0; round < kt; ++round) {
    double best = -1.0;
    Index ba = 0, bb = 0;
    for (Index a = 0; a < ke; ++a) {
      if (used_e[static_cast<std::size_t>(a)]) continue;
      for (Index b = 0; b < kt; ++b) {
        if (used_t[static_cast<std::size_t>(b)]) continue;
        if (f1(a, b) > best) {
          best = f1(a, b);
          ba = a;
          bb = b;
        }
      }
    }
    used_e[static_cast<std::size_t>(ba)] = 1;
    used_t[static_cast<std::size_t>(bb)] = 1;
    total += best;
  }
  return total / static_cast<double>(kt);
}

// ---------------------------------------------------------------------------
// Method adapters used by bootstrap_mse, the ablation and the CLI

/// Networks a trained mixture model assigns to each test context.
inline std::vector<Matrix> notmad_networks(const MixtureModel& model, const Matrix& contexts, bool project,
                                           double relative_threshold) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(contexts.rows()));
  for (Index i = 0; i < contexts.rows(); ++i)
    out.push_back(predict_network_relative(model, contexts.row(i).transpose(), project, relative_threshold).weights());
  return out;
}

inline NetworkMethod notmad_method(const TrainConfig& config) {
  return [config](const Dataset& train, const Dataset& test) {
    const TrainedModel m = notmad::train(train, config);
    return notmad_networks(m.model, test.C, config.project_predictions, config.eval_threshold);
  };
}

inline NetworkMethod population_method(const NotearsOptions& opt) {
  return [opt](const Dataset& train, const Dataset& test) {
    const Matrix w = notears_fit(train.X, opt).weights();
    return std::vector<Matrix>(static_cast<std::size_t>(test.rows()), w);
  };
}

inline NetworkMethod clustered_method(const ClusteredOptions& opt) {
  return [opt](const Dataset& train, const Dataset& test) {
    const ClusteredModel model = clustered_fit(train, opt);
    std::vector<Matrix> out;
    for (Index i = 0; i < test.rows(); ++i) {
      if (opt.use_oracle_labels) {
        require(test.groups.has_value(), "oracle-clustered: test set lacks group labels");
        out.push_back(model.predict_group((*test.groups)[static_cast<std::size_t>(i)]).weights());
      } else {
        out.push_back(model.predict(test.C.row(i).transpose()).weights());
      }
    }
    return out;
  };
}

inline NetworkMethod lioness_method(const RidgeNetworkFit& fit, bool project) {
  return [fit, project](const Dataset& train, const Dataset& test) {
    std::vector<Matrix> nets = lioness_heldout(train.X, test.X, fit);
    if (project)
      for (auto& w : nets) w = project_to_dag(WeightedGraph::clamped(w)).weights();
    return nets;
  };
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string variant;
  double mse = 0.0;
  double standard_error = 0.0;
  std::map<int, double> per_group;
  Vector row_errors;
};

inline const char* const kFullModel = "archetype_mixture_sample_specific";
inline const char* const kMixtureGroupAverage = "archetype_mixture_group_average";
inline const char* const kOneArchetypeGroup = "one_archetype_group_average";
inline const char* const kOneArchetypeSample = "one_archetype_sample_specific";

/// Fits the four variants and scores them on the test set:
///   one_archetype_group_average      K = 1 model fitted per group
///   archetype_mixture_group_average  full model, networks averaged per group
///   one_archetype_sample_specific    K = 1 model on all data
///   archetype_mixture_sample_specific  full model
inline std::vector<AblationRow> run_ablation(const Dataset& train, const Dataset& test, const TrainConfig& config) {
  require(train.groups.has_value() && test.groups.has_value(), "run_ablation: group labels are required");
  train.validate();
  test.validate();
  const std::vector<int>& test_groups = *test.groups;
  const std::vector<int>& train_groups = *train.groups;
  const bool project = config.project_predictions;
  const double rel = config.eval_threshold;

  auto finish = [&](std::string name, const std::vector<Matrix>& nets) {
    AblationRow row;
    row.variant = std::move(name);
    row.row_errors = row_errors(nets, test.X);
    row.mse = row.row_errors.mean();
    row.standard_error = row.row_errors.size() >= 2 ? standard_error(row.row_errors) : 0.0;
    row.per_group = per_group_mse(row.row_errors, test_groups);
    return row;
  };

  std::map<int, std::vector<Index>> train_members;
  for (std::size_t i = 0; i < train_groups.size(); ++i) train_members[train_groups[i]].push_back(static_cast<Index>(i));
  for (int g : test_groups)
    require(train_members.count(g) > 0, "run_ablation: test group " + std::to_string(g) + " absent from training");

  TrainConfig single = config;
  single.archetypes = 1;

  std::vector<AblationRow> rows;
  const TrainedModel full = notmad::train(train, config);
  const std::vector<Matrix> full_nets = notmad_networks(full.model, test.C, project, rel);

  {  // one archetype per group
    std::map<int, Matrix> per_group;
    for (const auto& [g, idx] : train_members) {
      TrainConfig c = single;
      c.batch_size = std::min<int>(c.batch_size, static_cast<int>(idx.size()));
      const TrainedModel m = notmad::train(train.subset(idx), c);
      per_group[g] = predict_network_relative(m.model, Vector::Zero(train.context_dim()), project, rel).weights();
    }
    std::vector<Matrix> nets;
    for (int g : test_groups) nets.push_back(per_group.at(g));
    rows.push_back(finish(kOneArchetypeGroup, nets));
  }
  {  // full model averaged within each group
    std::map<int, Matrix> per_group;
    for (const auto& [g, idx] : train_members) {
      Matrix avg = Matrix::Zero(train.features(), train.features());
      for (Index i : idx) avg += full.model.network(train.C.row(i).transpose());
      avg /= static_cast<double>(idx.size());
      const double cut = rel * avg.cwiseAbs().maxCoeff();
      per_group[g] = finalize_network(avg, project, cut).weights();
    }
    std::vector<Matrix> nets;
    for (int g : test_groups) nets.push_back(per_group.at(g));
    rows.push_back(finish(kMixtureGroupAverage, nets));
  }
  {  // one archetype, all samples
    const TrainedModel m = notmad::train(train, single);
    rows.push_back(finish(kOneArchetypeSample, notmad_networks(m.model, test.C, project, rel)));
  }
  rows.push_back(finish(kFullModel, full_nets));
  return rows;
}

struct AblationSummary {
  std::string variant;
  MseSummary mse;
};

/// run_ablation repeated on bootstrap draws of the training set.
inline std::vector<AblationSummary> bootstrap_ablation(const Dataset& train, const Dataset& test,
                                                       const TrainConfig& config, int resamples = 10,
                                                       std::uint64_t seed = 0) {
  require(resamples >= 2, "bootstrap_ablation: resamples must be >= 2");
  require(train.groups.has_value() && test.groups.has_value(), "run_ablation: group labels are required");
  const auto draws = detail::bootstrap_draws(train.rows(), resamples, seed);
  std::vector<std::vector<AblationRow>> results(draws.size());
  std::vector<std::string> errors(draws.size());
  parallel_for(draws.size(), [&](std::size_t r) {
    try {
      results[r] = run_ablation(train.subset(draws[r]), test, config);
    } catch (const std::exception& e) {
      errors[r] = e.what();
      if (errors[r].empty()) errors[r] = "unknown error";
    }
  });
  for (std::size_t r = 0; r < errors.size(); ++r)
    if (!errors[r].empty()) throw BootstrapFailure(static_cast<int>(r), errors[r]);

  std::vector<AblationSummary> out;
  for (std::size_t v = 0; v < results.front().size(); ++v) {
    std::vector<double> values;
    for (const auto& rows : results) values.push_back(rows[v].mse);
    out.push_back({results.front()[v].variant, summarize(std::move(values))});
  }
  return out;
}

}  // namespace notmad
