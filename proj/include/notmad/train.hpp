#pragma once

// End-to-end training of the archetype-mixture objective
//
//   sum_i ||x_i - x_i W(c_i)||^2 + alpha h(W(c_i))
//     + sum_k beta ||W_k||_1 + gamma h(W_k)
//
// by shuffled mini-batch Adam over archetypes and encoder jointly.

#include "notmad/acyclicity.hpp"
#include "notmad/core.hpp"
#include "notmad/dag.hpp"
#include "notmad/mixture.hpp"
#include "notmad/optim.hpp"
#include "notmad/sem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace notmad {

struct TrainConfig {
  double alpha = 1.0;  // per-sample DAG-ness weight
  double beta = 0.01;  // archetype L1 weight
  double gamma = 1.0;  // archetype DAG-ness weight
  // Per-epoch multiplier on alpha and gamma (1 keeps them constant), capped
  // at dag_weight_max times their initial value.
  double dag_weight_growth = 1.0;
  double dag_weight_max = 1.0;
  int archetypes = 4;
  double learning_rate = 1e-2;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  EncoderKind encoder = EncoderKind::linear;
  int hidden = 16;
  // Prediction threshold as a fraction of the network's largest |weight|.
  double eval_threshold = 0.05;
  // Whether evaluation projects each predicted network onto a DAG; otherwise
  // only the weak-edge threshold is applied.
  bool project_predictions = false;

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0, "TrainConfig: penalty weights must be >= 0");
    require(dag_weight_growth >= 1.0 && dag_weight_max >= 1.0, "TrainConfig: DAG weight schedule must be >= 1");
    require(archetypes >= 1, "TrainConfig: archetypes must be >= 1");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(hidden >= 1, "TrainConfig: hidden must be >= 1");
    require(eval_threshold >= 0.0, "TrainConfig: eval_threshold must be >= 0");
  }
};

struct PenaltyWeights {
  double alpha = 1.0;
  double beta = 0.01;
  double gamma = 1.0;

  static PenaltyWeights from(const TrainConfig& c) { return {c.alpha, c.beta, c.gamma}; }

  /// Weights in effect during a 1-based epoch.
  static PenaltyWeights at_epoch(const TrainConfig& c, int epoch) {
    const double factor =
        std::min(c.dag_weight_max, std::pow(c.dag_weight_growth, static_cast<double>(std::max(0, epoch - 1))));
    return {c.alpha * factor, c.beta, c.gamma * factor};
  }
};

/// Weighted contributions of the four objective terms.
struct ObjectiveTerms {
  double prediction = 0.0;
  double sample_dag = 0.0;     // alpha * sum_i h(W_i)
  double archetype_l1 = 0.0;   // beta * sum_k ||W_k||_1
  double archetype_dag = 0.0;  // gamma * sum_k h(W_k)

  double total() const noexcept { return prediction + sample_dag + archetype_l1 + archetype_dag; }
};

/// `sum` adds per-sample terms; `mean` divides them by the row count. The
/// archetype terms enter once either way.
enum class Reduction { sum, mean };

namespace detail {

inline void check_batch(const MixtureModel& model, const Matrix& x, const Matrix& c) {
  require(x.rows() >= 1, "objective: empty batch");
  require(x.rows() == c.rows(), "objective: X and C row counts differ");
  require(x.cols() == model.nodes(), "objective: X has " + std::to_string(x.cols()) + " columns, model has " +
                                         std::to_string(model.nodes()) + " nodes");
  require(c.cols() == model.context_dim(), "objective: C has " + std::to_string(c.cols()) +
                                               " columns, encoder expects " + std::to_string(model.context_dim()));
}

inline double signum(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace detail

/// Objective value and, when `grad` is non-null, its gradient (L1 taken as a
/// sign subgradient with 0 at 0).
inline ObjectiveTerms evaluate_objective(const MixtureModel& model, const Matrix& x, const Matrix& c,
                                         const PenaltyWeights& weights, Reduction reduction,
                                         MixtureGradient* grad = nullptr) {
  detail::check_batch(model, x, c);
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(x.rows()) : 1.0;
  if (grad) *grad = MixtureGradient::zeros_like(model);

  ObjectiveTerms terms;
  for (Index i = 0; i < x.rows(); ++i) {
    const Vector ctx = c.row(i).transpose();
    const Vector z = model.subtype_weights(ctx);
    const Matrix w = generate_graph(model.dict, z);
    const Eigen::RowVectorXd xi = x.row(i);
    const Eigen::RowVectorXd residual = xi - xi * w;
    terms.prediction += scale * residual.squaredNorm();

    DagPenalty h{0.0, Matrix()};
    if (weights.alpha != 0.0) h = grad ? dag_penalty_with_gradient(w) : DagPenalty{dag_penalty(w), Matrix()};
    terms.sample_dag += scale * weights.alpha * h.value;

    if (grad) {
      Matrix dl_dw = -2.0 * xi.transpose() * residual;
      if (weights.alpha != 0.0) dl_dw += weights.alpha * h.gradient;
      dl_dw *= scale;
      MixtureGradient g = backward(model, ctx, dl_dw);
      *grad += g;
    }
  }

  for (std::size_t k = 0; k < model.dict.archetypes.size(); ++k) {
    const Matrix& wk = model.dict.archetypes[k];
    terms.archetype_l1 += weights.beta * wk.cwiseAbs().sum();
    if (grad) {
      Matrix g = weights.beta * wk.unaryExpr([](double v) { return detail::signum(v); });
      if (weights.gamma != 0.0) {
        const DagPenalty h = dag_penalty_with_gradient(wk);
        terms.archetype_dag += weights.gamma * h.value;
        g += weights.gamma * h.gradient;
      }
      g.diagonal().setZero();
      grad->archetypes[k] += g;
    } else if (weights.gamma != 0.0) {
      terms.archetype_dag += weights.gamma * dag_penalty(wk);
    }
  }
  return terms;
}

/// Summed objective over the rows of (X, C).
inline ObjectiveTerms notmad_objective(const MixtureModel& model, const Matrix& x, const Matrix& c,
                                       const PenaltyWeights& weights) {
  return evaluate_objective(model, x, c, weights, Reduction::sum);
}

/// One row of the per-epoch training log, measured on the full training set
/// after the epoch's updates.
struct EpochRecord {
  int epoch = 0;
  double pred_loss = 0.0;  // mean_i ||x_i - x_i W_i||^2
  double mean_h = 0.0;     // mean_i h(W_i)
  double arch_l1 = 0.0;    // sum_k ||W_k||_1
  double arch_h = 0.0;     // sum_k h(W_k)
};

struct TrainedModel {
  MixtureModel model;
  TrainConfig config;
  std::vector<EpochRecord> log;
  double initial_objective = 0.0;  // full-data objective, mean reduction
  double final_objective = 0.0;
};

template <class Rng>
MixtureModel initialize_model(Index p, Index m, const TrainConfig& config, Rng& rng) {
  MixtureModel model;
  model.dict = ArchetypeDictionary::random_sparse(config.archetypes, p, rng);
  model.encoder = ContextEncoder::make(config.encoder, m, config.archetypes, config.hidden);
  model.encoder.initialize(rng);
  return model;
}

inline EpochRecord measure_epoch(const MixtureModel& model, const Dataset& data, int epoch) {
  EpochRecord r;
  r.epoch = epoch;
  for (Index i = 0; i < data.rows(); ++i) {
    const Matrix w = model.network(data.C.row(i).transpose());
    const Eigen::RowVectorXd xi = data.X.row(i);
    r.pred_loss += (xi - xi * w).squaredNorm();
    r.mean_h += dag_penalty(w);
  }
  r.pred_loss /= static_cast<double>(data.rows());
  r.mean_h /= static_cast<double>(data.rows());
  for (const auto& wk : model.dict.archetypes) {
    r.arch_l1 += wk.cwiseAbs().sum();
    r.arch_h += dag_penalty(wk);
  }
  return r;
}

namespace detail {

inline void guard_finite(const ObjectiveTerms& t, int epoch) {
  const std::pair<const char*, double> named[] = {{"prediction", t.prediction},
                                                  {"sample_dag", t.sample_dag},
                                                  {"archetype_l1", t.archetype_l1},
                                                  {"archetype_dag", t.archetype_dag}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value))
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": term '" + name +
                                 "' is non-finite",
                             epoch, name);
  }
}

}  // namespace detail

inline TrainedModel train(const Dataset& data, const TrainConfig& config) {
  data.validate();
  config.validate();
  require(data.rows() >= config.batch_size, "train: batch_size exceeds the number of rows");

  std::mt19937_64 rng(config.seed);
  TrainedModel out;
  out.config = config;
  out.model = initialize_model(data.features(), data.context_dim(), config, rng);
  const PenaltyWeights weights = PenaltyWeights::from(config);

  const auto full_objective = [&](int epoch) {
    ObjectiveTerms t;
    try {
      t = evaluate_objective(out.model, data.X, data.C, weights, Reduction::mean);
    } catch (const InvalidInput&) {
      // Non-finite weights reach here through the finiteness checks.
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": non-finite parameters",
                             epoch, "parameters");
    }
    detail::guard_finite(t, epoch);
    return t.total();
  };
  out.initial_objective = full_objective(0);
  out.final_objective = out.initial_objective;
  if (config.epochs == 0) return out;

  Vector params = flatten(out.model);
  Adam optimizer(params.size(), {config.learning_rate});
  std::vector<Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Index{0});

  Matrix xb, cb;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const PenaltyWeights epoch_weights = PenaltyWeights::at_epoch(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const Index b = static_cast<Index>(end - start);
      xb.resize(b, data.features());
      cb.resize(b, data.context_dim());
      for (Index r = 0; r < b; ++r) {
        xb.row(r) = data.X.row(order[start + static_cast<std::size_t>(r)]);
        cb.row(r) = data.C.row(order[start + static_cast<std::size_t>(r)]);
      }
      MixtureGradient grad;
      ObjectiveTerms terms;
      try {
        terms = evaluate_objective(out.model, xb, cb, epoch_weights, Reduction::mean, &grad);
      } catch (const InvalidInput&) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": non-finite parameters",
                               epoch, "parameters");
      }
      detail::guard_finite(terms, epoch);
      optimizer.step(params, flatten(grad));
      assign(out.model, params);
    }
    out.log.push_back(measure_epoch(out.model, data, epoch));
    const EpochRecord& rec = out.log.back();
    for (double v : {rec.pred_loss, rec.mean_h, rec.arch_l1, rec.arch_h})
      if (!std::isfinite(v))
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": epoch log is non-finite",
                               epoch, "log");
  }
  out.final_objective = full_objective(config.epochs);
  return out;
}

/// Context-specific network with weak edges removed; acyclic when `project`.
inline WeightedGraph predict_network(const MixtureModel& model, const Vector& c, bool project, double threshold) {
  return finalize_network(model.network(c), project, threshold);
}

/// Threshold given as a fraction of the network's largest |weight|.
inline WeightedGraph predict_network_relative(const MixtureModel& model, const Vector& c, bool project,
                                              double relative_threshold) {
  Matrix w = model.network(c);
  const double cut = relative_threshold * w.cwiseAbs().maxCoeff();
  return finalize_network(std::move(w), project, cut);
}

}  // namespace notmad
