#pragma once

// Quick invariant checks run by `notmad check`: analytic gradients against
// central differences, the acyclicity criterion against exhaustive
// depth-first cycle detection, and the matrix exponential against a long
// Taylor series.

#include "notmad/acyclicity.hpp"
#include "notmad/core.hpp"
#include "notmad/dag.hpp"
#include "notmad/mixture.hpp"
#include "notmad/sem.hpp"
#include "notmad/train.hpp"

#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace notmad {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selfcheck {

inline double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

inline std::string describe_error(double worst) {
  std::ostringstream s;
  s << "max relative error " << std::scientific << std::setprecision(2) << worst;
  return s.str();
}

inline Vector central_difference(const std::function<double(const Vector&)>& f, Vector x, double step = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + step;
    const double up = f(x);
    x(i) = orig - step;
    const double down = f(x);
    x(i) = orig;
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

// Recursive three-colour DFS; independent of the Kahn order in dag.hpp.
inline bool has_cycle_dfs(const Matrix& a) {
  const Index p = a.rows();
  std::vector<int> colour(static_cast<std::size_t>(p), 0);
  std::function<bool(Index)> visit = [&](Index u) {
    colour[static_cast<std::size_t>(u)] = 1;
    for (Index v = 0; v < p; ++v) {
      if (a(u, v) == 0.0) continue;
      if (colour[static_cast<std::size_t>(v)] == 1) return true;
      if (colour[static_cast<std::size_t>(v)] == 0 && visit(v)) return true;
    }
    colour[static_cast<std::size_t>(u)] = 2;
    return false;
  };
  for (Index u = 0; u < p; ++u)
    if (colour[static_cast<std::size_t>(u)] == 0 && visit(u)) return true;
  return false;
}

inline Matrix series_exponential(const Matrix& a, int terms = 60) {
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k < terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

inline Matrix dense_offdiagonal(Index p, std::mt19937_64& rng, double lo = 0.05, double hi = 0.5) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution neg(0.5);
  Matrix w = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (i != j) w(i, j) = neg(rng) ? -mag(rng) : mag(rng);
  return w;
}

}  // namespace selfcheck

inline CheckResult check_acyclicity_oracle(int max_p = 4) {
  long graphs = 0;
  for (int p = 2; p <= max_p; ++p) {
    const int slots = p * (p - 1);
    for (long mask = 0; mask < (1L << slots); ++mask) {
      Matrix a = Matrix::Zero(p, p);
      int bit = 0;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          if (i != j) a(i, j) = (mask >> bit++) & 1 ? 1.0 : 0.0;
      const bool acyclic = !selfcheck::has_cycle_dfs(a);
      const bool small_h = dag_penalty(a) < kDagTolerance;
      const bool kahn = is_dag(binarize(a));
      ++graphs;
      if (acyclic != small_h || acyclic != kahn)
        return {"acyclicity_oracle", false, "disagreement at p=" + std::to_string(p) + " mask=" + std::to_string(mask)};
    }
  }
  return {"acyclicity_oracle", true, std::to_string(graphs) + " graphs"};
}

inline CheckResult check_matrix_exponential(int instances = 20, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index p = 2 + t % 5;
    Matrix a(p, p);
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) a(i, j) = n(rng);
    a *= 1.5 / a.norm();
    const Matrix ref = selfcheck::series_exponential(a);
    worst = std::max(worst, (matrix_exponential(a) - ref).norm() / ref.norm());
  }
  return {"matrix_exponential", worst < 1e-12, selfcheck::describe_error(worst)};
}

inline CheckResult check_dag_gradient(int instances = 10, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index p = 3 + t % 4;
    const Matrix w = selfcheck::dense_offdiagonal(p, rng);
    const Vector analytic = dag_penalty_gradient(w).reshaped();
    const Vector numeric = selfcheck::central_difference(
        [p](const Vector& v) { return dag_penalty(Matrix(v.reshaped(p, p))); }, w.reshaped());
    worst = std::max(worst, selfcheck::relative_error(analytic, numeric));
  }
  return {"dag_penalty_gradient", worst < 1e-4, selfcheck::describe_error(worst)};
}

inline CheckResult check_sem_gradient(int instances = 10, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index p = 3 + t % 4;
    Matrix x(20, p);
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < p; ++j) x(i, j) = n(rng);
    const Matrix w = selfcheck::dense_offdiagonal(p, rng);
    const Vector analytic = sem_loss_gradient(x, w).reshaped();
    const Vector numeric = selfcheck::central_difference(
        [&x, p](const Vector& v) { return sem_loss(x, Matrix(v.reshaped(p, p))); }, w.reshaped());
    worst = std::max(worst, selfcheck::relative_error(analytic, numeric));
  }
  return {"sem_loss_gradient", worst < 1e-4, selfcheck::describe_error(worst)};
}

inline CheckResult check_objective_gradient(int instances = 8, std::uint64_t seed = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index p = 3 + t % 3;
    const Index m = 2;
    const Index k = 1 + 2 * (t % 2);
    TrainConfig cfg;
    cfg.archetypes = static_cast<int>(k);
    cfg.encoder = t % 4 < 2 ? EncoderKind::linear : EncoderKind::feedforward;
    cfg.hidden = 4;
    MixtureModel model = initialize_model(p, m, cfg, rng);
    for (auto& w : model.dict.archetypes) w = selfcheck::dense_offdiagonal(p, rng);
    Matrix x(6, p);
    Matrix c(6, m);
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < p; ++j) x(i, j) = n(rng);
      for (Index j = 0; j < m; ++j) c(i, j) = n(rng);
    }
    const PenaltyWeights weights{1.0, 0.01, 1.0};
    MixtureGradient grad;
    evaluate_objective(model, x, c, weights, Reduction::sum, &grad);
    MixtureModel probe = model;
    const Vector numeric = selfcheck::central_difference(
        [&](const Vector& v) {
          assign(probe, v);
          return evaluate_objective(probe, x, c, weights, Reduction::sum).total();
        },
        flatten(model));
    worst = std::max(worst, selfcheck::relative_error(flatten(grad), numeric));
  }
  return {"objective_gradient", worst < 1e-4, selfcheck::describe_error(worst)};
}

inline std::vector<CheckResult> run_self_checks() {
  return {check_acyclicity_oracle(), check_matrix_exponential(), check_dag_gradient(), check_sem_gradient(),
          check_objective_gradient()};
}

}  // namespace notmad
