#pragma once

// Comparison estimators: population NOTEARS, context-clustered and
// oracle-clustered NOTEARS, and LIONESS sample-specific networks.

#include "notmad/acyclicity.hpp"
#include "notmad/core.hpp"
#include "notmad/dag.hpp"
#include "notmad/parallel.hpp"
#include "notmad/sem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace notmad {

struct NotearsOptions {
  double l1_weight = 0.01;
  // Penalty schedule: rho starts at rho_init and is multiplied by rho_factor
  // when h fails to fall below h_progress * (previous h), by rho_growth
  // otherwise. Stops once h <= h_tolerance or rho exceeds rho_max.
  double rho_init = 1.0;
  double rho_factor = 10.0;
  double rho_growth = 2.0;
  double rho_max = 1e8;
  double h_progress = 0.25;
  double h_tolerance = 1e-8;
  int max_rounds = 30;
  int max_inner_iterations = 3000;
  double inner_tolerance = 1e-7;
  double init_scale = 1e-4;  // std of the random starting point
  double weight_threshold = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline Matrix soft_threshold_offdiag(const Matrix& w, double t) {
  Matrix out = w.unaryExpr([t](double v) { return v > t ? v - t : (v < -t ? v + t : 0.0); });
  out.diagonal().setZero();
  return out;
}

// 0.5 tr((I-W)^T S (I-W)) + rho h(W), S the second-moment matrix.
inline double notears_smooth(const Matrix& s, const Matrix& w, double rho, Matrix* grad) {
  const Index p = w.rows();
  const Matrix resid = Matrix::Identity(p, p) - w;
  const Matrix s_resid = s * resid;
  double value = 0.5 * resid.cwiseProduct(s_resid).sum();
  if (grad) {
    const DagPenalty h = dag_penalty_with_gradient(w);
    value += rho * h.value;
    *grad = -s_resid + rho * h.gradient;
    grad->diagonal().setZero();
  } else {
    value += rho * dag_penalty(w);
  }
  return value;
}

// Proximal gradient with backtracking on the fixed-rho subproblem.
inline Matrix notears_inner(const Matrix& s, Matrix w, double rho, const NotearsOptions& opt, double& step) {
  Matrix grad;
  for (int it = 0; it < opt.max_inner_iterations; ++it) {
    const double f = notears_smooth(s, w, rho, &grad);
    Matrix next;
    for (int tries = 0; tries < 80; ++tries) {
      next = soft_threshold_offdiag(w - step * grad, step * opt.l1_weight);
      const Matrix delta = next - w;
      const double bound = f + grad.cwiseProduct(delta).sum() + delta.squaredNorm() / (2.0 * step);
      // Large trial steps can overflow the exponential; treat those as rejected.
      const double f_next = next.cwiseAbs().maxCoeff() < 1e3 ? notears_smooth(s, next, rho, nullptr) : HUGE_VAL;
      if (f_next <= bound) break;
      step *= 0.5;
    }
    const double change = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    if (change < opt.inner_tolerance) break;
    step *= 1.25;
  }
  return w;
}

}  // namespace detail

/// Unprojected NOTEARS estimate (the continuous optimum before projection).
inline Matrix notears_solve(const Matrix& x, const NotearsOptions& opt = {}) {
  require(x.rows() >= 1, "notears_fit: need at least one row");
  require(x.cols() >= 1, "notears_fit: need at least one column");
  require_finite(x, "notears_fit");
  require(opt.l1_weight >= 0.0 && opt.rho_init > 0.0, "notears_fit: bad options");
  const Index p = x.cols();
  const Matrix s = (x.transpose() * x) / static_cast<double>(x.rows());

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  Matrix w = Matrix::Zero(p, p);
  if (opt.init_scale > 0.0)
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) {
        const double v = opt.init_scale * jitter(rng);
        if (i != j) w(i, j) = v;
      }

  double rho = opt.rho_init;
  double h_prev = std::numeric_limits<double>::infinity();
  double step = 1.0 / std::max(1.0, s.diagonal().maxCoeff());
  for (int round = 0; round < opt.max_rounds; ++round) {
    w = detail::notears_inner(s, std::move(w), rho, opt, step);
    if (!w.allFinite())
      throw TrainingDiverged("notears_fit diverged in round " + std::to_string(round), round, "W");
    const double h = dag_penalty(w);
    if (h <= opt.h_tolerance) break;
    rho *= h > opt.h_progress * h_prev ? opt.rho_factor : opt.rho_growth;
    if (rho > opt.rho_max) break;
    h_prev = h;
    step = std::min(step, 1.0 / rho);
  }
  return w;
}

/// Population DAG: minimizes sem_loss + l1 ||W||_1 + rho h(W) under an
/// increasing rho schedule, then projects onto a DAG.
inline WeightedGraph notears_fit(const Matrix& x, const NotearsOptions& opt = {}) {
  return finalize_network(notears_solve(x, opt), true, opt.weight_threshold);
}

// ---------------------------------------------------------------------------
// k-means on contexts

struct KMeansResult {
  Matrix centers;           // k x m
  std::vector<int> labels;  // per row
  double inertia = 0.0;
};

namespace detail {

inline Index nearest_row(const Matrix& centers, const Eigen::RowVectorXd& x, double* dist = nullptr) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < centers.rows(); ++k) {
    const double d = (centers.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

template <class Rng>
KMeansResult kmeans_once(const Matrix& points, int k, int max_iter, Rng& rng) {
  const Index n = points.rows();
  // k-means++ seeding.
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Vector d2(n);
  for (int c = 1; c < k; ++c) {
    for (Index i = 0; i < n; ++i) {
      double d;
      nearest_row(centers.topRows(c), points.row(i), &d);
      d2(i) = d;
    }
    Index pick = 0;
    if (d2.sum() > 0.0) {
      std::discrete_distribution<Index> choose(d2.data(), d2.data() + n);
      pick = choose(rng);
    } else {
      pick = first(rng);
    }
    centers.row(c) = points.row(pick);
  }

  KMeansResult r;
  r.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int l = static_cast<int>(nearest_row(centers, points.row(i)));
      if (l != r.labels[static_cast<std::size_t>(i)]) {
        r.labels[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  r.centers = centers;
  for (Index i = 0; i < n; ++i)
    r.inertia += (points.row(i) - centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return r;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by inertia.
inline KMeansResult kmeans(const Matrix& points, int k, int restarts = 5, std::uint64_t seed = 0,
                           int max_iter = 300) {
  require(k >= 1, "kmeans: k must be >= 1");
  require(points.rows() >= k, "kmeans: fewer points than clusters");
  require(restarts >= 1, "kmeans: restarts must be >= 1");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult candidate = detail::kmeans_once(points, k, max_iter, rng);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Clustered NOTEARS

struct ClusteredModel {
  Matrix centers;                // clusters x m
  std::vector<int> group_ids;    // label each cluster was built from
  std::vector<WeightedGraph> graphs;
  std::vector<std::string> warnings;

  Index clusters() const noexcept { return static_cast<Index>(graphs.size()); }

  /// Graph of the nearest center.
  const WeightedGraph& predict(const Vector& c) const {
    require(c.size() == centers.cols(), "ClusteredModel: context dimension mismatch");
    return graphs[static_cast<std::size_t>(detail::nearest_row(centers, c.transpose()))];
  }

  /// Graph of a known group label.
  const WeightedGraph& predict_group(int label) const {
    for (std::size_t g = 0; g < group_ids.size(); ++g)
      if (group_ids[g] == label) return graphs[g];
    throw InvalidInput("ClusteredModel: unknown group label " + std::to_string(label));
  }
};

struct ClusteredOptions {
  int n_clusters = 3;
  bool use_oracle_labels = false;
  int restarts = 5;
  std::uint64_t seed = 0;
  NotearsOptions notears;
};

/// Partitions samples (k-means on C, or the dataset's group labels) and fits
/// one population model per part. A k-means cluster left empty causes a refit
/// with one fewer cluster.
inline ClusteredModel clustered_fit(const Dataset& data, const ClusteredOptions& opt) {
  data.validate();
  require(opt.n_clusters >= 1, "clustered_fit: n_clusters must be >= 1");
  ClusteredModel model;
  std::vector<std::vector<Index>> members;

  if (opt.use_oracle_labels) {
    require(data.groups.has_value(), "clustered_fit: oracle labels requested but the dataset has none");
    std::map<int, std::vector<Index>> by_label;
    for (Index i = 0; i < data.rows(); ++i) by_label[(*data.groups)[static_cast<std::size_t>(i)]].push_back(i);
    model.centers.resize(static_cast<Index>(by_label.size()), data.context_dim());
    Index row = 0;
    for (auto& [label, idx] : by_label) {
      model.group_ids.push_back(label);
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(data.context_dim());
      for (Index i : idx) mean += data.C.row(i);
      model.centers.row(row++) = mean / static_cast<double>(idx.size());
      members.push_back(std::move(idx));
    }
  } else {
    int k = opt.n_clusters;
    while (true) {
      const KMeansResult km = kmeans(data.C, k, opt.restarts, opt.seed);
      members.assign(static_cast<std::size_t>(k), {});
      for (Index i = 0; i < data.rows(); ++i) members[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(i)])].push_back(i);
      const bool any_empty = std::any_of(members.begin(), members.end(), [](const auto& m) { return m.empty(); });
      if (!any_empty || k == 1) {
        model.centers = km.centers;
        break;
      }
      model.warnings.push_back("k-means produced an empty cluster with k=" + std::to_string(k) +
                               "; refitting with k=" + std::to_string(k - 1));
      --k;
    }
    for (std::size_t c = 0; c < members.size(); ++c) model.group_ids.push_back(static_cast<int>(c));
  }

  model.graphs.resize(members.size());
  parallel_for(members.size(), [&](std::size_t c) {
    Matrix xc(static_cast<Index>(members[c].size()), data.features());
    for (std::size_t r = 0; r < members[c].size(); ++r) xc.row(static_cast<Index>(r)) = data.X.row(members[c][r]);
    model.graphs[c] = notears_fit(xc, opt.notears);
  });
  return model;
}

// ---------------------------------------------------------------------------
// LIONESS

/// Dense linear network by per-column ridge regression on all other columns:
/// column j of W holds (S_oo + lambda I)^{-1} S_oj with S = X^T X / n.
struct RidgeNetworkFit {
  double lambda = 1e-2;

  Matrix from_moments(const Matrix& gram, double n) const {
    require(n > 0.0, "RidgeNetworkFit: no rows");
    const Index p = gram.rows();
    const Matrix s = gram / n;
    Matrix w = Matrix::Zero(p, p);
    if (p == 1) return w;
    std::vector<Index> others;
    for (Index j = 0; j < p; ++j) {
      others.clear();
      for (Index i = 0; i < p; ++i)
        if (i != j) others.push_back(i);
      const Matrix s_oo = s(others, others) + lambda * Matrix::Identity(p - 1, p - 1);
      const Vector s_oj = s(others, j);
      const Vector beta = s_oo.ldlt().solve(s_oj);
      for (Index r = 0; r < p - 1; ++r) w(others[static_cast<std::size_t>(r)], j) = beta(r);
    }
    return w;
  }

  Matrix operator()(const Matrix& x) const {
    require(x.rows() >= 1, "RidgeNetworkFit: no rows");
    return from_moments(x.transpose() * x, static_cast<double>(x.rows()));
  }
};

/// W_i = n (W_all - W_{-i}) + W_{-i} for an arbitrary estimator `fit`.
template <class Fit>
std::vector<Matrix> lioness_networks(const Matrix& x, const Fit& fit) {
  const Index n = x.rows();
  require(n >= 2, "lioness_networks: need at least two rows");
  const Matrix all = fit(x);
  std::vector<Matrix> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Matrix rest(n - 1, x.cols());
    rest.topRows(static_cast<Index>(i)) = x.topRows(static_cast<Index>(i));
    rest.bottomRows(n - 1 - static_cast<Index>(i)) = x.bottomRows(n - 1 - static_cast<Index>(i));
    const Matrix loo = fit(rest);
    out[i] = static_cast<double>(n) * (all - loo) + loo;
  });
  return out;
}

/// Ridge specialization: leave-one-out fits come from rank-one Gram downdates.
inline std::vector<Matrix> lioness_networks(const Matrix& x, const RidgeNetworkFit& fit) {
  const Index n = x.rows();
  require(n >= 2, "lioness_networks: need at least two rows");
  const Matrix gram = x.transpose() * x;
  const Matrix all = fit.from_moments(gram, static_cast<double>(n));
  std::vector<Matrix> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const Eigen::RowVectorXd xi = x.row(static_cast<Index>(i));
    const Matrix loo = fit.from_moments(gram - xi.transpose() * xi, static_cast<double>(n - 1));
    out[i] = static_cast<double>(n) * (all - loo) + loo;
  });
  return out;
}

/// LIONESS networks for rows outside the training set: each test row is
/// appended to the training data and differenced against the training fit.
inline std::vector<Matrix> lioness_heldout(const Matrix& x_train, const Matrix& x_test, const RidgeNetworkFit& fit) {
  require(x_train.rows() >= 1, "lioness_heldout: empty training set");
  require(x_train.cols() == x_test.cols(), "lioness_heldout: column mismatch");
  const double n = static_cast<double>(x_train.rows());
  const Matrix gram = x_train.transpose() * x_train;
  const Matrix base = fit.from_moments(gram, n);
  std::vector<Matrix> out(static_cast<std::size_t>(x_test.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    const Eigen::RowVectorXd xi = x_test.row(static_cast<Index>(i));
    const Matrix with = fit.from_moments(gram + xi.transpose() * xi, n + 1.0);
    out[i] = (n + 1.0) * (with - base) + base;
  });
  return out;
}

}  // namespace notmad
