#pragma once

// Linear structural equation model X_j = sum_i W_ij X_i + eps_j.

#include "notmad/core.hpp"
#include "notmad/dag.hpp"

#include <optional>
#include <random>
#include <vector>

namespace notmad {

/// Paired observations X (n x p) and contexts C (n x m), optional group labels.
struct Dataset {
  Matrix X;
  Matrix C;
  std::optional<std::vector<int>> groups;

  Index rows() const noexcept { return X.rows(); }
  Index features() const noexcept { return X.cols(); }
  Index context_dim() const noexcept { return C.cols(); }

  void validate() const {
    require(X.rows() >= 1, "Dataset: need at least one row");
    require(X.rows() == C.rows(), "Dataset: X and C row counts differ");
    require_finite(X, "Dataset.X");
    require_finite(C, "Dataset.C");
    if (groups) require(static_cast<Index>(groups->size()) == X.rows(), "Dataset: group label count mismatch");
  }

  /// Rows selected by index, in the given order (duplicates allowed).
  Dataset subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.X.resize(static_cast<Index>(rows.size()), X.cols());
    out.C.resize(static_cast<Index>(rows.size()), C.cols());
    if (groups) out.groups.emplace();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.X.row(static_cast<Index>(r)) = X.row(rows[r]);
      out.C.row(static_cast<Index>(r)) = C.row(rows[r]);
      if (groups) out.groups->push_back((*groups)[static_cast<std::size_t>(rows[r])]);
    }
    return out;
  }
};

/// Draws one observation row from the SEM defined by `w`, given its topological order.
template <class Rng>
Eigen::RowVectorXd sample_sem_row(const Matrix& w, const std::vector<Index>& order, double noise_scale, Rng& rng) {
  const Index p = w.rows();
  std::normal_distribution<double> noise(0.0, noise_scale);
  Eigen::RowVectorXd x(p);
  for (Index j = 0; j < p; ++j) x(j) = noise(rng);
  for (Index j : order) x(j) += x.dot(w.col(j));  // parents precede j, x(j) excluded by zero diagonal
  return x;
}

/// Draws n rows from the linear Gaussian SEM of an acyclic W.
template <class Rng>
Matrix sample_sem(const WeightedGraph& w, Index n, double noise_scale, Rng& rng) {
  require(noise_scale > 0.0, "sample_sem: noise_scale must be > 0");
  require(n >= 0, "sample_sem: negative row count");
  const auto order = topological_order(binarize(w));
  if (!order) throw InvalidInput("sample_sem: W is cyclic");
  Matrix x(n, w.size());
  for (Index r = 0; r < n; ++r) x.row(r) = sample_sem_row(w.weights(), *order, noise_scale, rng);
  return x;
}

inline Matrix sample_sem(const WeightedGraph& w, Index n, double noise_scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_sem(w, n, noise_scale, rng);
}

namespace detail {
inline void check_sem_dims(const Matrix& x, const Matrix& w) {
  require_square(w, "sem");
  require(x.cols() == w.rows(), "sem: X has " + std::to_string(x.cols()) + " columns but W is " +
                                    std::to_string(w.rows()) + "x" + std::to_string(w.rows()));
  require(x.rows() >= 1, "sem: X is empty");
}
}  // namespace detail

/// (1/2n) ||X - XW||_F^2
inline double sem_loss(const Matrix& x, const Matrix& w) {
  detail::check_sem_dims(x, w);
  return 0.5 * (x - x * w).squaredNorm() / static_cast<double>(x.rows());
}

/// -(1/n) X^T (X - XW), including the diagonal entries.
inline Matrix sem_loss_gradient(const Matrix& x, const Matrix& w) {
  detail::check_sem_dims(x, w);
  return -(x.transpose() * (x - x * w)) / static_cast<double>(x.rows());
}

}  // namespace notmad
