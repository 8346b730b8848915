#pragma once

// Smooth acyclicity criterion h(W) = tr(exp(W o W)) - p and its gradient.

#include "notmad/core.hpp"

#include <algorithm>
#include <cmath>

namespace notmad {

namespace detail {

// Taylor order used on the scaled matrix. With ||A / 2^s||_1 <= 0.5 the
// remainder is below 0.5^17 / 17! ~ 2e-20.
inline constexpr int kExpmOrder = 16;
inline constexpr double kExpmScaledNorm = 0.5;

}  // namespace detail

/// Matrix exponential by scaling and squaring around a truncated Taylor core.
inline Matrix matrix_exponential(const Matrix& a) {
  require_square(a, "matrix_exponential");
  require_finite(a, "matrix_exponential");

  const Index p = a.rows();
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > detail::kExpmScaledNorm)
    squarings = static_cast<int>(std::ceil(std::log2(norm / detail::kExpmScaledNorm)));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  // Horner evaluation of sum_{k<=N} A^k / k!.
  Matrix result = Matrix::Identity(p, p);
  for (int k = detail::kExpmOrder; k >= 1; --k) {
    result = Matrix::Identity(p, p) + (scaled * result) / static_cast<double>(k);
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

/// Value and gradient of h evaluated from one exponential.
struct DagPenalty {
  double value = 0.0;
  Matrix gradient;
};

/// h(W) together with (exp(W o W))^T o 2W.
inline DagPenalty dag_penalty_with_gradient(const Matrix& w) {
  require_square(w, "dag penalty");
  require_finite(w, "dag penalty");
  const Matrix e = matrix_exponential(w.cwiseProduct(w));
  DagPenalty out;
  out.value = e.trace() - static_cast<double>(w.rows());
  out.gradient = e.transpose().cwiseProduct(2.0 * w);
  return out;
}

/// h(W) = tr(exp(W o W)) - p. Zero exactly on acyclic supports.
inline double dag_penalty(const Matrix& w) {
  require_square(w, "dag penalty");
  require_finite(w, "dag penalty");
  return matrix_exponential(w.cwiseProduct(w)).trace() - static_cast<double>(w.rows());
}

inline Matrix dag_penalty_gradient(const Matrix& w) { return dag_penalty_with_gradient(w).gradient; }

/// Numeric DAG decision. Structural checks should use is_dag() instead;
/// h underflows for long weak cycles.
inline constexpr double kDagTolerance = 1e-8;

}  // namespace notmad
