#pragma once

// Exact structural algorithms on directed graphs given as p x p matrices.
// Entry (i, j) is the edge i -> j, matching the SEM convention X_j = sum_i W_ij X_i.

#include "notmad/core.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace notmad {

/// Weighted adjacency matrix with an exactly-zero diagonal.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  explicit WeightedGraph(Matrix weights) : weights_(std::move(weights)) {
    require_square(weights_, "WeightedGraph");
    require_finite(weights_, "WeightedGraph");
    for (Index i = 0; i < weights_.rows(); ++i)
      require(weights_(i, i) == 0.0, "WeightedGraph: diagonal entry " + std::to_string(i) + " is non-zero");
  }

  /// Builds a graph from an arbitrary square matrix by zeroing its diagonal.
  static WeightedGraph clamped(Matrix weights) {
    require_square(weights, "WeightedGraph");
    weights.diagonal().setZero();
    return WeightedGraph(std::move(weights));
  }

  static WeightedGraph empty(Index p) { return WeightedGraph(Matrix::Zero(p, p)); }

  Index size() const noexcept { return weights_.rows(); }
  const Matrix& weights() const noexcept { return weights_; }
  double operator()(Index i, Index j) const { return weights_(i, j); }

  friend bool operator==(const WeightedGraph& a, const WeightedGraph& b) {
    return a.weights_.rows() == b.weights_.rows() && a.weights_ == b.weights_;
  }

 private:
  Matrix weights_;
};

/// Binarized structure A(W): edge i -> j present iff edges(i, j).
class BinaryStructure {
 public:
  BinaryStructure() = default;
  explicit BinaryStructure(Index p) : p_(p), edges_(static_cast<std::size_t>(p * p), 0) {
    require(p >= 1, "BinaryStructure: p must be >= 1");
  }

  Index size() const noexcept { return p_; }

  bool operator()(Index i, Index j) const { return edges_[static_cast<std::size_t>(i * p_ + j)] != 0; }

  void set(Index i, Index j, bool present) {
    require(i != j || !present, "BinaryStructure: self-loops are not allowed");
    edges_[static_cast<std::size_t>(i * p_ + j)] = present ? 1 : 0;
  }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(edges_.begin(), edges_.end(), 1));
  }

  /// Weight-1 matrix of the structure.
  Matrix to_matrix() const {
    Matrix m = Matrix::Zero(p_, p_);
    for (Index i = 0; i < p_; ++i)
      for (Index j = 0; j < p_; ++j)
        if ((*this)(i, j)) m(i, j) = 1.0;
    return m;
  }

  friend bool operator==(const BinaryStructure&, const BinaryStructure&) = default;

 private:
  Index p_ = 0;
  std::vector<char> edges_;
};

/// Edge i -> j iff |W_ij| > threshold. The diagonal is never an edge.
inline BinaryStructure binarize(const Matrix& w, double threshold = 0.0) {
  require_square(w, "binarize");
  require(threshold >= 0.0, "binarize: threshold must be >= 0");
  BinaryStructure a(w.rows());
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (i != j && std::abs(w(i, j)) > threshold) a.set(i, j, true);
  return a;
}

inline BinaryStructure binarize(const WeightedGraph& w, double threshold = 0.0) {
  return binarize(w.weights(), threshold);
}

/// Kahn's algorithm. Returns the order, or nullopt when a cycle exists.
inline std::optional<std::vector<Index>> topological_order(const BinaryStructure& a) {
  const Index p = a.size();
  std::vector<Index> indegree(static_cast<std::size_t>(p), 0);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (a(i, j)) ++indegree[static_cast<std::size_t>(j)];

  std::vector<Index> ready;
  for (Index j = p - 1; j >= 0; --j)
    if (indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);

  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(p));
  while (!ready.empty()) {
    const Index i = ready.back();
    ready.pop_back();
    order.push_back(i);
    for (Index j = p - 1; j >= 0; --j) {
      if (a(i, j) && --indegree[static_cast<std::size_t>(j)] == 0) ready.push_back(j);
    }
  }
  if (static_cast<Index>(order.size()) != p) return std::nullopt;
  return order;
}

inline bool is_dag(const BinaryStructure& a) { return topological_order(a).has_value(); }

namespace detail {

// True if `to` is reachable from `from` along edges of `a`.
inline bool reachable(const BinaryStructure& a, Index from, Index to) {
  const Index p = a.size();
  std::vector<char> seen(static_cast<std::size_t>(p), 0);
  std::vector<Index> stack{from};
  seen[static_cast<std::size_t>(from)] = 1;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    if (u == to) return true;
    for (Index v = 0; v < p; ++v) {
      if (a(u, v) && !seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  return false;
}

struct EdgeEntry {
  double magnitude;
  Index row;
  Index col;
};

}  // namespace detail

/// Projects W onto a DAG.
///
/// First finds, by binary search over the distinct edge magnitudes, the
/// smallest threshold t for which {|W| > t} is acyclic. Edges removed by that
/// threshold are then offered back in decreasing magnitude (ties broken by
/// row, then column) and kept whenever they do not close a cycle. Retained
/// entries keep their exact value.
inline WeightedGraph project_to_dag(const WeightedGraph& w) {
  const Matrix& weights = w.weights();
  const Index p = w.size();

  std::vector<double> magnitudes;
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (i != j && weights(i, j) != 0.0) magnitudes.push_back(std::abs(weights(i, j)));
  std::sort(magnitudes.begin(), magnitudes.end());
  magnitudes.erase(std::unique(magnitudes.begin(), magnitudes.end()), magnitudes.end());

  // Candidate thresholds: 0, m_1, ..., m_E. The last always yields the empty graph.
  std::vector<double> thresholds{0.0};
  thresholds.insert(thresholds.end(), magnitudes.begin(), magnitudes.end());
  std::size_t lo = 0;
  std::size_t hi = thresholds.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (is_dag(binarize(weights, thresholds[mid])))
      hi = mid;
    else
      lo = mid + 1;
  }
  const double t = thresholds[lo];

  BinaryStructure kept = binarize(weights, t);
  std::vector<detail::EdgeEntry> excluded;
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (i != j && weights(i, j) != 0.0 && !kept(i, j)) excluded.push_back({std::abs(weights(i, j)), i, j});
  std::stable_sort(excluded.begin(), excluded.end(), [](const auto& a, const auto& b) {
    if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  for (const auto& e : excluded) {
    // i -> j closes a cycle iff i is already reachable from j.
    if (!detail::reachable(kept, e.col, e.row)) kept.set(e.row, e.col, true);
  }

  Matrix out = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (kept(i, j)) out(i, j) = weights(i, j);
  return WeightedGraph(std::move(out));
}

/// Zeroes entries with |w| <= threshold and optionally projects onto a DAG.
inline WeightedGraph finalize_network(Matrix w, bool project, double threshold) {
  require(threshold >= 0.0, "finalize_network: threshold must be >= 0");
  w = w.unaryExpr([threshold](double v) { return std::abs(v) <= threshold ? 0.0 : v; });
  WeightedGraph g = WeightedGraph::clamped(std::move(w));
  return project ? project_to_dag(g) : g;
}

/// Outcome of sampling the archetype-compatibility implication
/// A(W1) + A(W2) acyclic  =>  a W1 + W2 acyclic for every a.
struct CompatibilityResult {
  bool union_acyclic = false;  // precondition of the implication
  int trials = 0;
  int acyclic_mixtures = 0;

  /// True when the implication held on every trial, or vacuously.
  bool holds() const noexcept { return !union_acyclic || acyclic_mixtures == trials; }
  explicit operator bool() const noexcept { return holds(); }
};

template <class Rng>
CompatibilityResult mixture_compatibility_check(const WeightedGraph& w1, const WeightedGraph& w2, int trials,
                                                Rng& rng) {
  require(w1.size() == w2.size(), "mixture_compatibility_check: dimension mismatch");
  require(trials >= 1, "mixture_compatibility_check: trials must be >= 1");
  CompatibilityResult result;
  result.union_acyclic = is_dag(binarize(Matrix(w1.weights().cwiseAbs() + w2.weights().cwiseAbs())));
  if (!result.union_acyclic) return result;
  std::uniform_real_distribution<double> coef(-10.0, 10.0);
  for (int t = 0; t < trials; ++t) {
    const double a = coef(rng);
    ++result.trials;
    if (is_dag(binarize(Matrix(a * w1.weights() + w2.weights())))) ++result.acyclic_mixtures;
  }
  return result;
}

inline CompatibilityResult mixture_compatibility_check(const WeightedGraph& w1, const WeightedGraph& w2, int trials,
                                                       std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  return mixture_compatibility_check(w1, w2, trials, rng);
}

}  // namespace notmad
