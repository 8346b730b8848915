#pragma once

// Ground-truth generator: archetypes sharing one topological order, contexts,
// softmax (or one-hot) mixing, and one SEM draw per sample.

#include "notmad/core.hpp"
#include "notmad/dag.hpp"
#include "notmad/mixture.hpp"
#include "notmad/sem.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace notmad {

enum class MixingKind { one_hot, simplex_smooth };

inline std::string to_string(MixingKind kind) { return kind == MixingKind::one_hot ? "one-hot" : "simplex-smooth"; }

inline MixingKind mixing_kind_from_string(const std::string& s) {
  if (s == "one-hot" || s == "one_hot") return MixingKind::one_hot;
  if (s == "simplex-smooth" || s == "simplex_smooth") return MixingKind::simplex_smooth;
  throw InvalidInput("unknown mixing kind '" + s + "'");
}

struct SynthSpec {
  int p = 10;
  int m = 4;
  int k_true = 3;
  int n_train = 2000;
  int n_test = 500;
  double edge_density = 0.25;  // probability of each order-respecting pair
  double weight_low = 0.5;     // |weight| ~ U[low, high], random sign
  double weight_high = 2.0;
  double noise_scale = 1.0;
  MixingKind mixing = MixingKind::simplex_smooth;
  double mixing_scale = 1.0;  // std of the entries of the mixing matrix
  std::uint64_t seed = 0;

  void validate() const {
    require(p >= 1 && m >= 1 && k_true >= 1 && n_train >= 1 && n_test >= 1, "SynthSpec: counts must be >= 1");
    require(edge_density > 0.0 && edge_density < 1.0, "SynthSpec: edge_density must lie in (0, 1)");
    require(weight_low >= 0.0 && weight_high >= weight_low && weight_high > 0.0, "SynthSpec: bad weight range");
    require(noise_scale > 0.0, "SynthSpec: noise_scale must be > 0");
    require(mixing_scale >= 0.0, "SynthSpec: mixing_scale must be >= 0");
  }
};

struct SynthTruth {
  ArchetypeDictionary archetypes;
  Matrix mixing;               // K x m
  std::vector<Index> order;    // shared topological order
  Matrix z_train;              // n_train x K
  Matrix z_test;               // n_test x K
  std::vector<Matrix> train_networks;
  std::vector<Matrix> test_networks;
  Dataset train;
  Dataset test;
};

/// Subtype weights for one context under the given mixing rule.
inline Vector true_subtype_weights(const Matrix& mixing, const Vector& c, MixingKind kind) {
  const Vector logits = mixing * c;
  if (kind == MixingKind::simplex_smooth) return softmax(logits);
  Index best = 0;
  logits.maxCoeff(&best);
  return Vector::Unit(logits.size(), best);
}

namespace detail {

template <class Rng>
void draw_split(const SynthSpec& spec, const SynthTruth& truth, Index n, Rng& rng, Dataset& data, Matrix& z,
                std::vector<Matrix>& networks) {
  std::normal_distribution<double> standard(0.0, 1.0);
  data.C.resize(n, spec.m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < spec.m; ++j) data.C(i, j) = standard(rng);
  z.resize(n, spec.k_true);
  data.X.resize(n, spec.p);
  data.groups.emplace();
  networks.clear();
  networks.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Vector zi = true_subtype_weights(truth.mixing, data.C.row(i).transpose(), spec.mixing);
    z.row(i) = zi.transpose();
    Index label = 0;
    zi.maxCoeff(&label);
    data.groups->push_back(static_cast<int>(label));
    networks.push_back(generate_graph(truth.archetypes, zi));
  }
  for (Index i = 0; i < n; ++i)
    data.X.row(i) = sample_sem_row(networks[static_cast<std::size_t>(i)], truth.order, spec.noise_scale, rng);
}

}  // namespace detail

inline SynthTruth generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthTruth truth;

  truth.order.resize(static_cast<std::size_t>(spec.p));
  std::iota(truth.order.begin(), truth.order.end(), Index{0});
  std::shuffle(truth.order.begin(), truth.order.end(), rng);

  std::bernoulli_distribution edge(spec.edge_density);
  std::bernoulli_distribution negative(0.5);
  std::uniform_real_distribution<double> magnitude(spec.weight_low, spec.weight_high);
  for (int k = 0; k < spec.k_true; ++k) {
    Matrix w = Matrix::Zero(spec.p, spec.p);
    for (int a = 0; a < spec.p; ++a)
      for (int b = a + 1; b < spec.p; ++b) {
        if (!edge(rng)) continue;
        const double v = magnitude(rng);
        w(truth.order[static_cast<std::size_t>(a)], truth.order[static_cast<std::size_t>(b)]) =
            negative(rng) ? -v : v;
      }
    truth.archetypes.archetypes.push_back(std::move(w));
  }

  std::normal_distribution<double> mix(0.0, spec.mixing_scale);
  truth.mixing.resize(spec.k_true, spec.m);
  for (int k = 0; k < spec.k_true; ++k)
    for (int j = 0; j < spec.m; ++j) truth.mixing(k, j) = spec.mixing_scale > 0.0 ? mix(rng) : 0.0;

  detail::draw_split(spec, truth, spec.n_train, rng, truth.train, truth.z_train, truth.train_networks);
  detail::draw_split(spec, truth, spec.n_test, rng, truth.test, truth.z_test, truth.test_networks);
  return truth;
}

}  // namespace notmad
