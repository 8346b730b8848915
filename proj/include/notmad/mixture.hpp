#pragma once

// Context-to-network generator: W(c) = sum_k softmax(f(c))_k * (W_k o (1 - I)).

#include "notmad/core.hpp"
#include "notmad/dag.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace notmad {

enum class EncoderKind { linear, feedforward };

inline std::string to_string(EncoderKind kind) { return kind == EncoderKind::linear ? "linear" : "feedforward"; }

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "linear") return EncoderKind::linear;
  if (s == "feedforward" || s == "feed-forward") return EncoderKind::feedforward;
  throw InvalidInput("unknown encoder kind '" + s + "'");
}

/// Ordered list of K archetype graphs. Diagonals are held at exactly zero.
struct ArchetypeDictionary {
  std::vector<Matrix> archetypes;

  Index count() const noexcept { return static_cast<Index>(archetypes.size()); }
  Index nodes() const noexcept { return archetypes.empty() ? 0 : archetypes.front().rows(); }

  void validate() const {
    require(!archetypes.empty(), "ArchetypeDictionary: K must be >= 1");
    const Index p = nodes();
    for (const auto& w : archetypes) {
      require(w.rows() == p && w.cols() == p, "ArchetypeDictionary: inconsistent archetype sizes");
      require_finite(w, "ArchetypeDictionary");
      for (Index i = 0; i < p; ++i) require(w(i, i) == 0.0, "ArchetypeDictionary: non-zero diagonal");
    }
  }

  /// Random sparse initialization: N(0, scale^2) entries kept with probability `keep`.
  template <class Rng>
  static ArchetypeDictionary random_sparse(Index k, Index p, Rng& rng, double scale = 0.1, double keep = 0.3) {
    std::normal_distribution<double> value(0.0, scale);
    std::bernoulli_distribution mask(keep);
    ArchetypeDictionary dict;
    for (Index a = 0; a < k; ++a) {
      Matrix w = Matrix::Zero(p, p);
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) {
          const double v = value(rng);
          if (mask(rng) && i != j) w(i, j) = v;
        }
      dict.archetypes.push_back(std::move(w));
    }
    return dict;
  }
};

/// Maps a context vector (m) to K pre-softmax logits.
///
/// Parameters are stored as a flat list of matrices so that gradients can be
/// expressed in the same shape:
///   linear:      [A (K x m), b (K x 1)]                 logits = A c + b
///   feedforward: [A1 (H x m), b1 (H x 1), A2 (K x H), b2 (K x 1)]
///                logits = A2 tanh(A1 c + b1) + b2
class ContextEncoder {
 public:
  ContextEncoder() = default;

  static ContextEncoder linear(Index m, Index k) {
    ContextEncoder e;
    e.kind_ = EncoderKind::linear;
    e.m_ = m;
    e.k_ = k;
    e.params_ = {Matrix::Zero(k, m), Matrix::Zero(k, 1)};
    return e;
  }

  static ContextEncoder feedforward(Index m, Index k, Index hidden) {
    require(hidden >= 1, "ContextEncoder: hidden width must be >= 1");
    ContextEncoder e;
    e.kind_ = EncoderKind::feedforward;
    e.m_ = m;
    e.k_ = k;
    e.hidden_ = hidden;
    e.params_ = {Matrix::Zero(hidden, m), Matrix::Zero(hidden, 1), Matrix::Zero(k, hidden), Matrix::Zero(k, 1)};
    return e;
  }

  static ContextEncoder make(EncoderKind kind, Index m, Index k, Index hidden) {
    return kind == EncoderKind::linear ? linear(m, k) : feedforward(m, k, hidden);
  }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  template <class Rng>
  void initialize(Rng& rng) {
    for (std::size_t b = 0; b < params_.size(); b += 2) {
      Matrix& weight = params_[b];
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, weight.cols())));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Index i = 0; i < weight.rows(); ++i)
        for (Index j = 0; j < weight.cols(); ++j) weight(i, j) = u(rng);
      params_[b + 1].setZero();
    }
  }

  EncoderKind kind() const noexcept { return kind_; }
  Index input_dim() const noexcept { return m_; }
  Index output_dim() const noexcept { return k_; }
  Index hidden_width() const noexcept { return hidden_; }

  const std::vector<Matrix>& parameters() const noexcept { return params_; }
  std::vector<Matrix>& parameters() noexcept { return params_; }

  void validate() const {
    require(k_ >= 1, "ContextEncoder: K must be >= 1");
    const std::size_t blocks = kind_ == EncoderKind::linear ? 2 : 4;
    require(params_.size() == blocks, "ContextEncoder: wrong number of parameter blocks");
    for (const auto& p : params_) require_finite(p, "ContextEncoder");
    const Index out_rows = kind_ == EncoderKind::linear ? params_[0].rows() : params_[2].rows();
    require(out_rows == k_, "ContextEncoder: output dimension differs from K");
  }

  Vector logits(const Vector& c) const {
    check_context(c);
    if (kind_ == EncoderKind::linear) return params_[0] * c + params_[1].col(0);
    const Vector h = (params_[0] * c + params_[1].col(0)).array().tanh().matrix();
    return params_[2] * h + params_[3].col(0);
  }

  /// Gradient of a scalar with respect to every parameter block, given its
  /// gradient with respect to the logits.
  std::vector<Matrix> backward(const Vector& c, const Vector& d_logits) const {
    check_context(c);
    std::vector<Matrix> grads;
    if (kind_ == EncoderKind::linear) {
      grads.push_back(d_logits * c.transpose());
      grads.push_back(d_logits);
      return grads;
    }
    const Vector h = (params_[0] * c + params_[1].col(0)).array().tanh().matrix();
    const Vector d_h = params_[2].transpose() * d_logits;
    const Vector d_pre = d_h.cwiseProduct((1.0 - h.array().square()).matrix());
    grads.push_back(d_pre * c.transpose());
    grads.push_back(d_pre);
    grads.push_back(d_logits * h.transpose());
    grads.push_back(d_logits);
    return grads;
  }

 private:
  void check_context(const Vector& c) const {
    require(c.size() == m_, "ContextEncoder: context has dimension " + std::to_string(c.size()) + ", expected " +
                                std::to_string(m_));
    require(c.allFinite(), "ContextEncoder: non-finite context");
  }

  EncoderKind kind_ = EncoderKind::linear;
  Index m_ = 0;
  Index k_ = 0;
  Index hidden_ = 0;
  std::vector<Matrix> params_;
};

/// Max-shifted softmax.
inline Vector softmax(const Vector& logits) {
  require(logits.size() >= 1, "softmax: empty input");
  const Vector shifted = (logits.array() - logits.maxCoeff()).matrix();
  Vector e = shifted.array().exp().matrix();
  return e / e.sum();
}

/// z = softmax(f(c)); a point on the probability simplex.
inline Vector encode(const ContextEncoder& encoder, const Vector& c) { return softmax(encoder.logits(c)); }

/// W = sum_k z_k (W_k o (1 - I)). The output diagonal is exactly zero.
inline Matrix generate_graph(const ArchetypeDictionary& dict, const Vector& z) {
  require(z.size() == dict.count(), "generate_graph: got " + std::to_string(z.size()) + " weights for " +
                                        std::to_string(dict.count()) + " archetypes");
  const Index p = dict.nodes();
  Matrix w = Matrix::Zero(p, p);
  for (Index k = 0; k < dict.count(); ++k) w += z(k) * dict.archetypes[static_cast<std::size_t>(k)];
  w.diagonal().setZero();
  return w;
}

/// Archetype dictionary plus context encoder: the full trainable state.
struct MixtureModel {
  ArchetypeDictionary dict;
  ContextEncoder encoder;

  Index nodes() const noexcept { return dict.nodes(); }
  Index context_dim() const noexcept { return encoder.input_dim(); }
  Index archetype_count() const noexcept { return dict.count(); }

  void validate() const {
    dict.validate();
    encoder.validate();
    require(encoder.output_dim() == dict.count(), "MixtureModel: encoder output dimension differs from K");
  }

  Vector subtype_weights(const Vector& c) const { return encode(encoder, c); }
  Matrix network(const Vector& c) const { return generate_graph(dict, subtype_weights(c)); }
};

/// Gradients in the shape of MixtureModel's parameters.
struct MixtureGradient {
  std::vector<Matrix> archetypes;
  std::vector<Matrix> encoder;

  static MixtureGradient zeros_like(const MixtureModel& model) {
    MixtureGradient g;
    for (const auto& w : model.dict.archetypes) g.archetypes.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& p : model.encoder.parameters()) g.encoder.push_back(Matrix::Zero(p.rows(), p.cols()));
    return g;
  }

  MixtureGradient& operator+=(const MixtureGradient& other) {
    for (std::size_t k = 0; k < archetypes.size(); ++k) archetypes[k] += other.archetypes[k];
    for (std::size_t b = 0; b < encoder.size(); ++b) encoder[b] += other.encoder[b];
    return *this;
  }

  MixtureGradient& operator*=(double s) {
    for (auto& a : archetypes) a *= s;
    for (auto& e : encoder) e *= s;
    return *this;
  }
};

/// Back-propagates dL/dW for the network generated at context c.
///
/// dL/dW_k = z_k (dL/dW o (1 - I)); dL/dz_k = <dL/dW, W_k o (1 - I)>;
/// the softmax Jacobian diag(z) - z z^T then feeds the encoder.
inline MixtureGradient backward(const MixtureModel& model, const Vector& c, const Matrix& dl_dw) {
  const Index p = model.nodes();
  require(dl_dw.rows() == p && dl_dw.cols() == p, "backward: dL/dW has the wrong shape");
  require_finite(dl_dw, "backward: dL/dW");

  const Vector z = model.subtype_weights(c);
  Matrix masked = dl_dw;
  masked.diagonal().setZero();

  MixtureGradient g;
  const Index k_count = model.archetype_count();
  Vector dz(k_count);
  for (Index k = 0; k < k_count; ++k) {
    const Matrix& wk = model.dict.archetypes[static_cast<std::size_t>(k)];
    g.archetypes.push_back(z(k) * masked);
    dz(k) = masked.cwiseProduct(wk).sum();  // wk's diagonal is zero, masked's too
  }
  const Vector d_logits = z.cwiseProduct((dz.array() - z.dot(dz)).matrix());
  g.encoder = model.encoder.backward(c, d_logits);
  return g;
}

// Flattening, for optimizers and finite-difference checks. Order: archetypes
// (column-major), then encoder blocks.

inline Index parameter_count(const MixtureModel& model) {
  Index n = 0;
  for (const auto& w : model.dict.archetypes) n += w.size();
  for (const auto& b : model.encoder.parameters()) n += b.size();
  return n;
}

inline Vector flatten(const std::vector<Matrix>& archetypes, const std::vector<Matrix>& encoder) {
  Index n = 0;
  for (const auto& w : archetypes) n += w.size();
  for (const auto& b : encoder) n += b.size();
  Vector out(n);
  Index at = 0;
  for (const auto* list : {&archetypes, &encoder})
    for (const auto& block : *list) {
      out.segment(at, block.size()) = block.reshaped();
      at += block.size();
    }
  return out;
}

inline Vector flatten(const MixtureModel& model) {
  return flatten(model.dict.archetypes, model.encoder.parameters());
}

inline Vector flatten(const MixtureGradient& g) { return flatten(g.archetypes, g.encoder); }

inline void assign(MixtureModel& model, const Vector& flat) {
  require(flat.size() == parameter_count(model), "assign: parameter vector has the wrong length");
  Index at = 0;
  for (auto* list : {&model.dict.archetypes, &model.encoder.parameters()})
    for (auto& block : *list) {
      block.reshaped() = flat.segment(at, block.size());
      at += block.size();
    }
  for (auto& w : model.dict.archetypes) w.diagonal().setZero();
}

}  // namespace notmad
