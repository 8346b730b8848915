#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace notmad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an optimizer produces a non-finite loss term.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int epoch, std::string term)
      : std::runtime_error(what), epoch_(epoch), term_(std::move(term)) {}

  int epoch() const noexcept { return epoch_; }
  const std::string& term() const noexcept { return term_; }

 private:
  int epoch_;
  std::string term_;
};

/// Raised by file readers; the message carries the location.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1)
    throw InvalidInput(std::string(what) + ": expected a non-empty square matrix, got " +
                       std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
}

/// Off-diagonal mask (1 - I).
inline Matrix off_diagonal_mask(Index p) {
  Matrix mask = Matrix::Ones(p, p);
  mask.diagonal().setZero();
  return mask;
}

}  // namespace notmad
