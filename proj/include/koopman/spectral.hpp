#pragma once

// Eigendecomposition of the linearization with biorthogonal left vectors,
// stability classification and the spectral-gap conditions that decide which
// path-integral mode applies to an eigenvalue.

#include "koopman/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace koopman {

/// Eigenvalues sorted by descending real part (positive imaginary part first
/// within a conjugate pair). Columns of V are right vectors, rows of W are
/// left vectors with W V = I and w_i^T A = lambda_i w_i^T (no conjugation).
struct Spectrum {
  CVec eigenvalues;
  CMat V;
  CMat W;

  [[nodiscard]] Eigen::Index size() const noexcept { return eigenvalues.size(); }
  [[nodiscard]] CVec left(Eigen::Index i) const { return W.row(i).transpose(); }
  [[nodiscard]] CVec right(Eigen::Index i) const { return V.col(i); }
};

enum class StabilityClass : std::uint8_t { Stable, AntiStable, Saddle };

enum class EvaluationMode : std::uint8_t { StableForward, AntiStableReverse, SaddleForward, SaddleReverse };

inline std::string_view to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::Stable: return "Stable";
    case StabilityClass::AntiStable: return "AntiStable";
    case StabilityClass::Saddle: return "Saddle";
  }
  return "?";
}

inline std::string_view to_string(EvaluationMode m) {
  switch (m) {
    case EvaluationMode::StableForward: return "StableForward";
    case EvaluationMode::AntiStableReverse: return "AntiStableReverse";
    case EvaluationMode::SaddleForward: return "SaddleForward";
    case EvaluationMode::SaddleReverse: return "SaddleReverse";
  }
  return "?";
}

inline EvaluationMode evaluation_mode_from_string(std::string_view s) {
  if (s == "StableForward") return EvaluationMode::StableForward;
  if (s == "AntiStableReverse") return EvaluationMode::AntiStableReverse;
  if (s == "SaddleForward") return EvaluationMode::SaddleForward;
  if (s == "SaddleReverse") return EvaluationMode::SaddleReverse;
  throw FormatError("unknown evaluation mode '" + std::string(s) + "'");
}

[[nodiscard]] constexpr Direction direction_of(EvaluationMode m) noexcept {
  return (m == EvaluationMode::StableForward || m == EvaluationMode::SaddleForward) ? Direction::Forward
                                                                                      : Direction::Reversed;
}

struct ConditionReport {
  EvaluationMode mode = EvaluationMode::StableForward;
  double condition_value = 0.0;
  bool satisfied = false;
  cplx lambda_max{0.0, 0.0};
  // Saddle modes: the boundedness hypothesis on h along trajectories cannot be
  // checked a priori; it is judged per point from the integration status.
  bool boundedness_caveat = false;
};

inline constexpr double kDefectiveCondition = 1e12;

inline Spectrum eig(const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("eig: matrix is not square");
  if (!A.allFinite()) throw DefectiveMatrix("eig: matrix has non-finite entries");
  const Eigen::Index n = A.rows();

  Eigen::EigenSolver<Mat> solver(A, true);
  if (solver.info() != Eigen::Success) throw DefectiveMatrix("eig: QR iteration failed");
  const CVec vals = solver.eigenvalues();
  const CMat vecs = solver.eigenvectors();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (vals[a].real() != vals[b].real()) return vals[a].real() > vals[b].real();
    return vals[a].imag() > vals[b].imag();
  });

  Spectrum s;
  s.eigenvalues.resize(n);
  s.V.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    s.eigenvalues[k] = vals[order[static_cast<std::size_t>(k)]];
    s.V.col(k) = vecs.col(order[static_cast<std::size_t>(k)]);
  }

  Eigen::JacobiSVD<CMat> svd(s.V);
  const auto& sv = svd.singularValues();
  const double cond = sv[n - 1] > 0.0 ? sv[0] / sv[n - 1] : std::numeric_limits<double>::infinity();
  if (!(cond <= kDefectiveCondition)) {
    throw DefectiveMatrix("eig: eigenvector matrix is numerically singular (cond " + std::to_string(cond) + ")");
  }
  s.W = s.V.inverse();

  // Fix the free scalar per pair: |w_i| = 1, largest component of w_i real
  // positive. v_i is rescaled inversely so W V = I is kept.
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index kmax = 0;
    for (Eigen::Index k = 1; k < n; ++k) {
      if (std::abs(s.W(i, k)) > std::abs(s.W(i, kmax))) kmax = k;
    }
    const cplx pivot = s.W(i, kmax);
    const double norm = s.W.row(i).norm();
    const cplx scale = std::conj(pivot) / (std::abs(pivot) * norm);
    s.W.row(i) *= scale;
    s.V.col(i) /= scale;
    s.W(i, kmax) = cplx{s.W(i, kmax).real(), 0.0};
  }

  // Make conjugate partners exact conjugates of each other.
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const cplx a = s.eigenvalues[i];
    const cplx b = s.eigenvalues[i + 1];
    if (a.imag() > 0.0 && std::abs(b - std::conj(a)) <= 1e-12 * std::max(1.0, std::abs(a))) {
      s.eigenvalues[i + 1] = std::conj(a);
      s.W.row(i + 1) = s.W.row(i).conjugate();
      s.V.col(i + 1) = s.V.col(i).conjugate();
      ++i;
    }
  }
  return s;
}

[[nodiscard]] inline bool hyperbolicity(const Spectrum& s, double tol = 1e-8) {
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(std::abs(s.eigenvalues[i].real()) > tol)) return false;
  }
  return true;
}

inline StabilityClass classify(const Spectrum& s, double tol = 1e-8) {
  if (!hyperbolicity(s, tol)) throw NotHyperbolic("equilibrium is not hyperbolic");
  bool any_pos = false;
  bool any_neg = false;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    (s.eigenvalues[i].real() > 0.0 ? any_pos : any_neg) = true;
  }
  if (!any_pos) return StabilityClass::Stable;
  if (!any_neg) return StabilityClass::AntiStable;
  return StabilityClass::Saddle;
}

inline Eigen::Index find_eigenvalue(const Spectrum& s, cplx lambda) {
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double d = std::abs(s.eigenvalues[i] - lambda);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  if (best < 0 || best_d > 1e-8 * std::max(1.0, std::abs(lambda))) {
    throw std::invalid_argument("check_condition: value is not an eigenvalue of the spectrum");
  }
  return best;
}

/// Stable:      -Re(lambda) + 2 Re(lambda_max) < 0, lambda_max of largest real part.
/// Anti-stable:  Re(lambda) - 2 Re(lambda_near) < 0, lambda_near the right
///               half-plane eigenvalue closest to the imaginary axis.
/// Saddle:       no gap condition; the mode follows the sign of Re(lambda).
inline ConditionReport check_condition(const Spectrum& s, Eigen::Index index) {
  if (index < 0 || index >= s.size()) throw std::out_of_range("check_condition: eigenvalue index out of range");
  const StabilityClass cls = classify(s);
  const cplx lambda = s.eigenvalues[index];
  ConditionReport r;

  switch (cls) {
    case StabilityClass::Stable: {
      // Sorted by descending real part.
      r.lambda_max = s.eigenvalues[0];
      r.mode = EvaluationMode::StableForward;
      r.condition_value = -lambda.real() + 2.0 * r.lambda_max.real();
      r.satisfied = r.condition_value < 0.0;
      break;
    }
    case StabilityClass::AntiStable: {
      r.lambda_max = s.eigenvalues[s.size() - 1];
      r.mode = EvaluationMode::AntiStableReverse;
      r.condition_value = lambda.real() - 2.0 * r.lambda_max.real();
      r.satisfied = r.condition_value < 0.0;
      break;
    }
    case StabilityClass::Saddle: {
      r.lambda_max = s.eigenvalues[0];
      r.mode = lambda.real() > 0.0 ? EvaluationMode::SaddleForward : EvaluationMode::SaddleReverse;
      r.condition_value = 0.0;
      r.satisfied = true;
      r.boundedness_caveat = true;
      break;
    }
  }
  return r;
}

inline ConditionReport check_condition(const Spectrum& s, cplx lambda) {
  return check_condition(s, find_eigenvalue(s, lambda));
}

/// Exponential decay rate assumed for the path-integral integrand when
/// estimating the remaining tail.
[[nodiscard]] inline double tail_decay_rate(const ConditionReport& r, cplx lambda) {
  switch (r.mode) {
    case EvaluationMode::StableForward:
    case EvaluationMode::AntiStableReverse: return -r.condition_value;
    case EvaluationMode::SaddleForward: return lambda.real();
    case EvaluationMode::SaddleReverse: return -lambda.real();
  }
  return 0.0;
}

}  // namespace koopman
