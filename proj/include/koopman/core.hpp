#pragma once

// Shared numeric aliases, status enums and the error hierarchy used across
// the koopman headers.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace koopman {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// =============================================================================
// Errors
// =============================================================================

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KOOPMAN_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

KOOPMAN_DEFINE_ERROR(DimensionMismatch);
KOOPMAN_DEFINE_ERROR(NonFiniteJacobian);
KOOPMAN_DEFINE_ERROR(NoConvergence);
KOOPMAN_DEFINE_ERROR(SingularJacobian);
KOOPMAN_DEFINE_ERROR(NotAnEquilibrium);
KOOPMAN_DEFINE_ERROR(UnknownSystem);
KOOPMAN_DEFINE_ERROR(MissingParam);
KOOPMAN_DEFINE_ERROR(ConfigError);
KOOPMAN_DEFINE_ERROR(DefectiveMatrix);
KOOPMAN_DEFINE_ERROR(NotHyperbolic);
KOOPMAN_DEFINE_ERROR(NonEigenpair);
KOOPMAN_DEFINE_ERROR(NonConvergedNeighbor);
KOOPMAN_DEFINE_ERROR(EvaluationFailed);
KOOPMAN_DEFINE_ERROR(DegenerateReference);
KOOPMAN_DEFINE_ERROR(NotTwoDimensional);
KOOPMAN_DEFINE_ERROR(UnstableLambda);
KOOPMAN_DEFINE_ERROR(IndefiniteResult);
KOOPMAN_DEFINE_ERROR(FormatVersionMismatch);
KOOPMAN_DEFINE_ERROR(FormatError);
KOOPMAN_DEFINE_ERROR(IoError);

#undef KOOPMAN_DEFINE_ERROR

/// Raised when the vector field returns a non-finite value; carries the point.
class NonFiniteField : public Error {
 public:
  NonFiniteField(const std::string& msg, Vec point) : Error(msg), point_(std::move(point)) {}
  [[nodiscard]] const Vec& point() const noexcept { return point_; }

 private:
  Vec point_;
};

// =============================================================================
// Statuses
// =============================================================================

enum class Direction : std::uint8_t { Forward, Reversed };

enum class TrajectoryStatus : std::uint8_t { Completed, Escaped, StepFailure };

enum class IntegralStatus : std::uint8_t { Converged, Truncated, Escaped, StepFailure };

inline std::string_view to_string(Direction d) {
  return d == Direction::Forward ? "Forward" : "Reversed";
}

inline std::string_view to_string(TrajectoryStatus s) {
  switch (s) {
    case TrajectoryStatus::Completed: return "Completed";
    case TrajectoryStatus::Escaped: return "Escaped";
    case TrajectoryStatus::StepFailure: return "StepFailure";
  }
  return "?";
}

inline std::string_view to_string(IntegralStatus s) {
  switch (s) {
    case IntegralStatus::Converged: return "Converged";
    case IntegralStatus::Truncated: return "Truncated";
    case IntegralStatus::Escaped: return "Escaped";
    case IntegralStatus::StepFailure: return "StepFailure";
  }
  return "?";
}

inline IntegralStatus integral_status_from_string(std::string_view s) {
  if (s == "Converged") return IntegralStatus::Converged;
  if (s == "Truncated") return IntegralStatus::Truncated;
  if (s == "Escaped") return IntegralStatus::Escaped;
  if (s == "StepFailure") return IntegralStatus::StepFailure;
  throw FormatError("unknown status '" + std::string(s) + "'");
}

/// Converged and Truncated values are usable; the other two are flagged.
[[nodiscard]] constexpr bool is_usable(IntegralStatus s) noexcept {
  return s == IntegralStatus::Converged || s == IntegralStatus::Truncated;
}

// =============================================================================
// Small helpers
// =============================================================================

/// Plain (non-conjugating) bilinear product w^T y.
[[nodiscard]] inline cplx bilinear(const CVec& w, const Vec& y) {
  cplx acc{0.0, 0.0};
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += w[i] * y[i];
  return acc;
}

[[nodiscard]] inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline std::string format_vector(const Vec& v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

/// Axis-aligned box used for domains.
struct Box {
  Vec lo;
  Vec hi;

  [[nodiscard]] Eigen::Index dim() const noexcept { return lo.size(); }
  [[nodiscard]] bool contains(const Vec& x) const {
    return ((x.array() >= lo.array()) && (x.array() <= hi.array())).all();
  }
  static Box uniform(Eigen::Index n, double lo, double hi) {
    return Box{Vec::Constant(n, lo), Vec::Constant(n, hi)};
  }
};

}  // namespace koopman
