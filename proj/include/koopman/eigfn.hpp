#pragma once

// Principal eigenfunctions phi(x) = w^T (x - x*) + h(x), evaluated by path
// integrals, together with the residual checks used to validate them.

#include "koopman/core.hpp"
#include "koopman/flow.hpp"
#include "koopman/spectral.hpp"
#include "koopman/systems.hpp"

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace koopman {

struct PrincipalEigenfunction {
  SystemInstance system;
  Equilibrium equilibrium;
  Decomposition decomposition;
  Eigen::Index eig_index = 0;
  cplx lambda{0.0, 0.0};
  CVec w;  // normalized left eigenvector
  cplx scale{1.0, 0.0};  // phi and h are reported as scale * (w-normalized values)
  EvaluationMode mode = EvaluationMode::StableForward;
  IntegratorConfig cfg;
  ConditionReport condition;

  [[nodiscard]] Direction direction() const noexcept { return direction_of(mode); }
  [[nodiscard]] const Vec& x_star() const noexcept { return equilibrium.point; }

  [[nodiscard]] CVec effective_w() const { return scale * w; }

  [[nodiscard]] PathIntegralSpec spec() const {
    return PathIntegralSpec{lambda, w, direction(), tail_decay_rate(condition, lambda)};
  }

  /// Same eigenfunction with w scaled by c (phi and h scale by c).
  [[nodiscard]] PrincipalEigenfunction rescaled(cplx c) const {
    PrincipalEigenfunction out = *this;
    out.scale *= c;
    return out;
  }

  /// Eigenfunction of the conjugate eigenvalue, built from (conj(lambda), conj(w)).
  [[nodiscard]] PrincipalEigenfunction conjugated() const {
    PrincipalEigenfunction out = *this;
    out.lambda = std::conj(lambda);
    out.w = w.conjugate();
    out.scale = std::conj(scale);
    return out;
  }

  [[nodiscard]] PrincipalEigenfunction with_config(const IntegratorConfig& c) const {
    PrincipalEigenfunction out = *this;
    out.cfg = c;
    return out;
  }
};

struct EigenEvaluation {
  cplx phi{0.0, 0.0};
  cplx h{0.0, 0.0};
  IntegralStatus status = IntegralStatus::Converged;
  double T_used = 0.0;
  double tail_estimate = 0.0;

  /// Escaped / StepFailure values are partial integrals and must not be used.
  [[nodiscard]] bool valid() const noexcept { return is_usable(status); }
};

class ConditionViolated : public Error {
 public:
  ConditionViolated(const std::string& msg, ConditionReport report) : Error(msg), report_(report) {}
  [[nodiscard]] const ConditionReport& report() const noexcept { return report_; }

 private:
  ConditionReport report_;
};

/// Binds eigenvalue eig_index of the linearization at eq to an evaluable
/// eigenfunction and picks the evaluation mode from the stability class.
inline PrincipalEigenfunction build(const SystemInstance& sys, const Equilibrium& eq, Eigen::Index eig_index,
                                    const IntegratorConfig& cfg = {}) {
  cfg.validate();
  PrincipalEigenfunction ef;
  ef.system = sys;
  ef.equilibrium = eq;
  ef.decomposition = decompose_at(sys, eq);
  const Spectrum spectrum = eig(ef.decomposition.A);
  if (eig_index < 0 || eig_index >= spectrum.size()) {
    throw std::out_of_range("build: eigenvalue index " + std::to_string(eig_index) + " out of range");
  }
  ef.condition = check_condition(spectrum, eig_index);
  if (!ef.condition.satisfied) {
    std::ostringstream os;
    os << "spectral-gap condition violated for lambda = " << spectrum.eigenvalues[eig_index]
       << " (condition value " << ef.condition.condition_value << ")";
    throw ConditionViolated(os.str(), ef.condition);
  }
  ef.eig_index = eig_index;
  ef.lambda = spectrum.eigenvalues[eig_index];
  ef.w = spectrum.left(eig_index);
  ef.mode = ef.condition.mode;
  ef.cfg = cfg;
  return ef;
}

inline EigenEvaluation evaluate(const PrincipalEigenfunction& ef, const Vec& x) {
  check_dim(ef.system, x);
  const auto r = path_integral(ef.decomposition, ef.system, ef.spec(), x, ef.cfg);
  EigenEvaluation ev;
  ev.h = ef.scale * r.value;
  ev.phi = ef.scale * (bilinear(ef.w, x - ef.x_star()) + r.value);
  ev.status = r.status;
  ev.T_used = r.T_used;
  ev.tail_estimate = r.tail_estimate;
  return ev;
}

inline EigenEvaluation evaluate_valid(const PrincipalEigenfunction& ef, const Vec& x) {
  auto ev = evaluate(ef, x);
  if (!ev.valid()) {
    throw EvaluationFailed("eigenfunction evaluation at " + format_vector(x) + " ended with status " +
                           std::string(to_string(ev.status)));
  }
  return ev;
}

/// w^T (x - x*) + g(T): the solution formula with the boundary term dropped.
inline cplx evaluate_finite_horizon(const PrincipalEigenfunction& ef, const Vec& x, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("evaluate_finite_horizon: T must be positive");
  IntegratorConfig c = ef.cfg;
  c.T_min = T;
  c.T_max = T;
  c.escape_tail_tol = 0.0;
  const auto r = path_integral(ef.decomposition, ef.system, ef.spec(), x, c);
  if (r.status == IntegralStatus::Escaped || r.status == IntegralStatus::StepFailure) {
    throw EvaluationFailed("finite-horizon evaluation at " + format_vector(x) + " ended with status " +
                           std::string(to_string(r.status)));
  }
  return ef.scale * (bilinear(ef.w, x - ef.x_star()) + r.value);
}

/// e^{-mu T} w^T (s_{+-T}(x) - x*), computed from a plain trajectory without
/// the quadrature accumulator.
inline cplx laplace_average(const PrincipalEigenfunction& ef, const Vec& x, double T) {
  const auto spec = ef.spec();
  if (T == 0.0) return ef.scale * bilinear(ef.w, x - ef.x_star());
  // The caller guarantees the trajectory exists on [0, T]; escape is not a stop.
  // The state tolerance is scaled by e^{Re(mu) T} so that the absolute error
  // after weighting by e^{-mu T} stays at the configured atol.
  IntegratorConfig c = ef.cfg;
  c.escape_radius = std::numeric_limits<double>::max();
  c.atol = ef.cfg.atol * std::min(1.0, std::exp(spec.mu().real() * T));
  const Vec sT = flow_map(ef.system, x, T, ef.direction(), c, ef.x_star());
  return ef.scale * std::exp(-spec.mu() * T) * bilinear(ef.w, sT - ef.x_star());
}

/// |phi(s_tau(x)) - e^{mu tau} phi(x)| / max(1, |phi(x)|) along the
/// eigenfunction's own time direction.
inline double eigen_property_residual(const PrincipalEigenfunction& ef, const Vec& x, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("eigen_property_residual: tau must be positive");
  const auto here = evaluate_valid(ef, x);
  const Vec moved = flow_map(ef.system, x, tau, ef.direction(), ef.cfg, ef.x_star());
  const auto there = evaluate_valid(ef, moved);
  const cplx predicted = std::exp(ef.spec().mu() * tau) * here.phi;
  return std::abs(there.phi - predicted) / std::max(1.0, std::abs(here.phi));
}

/// |(dh/dx) f(x) - lambda h(x) + w^T f_n(x - x*)| with dh/dx by central
/// differences of the quadrature value.
inline double pde_residual(const PrincipalEigenfunction& ef, const Vec& x, double fd_step = 1e-4) {
  if (!(fd_step > 0.0)) throw std::invalid_argument("pde_residual: fd_step must be positive");
  const Eigen::Index n = ef.system.dim;
  auto h_at = [&](const Vec& p) {
    const auto ev = evaluate(ef, p);
    if (!ev.valid()) {
      throw NonConvergedNeighbor("pde_residual: stencil point " + format_vector(p) + " ended with status " +
                                 std::string(to_string(ev.status)));
    }
    return ev.h;
  };

  const cplx h0 = h_at(x);
  const Vec fx = eval_field(ef.system, x);
  cplx directional{0.0, 0.0};
  Vec p = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = x[i] + fd_step;
    const cplx hp = h_at(p);
    p[i] = x[i] - fd_step;
    const cplx hm = h_at(p);
    p[i] = x[i];
    directional += (hp - hm) / (2.0 * fd_step) * fx[i];
  }
  const cplx forcing = ef.scale * bilinear(ef.w, ef.decomposition.fn(x - ef.x_star()));
  return std::abs(directional - ef.lambda * h0 + forcing);
}

/// c minimizing sum |c * computed_i - reference_i|^2.
inline cplx calibrate_scale(std::span<const cplx> computed, std::span<const cplx> reference) {
  if (computed.size() != reference.size()) throw std::invalid_argument("calibrate_scale: size mismatch");
  std::size_t nonzero = 0;
  for (const auto& r : reference) nonzero += std::abs(r) > 0.0 ? 1 : 0;
  if (nonzero < 2) throw DegenerateReference("calibrate_scale: need at least two nonzero reference values");
  cplx num{0.0, 0.0};
  double den = 0.0;
  for (std::size_t i = 0; i < computed.size(); ++i) {
    num += std::conj(computed[i]) * reference[i];
    den += std::norm(computed[i]);
  }
  if (den == 0.0) throw DegenerateReference("calibrate_scale: computed values are all zero");
  return num / den;
}

inline cplx calibrate_scale(const PrincipalEigenfunction& ef, std::span<const std::pair<Vec, cplx>> reference) {
  std::vector<cplx> computed;
  std::vector<cplx> ref;
  computed.reserve(reference.size());
  ref.reserve(reference.size());
  for (const auto& [x, value] : reference) {
    computed.push_back(evaluate_valid(ef, x).phi);
    ref.push_back(value);
  }
  return calibrate_scale(computed, ref);
}

}  // namespace koopman
