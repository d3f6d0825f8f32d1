#pragma once

// Eigenfunction-based Lyapunov functions V(x) = Phi(x)^H P Phi(x) with P from
// Lambda^H P + P Lambda = -Q.

#include "koopman/core.hpp"
#include "koopman/eigfn.hpp"
#include "koopman/field.hpp"
#include "koopman/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <optional>
#include <string>
#include <vector>

namespace koopman {

inline constexpr double kLyapunovResidualTol = 1e-10;

[[nodiscard]] inline bool is_hermitian_pd(const CMat& M) {
  if (M.rows() != M.cols() || M.rows() == 0) return false;
  const double scale = std::max(1.0, M.norm());
  if ((M - M.adjoint()).norm() > 1e-12 * scale) return false;
  Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

inline CMat solve_P(const CVec& lambda, const CMat& Q) {
  const Eigen::Index n = lambda.size();
  if (Q.rows() != n || Q.cols() != n) throw DimensionMismatch("solve_P: Q must be " + std::to_string(n) + "x" + std::to_string(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lambda[i].real() < 0.0)) {
      throw UnstableLambda("solve_P: eigenvalue " + std::to_string(i) + " has non-negative real part");
    }
  }
  if (!is_hermitian_pd(Q)) throw IndefiniteResult("solve_P: Q is not Hermitian positive definite");

  CMat P(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) P(i, j) = Q(i, j) / (-std::conj(lambda[i]) - lambda[j]);
  }
  const CMat L = lambda.asDiagonal();
  const double residual = (L.adjoint() * P + P * L + Q).norm() / std::max(1.0, Q.norm());
  if (residual > kLyapunovResidualTol) throw IndefiniteResult("solve_P: Lyapunov residual too large");
  if (!is_hermitian_pd(P)) throw IndefiniteResult("solve_P: P is not Hermitian positive definite");
  return P;
}

/// Component k of Phi is eigenfunctions[source[k]].phi, conjugated when
/// conjugate[k] (only one member of each conjugate pair is evaluated).
struct LyapunovModel {
  std::vector<PrincipalEigenfunction> eigenfunctions;
  std::vector<std::size_t> source;
  std::vector<bool> conjugate;
  CVec lambda;
  CMat P;
  CMat Q;

  [[nodiscard]] Eigen::Index size() const noexcept { return lambda.size(); }
};

/// Uses every eigenvalue of the linearization at eq; all must give
/// StableForward eigenfunctions.
inline LyapunovModel build_lyapunov(const SystemInstance& sys, const Equilibrium& eq, const IntegratorConfig& cfg = {},
                                    std::optional<CMat> Q = std::nullopt) {
  const Decomposition dec = decompose_at(sys, eq);
  const Spectrum spectrum = eig(dec.A);
  const Eigen::Index n = spectrum.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(spectrum.eigenvalues[i].real() < 0.0)) {
      throw UnstableLambda("build_lyapunov: equilibrium " + format_vector(eq.point) + " is not stable");
    }
  }

  LyapunovModel m;
  m.lambda = spectrum.eigenvalues;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool partner = i > 0 && spectrum.eigenvalues[i].imag() < 0.0 &&
                         spectrum.eigenvalues[i] == std::conj(spectrum.eigenvalues[i - 1]) && !m.conjugate.back();
    if (partner) {
      m.source.push_back(m.source.back());
      m.conjugate.push_back(true);
      continue;
    }
    auto ef = build(sys, eq, i, cfg);
    if (ef.mode != EvaluationMode::StableForward) {
      throw ConfigError("build_lyapunov: eigenvalue " + std::to_string(i) + " does not give a StableForward mode");
    }
    m.eigenfunctions.push_back(std::move(ef));
    m.source.push_back(m.eigenfunctions.size() - 1);
    m.conjugate.push_back(false);
  }
  m.Q = Q.value_or(CMat::Identity(n, n));
  m.P = solve_P(m.lambda, m.Q);
  return m;
}

struct PhiSample {
  CVec phi;
  std::vector<IntegralStatus> statuses;  // per evaluated eigenfunction
  [[nodiscard]] bool valid() const {
    for (auto s : statuses) {
      if (!is_usable(s)) return false;
    }
    return true;
  }
};

inline PhiSample eval_phi(const LyapunovModel& m, const Vec& x) {
  PhiSample out;
  std::vector<cplx> values;
  for (const auto& ef : m.eigenfunctions) {
    const auto ev = evaluate(ef, x);
    out.statuses.push_back(ev.status);
    values.push_back(ev.phi);
  }
  out.phi.resize(m.size());
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const cplx v = values[m.source[static_cast<std::size_t>(k)]];
    out.phi[k] = m.conjugate[static_cast<std::size_t>(k)] ? std::conj(v) : v;
  }
  return out;
}

[[nodiscard]] inline double quadratic_form(const LyapunovModel& m, const CVec& phi) {
  const cplx v = phi.dot(m.P * phi);  // dot conjugates its first argument
  return std::max(0.0, v.real());
}

inline double V(const LyapunovModel& m, const Vec& x) {
  const auto s = eval_phi(m, x);
  if (!s.valid()) {
    std::string failed;
    for (std::size_t k = 0; k < s.statuses.size(); ++k) {
      if (!is_usable(s.statuses[k])) {
        failed += (failed.empty() ? "" : ", ") + std::string("lambda = ") + std::to_string(m.eigenfunctions[k].lambda.real()) +
                  (m.eigenfunctions[k].lambda.imag() >= 0 ? "+" : "") + std::to_string(m.eigenfunctions[k].lambda.imag()) +
                  "j (" + std::string(to_string(s.statuses[k])) + ")";
      }
    }
    throw EvaluationFailed("V at " + format_vector(x) + ": failed components " + failed);
  }
  return quadratic_form(m, s.phi);
}

/// Forward-difference estimate (V(s_dt(x)) - V(x)) / dt.
inline double vdot_sample(const LyapunovModel& m, const Vec& x, double dt = 1e-3) {
  if (!(dt > 0.0)) throw std::invalid_argument("vdot_sample: dt must be positive");
  const auto& ef = m.eigenfunctions.front();
  const Vec moved = flow_map(ef.system, x, dt, Direction::Forward, ef.cfg, ef.x_star());
  return (V(m, moved) - V(m, x)) / dt;
}

/// V over a grid in the field formats (imaginary part 0). A node is flagged
/// with the first non-usable component status.
inline ScalarField lyapunov_grid(const LyapunovModel& m, const GridSpec& spec, unsigned workers = 0) {
  spec.validate();
  ScalarField f;
  f.spec = spec;
  const std::size_t n = spec.node_count();
  f.values.assign(n, flagged_value());
  f.statuses.assign(n, IntegralStatus::StepFailure);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      const auto s = eval_phi(m, spec.point(i));
      IntegralStatus st = IntegralStatus::Converged;
      for (auto c : s.statuses) {
        if (!is_usable(c)) {
          st = c;
          break;
        }
        if (c == IntegralStatus::Truncated) st = c;
      }
      f.statuses[i] = st;
      if (s.valid()) f.values[i] = cplx{quadratic_form(m, s.phi), 0.0};
    } catch (const Error&) {
      f.statuses[i] = IntegralStatus::StepFailure;
    }
  });
  return f;
}

}  // namespace koopman
