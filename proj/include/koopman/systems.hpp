#pragma once

// Vector fields, Jacobians, equilibria and the split f(x* + y) = A y + f_n(y).

#include "koopman/core.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace koopman {

using FieldFn = std::function<Vec(const Vec&)>;
using JacobianFn = std::function<Mat(const Vec&)>;
using ParamMap = std::map<std::string, double>;

/// A smooth autonomous vector field x' = f(x). Immutable once built and safe
/// to share between threads.
struct SystemInstance {
  std::string name;
  Eigen::Index dim = 0;
  ParamMap params;
  FieldFn field;
  std::optional<JacobianFn> analytic_jacobian;
  Box domain;
  std::vector<Vec> declared_equilibria;
  // Enough to rebuild the system elsewhere (dataset metadata, CLI echo).
  nlohmann::json source;
};

struct Equilibrium {
  Vec point;
  double residual_norm = 0.0;
};

/// Linear part A and purely nonlinear remainder in shifted coordinates.
struct Decomposition {
  Mat A;
  Vec x_star;
  FieldFn field;

  /// f_n(y) = f(x* + y) - A y
  [[nodiscard]] Vec fn(const Vec& y) const { return field(x_star + y) - A * y; }
};

inline constexpr double kEquilibriumTol = 1e-10;

// -----------------------------------------------------------------------------
// Evaluation
// -----------------------------------------------------------------------------

inline void check_dim(const SystemInstance& sys, const Vec& x) {
  if (x.size() != sys.dim) {
    throw DimensionMismatch(sys.name + ": state has dimension " + std::to_string(x.size()) +
                            ", expected " + std::to_string(sys.dim));
  }
}

inline Vec eval_field(const SystemInstance& sys, const Vec& x) {
  check_dim(sys, x);
  Vec out = sys.field(x);
  if (!out.allFinite()) {
    throw NonFiniteField(sys.name + ": non-finite field value at " + format_vector(x), x);
  }
  return out;
}

/// Central differences with per-coordinate step 1e-6 * (1 + |x_i|).
inline Mat finite_difference_jacobian(const SystemInstance& sys, const Vec& x) {
  check_dim(sys, x);
  Mat J(sys.dim, sys.dim);
  Vec xp = x;
  Vec xm = x;
  for (Eigen::Index j = 0; j < sys.dim; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    J.col(j) = (sys.field(xp) - sys.field(xm)) / (xp[j] - xm[j]);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

inline Mat jacobian(const SystemInstance& sys, const Vec& x) {
  check_dim(sys, x);
  Mat J = sys.analytic_jacobian ? (*sys.analytic_jacobian)(x) : finite_difference_jacobian(sys, x);
  if (!J.allFinite()) {
    throw NonFiniteJacobian(sys.name + ": non-finite Jacobian at " + format_vector(x));
  }
  return J;
}

[[nodiscard]] inline bool is_equilibrium(const SystemInstance& sys, const Vec& x,
                                         double tol = kEquilibriumTol) {
  return eval_field(sys, x).norm() <= tol * (1.0 + x.norm());
}

/// Accepts x as-is when it already satisfies the equilibrium tolerance.
inline Equilibrium verify_equilibrium(const SystemInstance& sys, const Vec& x) {
  const double r = eval_field(sys, x).norm();
  if (r > kEquilibriumTol * (1.0 + x.norm())) {
    std::ostringstream os;
    os << sys.name << ": " << format_vector(x) << " is not an equilibrium (|f| = " << r << ")";
    throw NotAnEquilibrium(os.str());
  }
  return Equilibrium{x, r};
}

/// Newton iteration on f(x) = 0: stops at residual <= 1e-12 or after 50 steps.
inline Equilibrium refine_equilibrium(const SystemInstance& sys, const Vec& x0) {
  constexpr int kMaxIter = 50;
  constexpr double kTarget = 1e-12;

  Vec x = x0;
  Vec fx = eval_field(sys, x);
  double r = fx.norm();
  Vec best = x;
  double best_r = r;
  int stalled = 0;

  for (int it = 0; it < kMaxIter && r > kTarget; ++it) {
    const Mat J = jacobian(sys, x);
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) {
      throw SingularJacobian(sys.name + ": singular Jacobian at " + format_vector(x));
    }
    x -= lu.solve(fx);
    fx = eval_field(sys, x);
    r = fx.norm();
    if (r < best_r) {
      best = x;
      best_r = r;
      stalled = 0;
    } else if (++stalled >= 5) {
      break;
    }
  }

  if (best_r > kEquilibriumTol * (1.0 + best.norm())) {
    std::ostringstream os;
    os << sys.name << ": Newton iteration from " << format_vector(x0)
       << " did not converge (residual " << best_r << ")";
    throw NoConvergence(os.str());
  }
  return Equilibrium{best, best_r};
}

inline Decomposition decompose_at(const SystemInstance& sys, const Equilibrium& eq) {
  return Decomposition{jacobian(sys, eq.point), eq.point, sys.field};
}

// -----------------------------------------------------------------------------
// Built-in benchmark systems
// -----------------------------------------------------------------------------

namespace detail {

inline double take_param(const ParamMap& params, const std::string& system, const std::string& key) {
  const auto it = params.find(key);
  if (it == params.end()) {
    throw MissingParam(system + ": missing parameter '" + key + "'");
  }
  return it->second;
}

inline void reject_unknown_params(const ParamMap& params, const std::string& system,
                                  std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : params) {
    bool ok = false;
    for (auto a : allowed) ok = ok || (a == k);
    if (!ok) throw ConfigError(system + ": unknown parameter '" + k + "'");
  }
}

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace detail

/// x' = alpha (x - x^3)
inline SystemInstance make_example1(double alpha) {
  SystemInstance s;
  s.name = "example1";
  s.dim = 1;
  s.params = {{"alpha", alpha}};
  s.field = [alpha](const Vec& x) {
    Vec out(1);
    out[0] = alpha * (x[0] - x[0] * x[0] * x[0]);
    return out;
  };
  s.analytic_jacobian = [alpha](const Vec& x) {
    Mat J(1, 1);
    J(0, 0) = alpha * (1.0 - 3.0 * x[0] * x[0]);
    return J;
  };
  s.domain = Box::uniform(1, -1.0, 1.0);
  s.declared_equilibria = {Vec::Zero(1)};
  s.source = {{"builtin", s.name}, {"params", s.params}};
  return s;
}

/// Two-dimensional system conjugate to y' = diag(l1, l2) y through
/// y1 = x1 - x2^2, y2 = x2 - y1^2.
inline SystemInstance make_example2(double l1, double l2) {
  SystemInstance s;
  s.name = "example2";
  s.dim = 2;
  s.params = {{"lambda1", l1}, {"lambda2", l2}};
  s.field = [l1, l2](const Vec& x) {
    const double a = x[0];
    const double b = x[1];
    const double b2 = b * b;
    const double q = a * a - b - 2.0 * a * b2 + b2 * b2;  // y1^2 - x2
    const double y1 = a - b2;
    Vec out(2);
    out[0] = -2.0 * l2 * b * q + l1 * (a + 4.0 * a * a * b - b2 - 8.0 * a * b2 * b + 4.0 * b2 * b2 * b);
    out[1] = 2.0 * l1 * y1 * y1 - l2 * q;
    return out;
  };
  s.analytic_jacobian = [l1, l2](const Vec& x) {
    const double a = x[0];
    const double b = x[1];
    const double b2 = b * b;
    const double q = a * a - b - 2.0 * a * b2 + b2 * b2;
    const double qa = 2.0 * a - 2.0 * b2;
    const double qb = -1.0 - 4.0 * a * b + 4.0 * b2 * b;
    const double y1 = a - b2;
    Mat J(2, 2);
    J(0, 0) = -2.0 * l2 * b * qa + l1 * (1.0 + 8.0 * a * b - 8.0 * b2 * b);
    J(0, 1) = -2.0 * l2 * (q + b * qb) +
              l1 * (4.0 * a * a - 2.0 * b - 24.0 * a * b2 + 20.0 * b2 * b2);
    J(1, 0) = 4.0 * l1 * y1 - l2 * qa;
    J(1, 1) = -8.0 * l1 * y1 * b - l2 * qb;
    return J;
  };
  s.domain = Box::uniform(2, -1.0, 1.0);
  s.declared_equilibria = {Vec::Zero(2)};
  s.source = {{"builtin", s.name}, {"params", s.params}};
  return s;
}

/// x1' = x2, x2' = x1 - delta x2 - x1^3
inline SystemInstance make_duffing(double delta) {
  SystemInstance s;
  s.name = "duffing";
  s.dim = 2;
  s.params = {{"delta", delta}};
  s.field = [delta](const Vec& x) {
    return detail::vec2(x[1], x[0] - delta * x[1] - x[0] * x[0] * x[0]);
  };
  s.analytic_jacobian = [delta](const Vec& x) {
    Mat J(2, 2);
    J << 0.0, 1.0, 1.0 - 3.0 * x[0] * x[0], -delta;
    return J;
  };
  s.domain = Box::uniform(2, -2.0, 2.0);
  s.declared_equilibria = {Vec::Zero(2), detail::vec2(1.0, 0.0), detail::vec2(-1.0, 0.0)};
  s.source = {{"builtin", s.name}, {"params", s.params}};
  return s;
}

/// Two-link arm, state (q1, q2, q1', q2'), q'' = M(q)^-1 (-B q' - C(q, q') q' - G(q)).
inline SystemInstance make_twolink() {
  // M(q) = [[2 cos q2 + 25/3, cos q2 + 1/3], [cos q2 + 1/3, 1/3]]
  constexpr double kM11 = 25.0 / 3.0;
  constexpr double kM12 = 1.0 / 3.0;
  constexpr double kM22 = 1.0 / 3.0;
  constexpr double kB1 = 5.5;
  constexpr double kB2 = 0.001;

  SystemInstance s;
  s.name = "twolink";
  s.dim = 4;
  s.field = [](const Vec& x) {
    const double q1 = x[0];
    const double q2 = x[1];
    const double dq1 = x[2];
    const double dq2 = x[3];
    const double c2 = std::cos(q2);
    const double s2 = std::sin(q2);
    const double m11 = 2.0 * c2 + kM11;
    const double m12 = c2 + kM12;
    const double m22 = kM22;
    // C(q, q') q'
    const double cq1 = -2.0 * dq2 * s2 * dq1 - dq2 * s2 * dq2;
    const double cq2 = dq1 * s2 * dq1;
    const double s12 = std::sin(q1 + q2);
    const double g1 = 50.0 * std::sin(q1) + 5.0 * s12;
    const double g2 = 5.0 * s12;
    const double r1 = -kB1 * dq1 - cq1 - g1;
    const double r2 = -kB2 * dq2 - cq2 - g2;
    const double det = m11 * m22 - m12 * m12;
    Vec out(4);
    out[0] = dq1;
    out[1] = dq2;
    out[2] = (m22 * r1 - m12 * r2) / det;
    out[3] = (-m12 * r1 + m11 * r2) / det;
    return out;
  };
  const double a = std::numbers::pi / 12.0;
  s.domain = Box::uniform(4, -a, a);
  s.declared_equilibria = {Vec::Zero(4)};
  s.source = {{"builtin", s.name}, {"params", nlohmann::json::object()}};
  return s;
}

inline SystemInstance builtin(const std::string& name, const ParamMap& params = {}) {
  if (name == "example1") {
    detail::reject_unknown_params(params, name, {"alpha"});
    return make_example1(detail::take_param(params, name, "alpha"));
  }
  if (name == "example2") {
    detail::reject_unknown_params(params, name, {"lambda1", "lambda2"});
    return make_example2(detail::take_param(params, name, "lambda1"),
                         detail::take_param(params, name, "lambda2"));
  }
  if (name == "duffing") {
    detail::reject_unknown_params(params, name, {"delta"});
    return make_duffing(detail::take_param(params, name, "delta"));
  }
  if (name == "twolink") {
    detail::reject_unknown_params(params, name, {});
    return make_twolink();
  }
  throw UnknownSystem("unknown system '" + name + "'");
}

// -----------------------------------------------------------------------------
// Polynomial systems from JSON
// -----------------------------------------------------------------------------

struct PolynomialTerm {
  double coeff = 0.0;
  std::vector<int> exponents;
};

namespace detail {

inline double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

inline double eval_monomial(const PolynomialTerm& t, const Vec& x) {
  double v = t.coeff;
  for (std::size_t i = 0; i < t.exponents.size(); ++i) v *= ipow(x[static_cast<Eigen::Index>(i)], t.exponents[i]);
  return v;
}

}  // namespace detail

/// Builds a polynomial field from
/// {"dim": n, "equations": [[{"c": coeff, "e": [e1..en]}, ...], ...]}
/// with an optional "domain": [[lo, hi], ...] and "name".
inline SystemInstance parse_polynomial(const nlohmann::json& cfg) {
  auto fail = [](const std::string& where, const std::string& what) -> void {
    throw ConfigError("polynomial config: " + where + ": " + what);
  };

  if (!cfg.is_object()) fail("<root>", "expected an object");
  if (!cfg.contains("dim") || !cfg["dim"].is_number_integer() || cfg["dim"].get<long>() < 1) {
    fail("dim", "expected a positive integer");
  }
  const auto n = static_cast<Eigen::Index>(cfg["dim"].get<long>());
  if (!cfg.contains("equations") || !cfg["equations"].is_array()) fail("equations", "expected an array");
  const auto& eqs = cfg["equations"];
  if (static_cast<Eigen::Index>(eqs.size()) != n) {
    fail("equations", "expected " + std::to_string(n) + " equations, got " + std::to_string(eqs.size()));
  }

  std::vector<std::vector<PolynomialTerm>> terms(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < eqs.size(); ++i) {
    const std::string at = "equations[" + std::to_string(i) + "]";
    if (!eqs[i].is_array()) fail(at, "expected an array of terms");
    for (std::size_t k = 0; k < eqs[i].size(); ++k) {
      const auto& t = eqs[i][k];
      const std::string tat = at + "[" + std::to_string(k) + "]";
      if (!t.is_object()) fail(tat, "expected an object with keys c, e");
      if (!t.contains("c") || !t["c"].is_number()) fail(tat + ".c", "expected a number");
      if (!t.contains("e") || !t["e"].is_array()) fail(tat + ".e", "expected an array");
      if (static_cast<Eigen::Index>(t["e"].size()) != n) {
        fail(tat + ".e", "expected " + std::to_string(n) + " exponents");
      }
      PolynomialTerm term;
      term.coeff = t["c"].get<double>();
      for (std::size_t j = 0; j < t["e"].size(); ++j) {
        const auto& e = t["e"][j];
        if (!e.is_number_integer() || e.get<long>() < 0) {
          fail(tat + ".e[" + std::to_string(j) + "]", "expected a non-negative integer");
        }
        term.exponents.push_back(static_cast<int>(e.get<long>()));
      }
      terms[i].push_back(std::move(term));
    }
  }

  SystemInstance s;
  s.name = cfg.value("name", std::string("polynomial"));
  s.dim = n;
  s.field = [terms, n](const Vec& x) {
    Vec out = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (const auto& t : terms[static_cast<std::size_t>(i)]) out[i] += detail::eval_monomial(t, x);
    }
    return out;
  };
  s.analytic_jacobian = [terms, n](const Vec& x) {
    Mat J = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (const auto& t : terms[static_cast<std::size_t>(i)]) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const int ej = t.exponents[static_cast<std::size_t>(j)];
          if (ej == 0) continue;
          PolynomialTerm d = t;
          d.coeff *= ej;
          d.exponents[static_cast<std::size_t>(j)] = ej - 1;
          J(i, j) += detail::eval_monomial(d, x);
        }
      }
    }
    return J;
  };

  s.domain = Box::uniform(n, -1.0, 1.0);
  if (cfg.contains("domain")) {
    const auto& d = cfg["domain"];
    if (!d.is_array() || static_cast<Eigen::Index>(d.size()) != n) fail("domain", "expected n [lo, hi] pairs");
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = d[static_cast<std::size_t>(i)];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number() ||
          p[0].get<double>() >= p[1].get<double>()) {
        fail("domain[" + std::to_string(i) + "]", "expected [lo, hi] with lo < hi");
      }
      s.domain.lo[i] = p[0].get<double>();
      s.domain.hi[i] = p[1].get<double>();
    }
  }
  s.declared_equilibria = {Vec::Zero(n)};
  s.source = {{"polynomial", cfg}};
  return s;
}

inline SystemInstance parse_polynomial(std::string_view text) {
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("polynomial config: ") + e.what());
  }
  return parse_polynomial(cfg);
}

/// Rebuilds a system from SystemInstance::source.
inline SystemInstance system_from_source(const nlohmann::json& src) {
  if (src.contains("polynomial")) return parse_polynomial(src["polynomial"]);
  if (!src.contains("builtin")) throw ConfigError("system source: expected 'builtin' or 'polynomial'");
  ParamMap params;
  if (src.contains("params")) {
    for (const auto& [k, v] : src["params"].items()) params[k] = v.get<double>();
  }
  return builtin(src["builtin"].get<std::string>(), params);
}

}  // namespace koopman
