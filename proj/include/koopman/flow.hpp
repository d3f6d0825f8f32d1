#pragma once

// Adaptive Dormand-Prince 5(4) integration, forward or with the field
// reversed, and the path-integral accumulator
//   g(t) = +-int_0^t e^{-mu s} w^T f_n(y(s)) ds
// carried as two extra (real, imaginary) state components so that it shares
// the solver's error control.

#include "koopman/core.hpp"
#include "koopman/systems.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

namespace koopman {

struct IntegratorConfig {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_init = 1e-3;
  double h_max = 0.1;
  double T_min = 1.0;
  double T_max = 50.0;
  double tail_tol = 1e-8;
  double escape_radius = 100.0;     // in shifted-coordinate norm
  double convergence_radius = 1e-9;
  // An escaping trajectory whose remaining-tail bound is already below this is
  // reported as Truncated rather than Escaped. Zero disables the rule.
  double escape_tail_tol = 1e-6;

  void validate() const {
    const std::array<std::pair<const char*, double>, 9> positive{{{"rtol", rtol},
                                                                  {"atol", atol},
                                                                  {"h_init", h_init},
                                                                  {"h_max", h_max},
                                                                  {"T_min", T_min},
                                                                  {"T_max", T_max},
                                                                  {"tail_tol", tail_tol},
                                                                  {"escape_radius", escape_radius},
                                                                  {"convergence_radius", convergence_radius}}};
    for (const auto& [name, v] : positive) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("integrator.") + name + " must be positive");
    }
    if (!(escape_tail_tol >= 0.0)) throw ConfigError("integrator.escape_tail_tol must be non-negative");
    if (T_min > T_max) throw ConfigError("integrator: T_min must not exceed T_max");
    if (rtol < 10.0 * std::numeric_limits<double>::epsilon()) throw ConfigError("integrator.rtol is below machine precision");
  }
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<Vec> states;
  TrajectoryStatus status = TrajectoryStatus::Completed;

  [[nodiscard]] const Vec& final_state() const { return states.back(); }
  [[nodiscard]] double final_time() const { return times.back(); }
};

struct PathIntegralResult {
  cplx value{0.0, 0.0};
  double T_used = 0.0;
  double tail_estimate = 0.0;
  Vec final_state;  // s_{+-T_used}(x0), unshifted
  IntegralStatus status = IntegralStatus::Converged;
};

/// What to integrate: eigenvalue, plain-transpose left vector, time direction
/// and the decay rate used for the tail bound.
struct PathIntegralSpec {
  cplx lambda{0.0, 0.0};
  CVec w;
  Direction direction = Direction::Forward;
  double decay_rate = 0.0;

  /// Exponent used in the weight e^{-mu t}: lambda forward, -lambda reversed.
  [[nodiscard]] cplx mu() const { return direction == Direction::Forward ? lambda : -lambda; }
  [[nodiscard]] double sign() const { return direction == Direction::Forward ? 1.0 : -1.0; }
};

// =============================================================================
// Dormand-Prince 5(4)
// =============================================================================

namespace detail {

struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  // b (5th order) minus b* (4th order)
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  // continuous extension (Shampine)
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};

/// Fourth-order interpolant over the last accepted step [t0, t0 + h].
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Vec r1, r2, r3, r4, r5;

  [[nodiscard]] Vec at(double t) const {
    const double th = (t - t0) / h;
    const double th1 = 1.0 - th;
    return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
  }
};

inline constexpr double kMinStep = 1e-14;

enum class LoopOutcome : std::uint8_t { ReachedEnd, StoppedByObserver, StepFailure };

/// Integrates z' = rhs(t, z) from t = 0 to t_end. After every accepted step
/// observer(t, z, dz, dense) is called with dz = rhs(t, z) and the step's
/// interpolant; returning true stops.
template <class Rhs, class Observer>
LoopOutcome dopri5(Rhs&& rhs, Vec& z, double& t, double t_end, const IntegratorConfig& cfg, Observer&& observer) {
  using DP = DormandPrince;
  const Eigen::Index m = z.size();
  Vec k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), stage(m), znew(m), err(m);
  DenseStep dense;

  t = 0.0;
  rhs(t, z, k1);
  if (!k1.allFinite()) return LoopOutcome::StepFailure;
  double h = std::min(cfg.h_init, cfg.h_max);
  bool last_rejected = false;

  while (t < t_end) {
    bool clipped = false;
    if (t + h >= t_end) {
      h = t_end - t;
      clipped = true;
    }
    if (h < kMinStep) return LoopOutcome::StepFailure;

    stage = z + h * DP::a21 * k1;
    rhs(t + DP::c2 * h, stage, k2);
    stage = z + h * (DP::a31 * k1 + DP::a32 * k2);
    rhs(t + DP::c3 * h, stage, k3);
    stage = z + h * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3);
    rhs(t + DP::c4 * h, stage, k4);
    stage = z + h * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4);
    rhs(t + DP::c5 * h, stage, k5);
    stage = z + h * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5);
    rhs(t + h, stage, k6);
    znew = z + h * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
    const double t_new = clipped ? t_end : t + h;
    rhs(t_new, znew, k7);

    double err_norm = std::numeric_limits<double>::infinity();
    if (znew.allFinite() && k7.allFinite()) {
      err = h * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 + DP::e6 * k6 + DP::e7 * k7);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double sc = cfg.atol + cfg.rtol * std::max(std::abs(z[i]), std::abs(znew[i]));
        const double r = err[i] / sc;
        acc += r * r;
      }
      err_norm = std::sqrt(acc / static_cast<double>(m));
    }

    if (err_norm <= 1.0) {
      dense.t0 = t;
      dense.h = t_new - t;
      dense.r1 = z;
      dense.r2 = znew - z;
      dense.r3 = dense.h * k1 - dense.r2;
      dense.r4 = dense.r2 - dense.h * k7 - dense.r3;
      dense.r5 = dense.h * (DP::d1 * k1 + DP::d3 * k3 + DP::d4 * k4 + DP::d5 * k5 + DP::d6 * k6 + DP::d7 * k7);
      t = t_new;
      z.swap(znew);
      k1.swap(k7);
      double fac = err_norm > 0.0 ? 0.9 * std::pow(err_norm, -0.2) : 5.0;
      fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
      h = std::min(h * fac, cfg.h_max);
      last_rejected = false;
      if (observer(t, static_cast<const Vec&>(z), static_cast<const Vec&>(k1), static_cast<const DenseStep&>(dense)))
        return LoopOutcome::StoppedByObserver;
    } else {
      const double fac = std::isfinite(err_norm) ? std::max(0.2, 0.9 * std::pow(err_norm, -0.2)) : 0.25;
      h *= fac;
      last_rejected = true;
    }
  }
  return LoopOutcome::ReachedEnd;
}

}  // namespace detail

// =============================================================================
// Trajectories
// =============================================================================

/// Solves y' = f(y) (Forward) or y' = -f(y) (Reversed) on [0, T]. Escape is
/// measured as |y - center| against cfg.escape_radius (center defaults to 0).
inline TrajectoryResult integrate(const SystemInstance& sys, const Vec& x0, double T, Direction direction,
                                  const IntegratorConfig& cfg, const std::optional<Vec>& center = std::nullopt) {
  check_dim(sys, x0);
  if (!(T > 0.0)) throw std::invalid_argument("integrate: T must be positive");
  if (!x0.allFinite()) throw std::invalid_argument("integrate: initial state is not finite");
  cfg.validate();

  const double sgn = direction == Direction::Forward ? 1.0 : -1.0;
  const Vec c = center.value_or(Vec::Zero(sys.dim));
  TrajectoryResult out;
  out.times.push_back(0.0);
  out.states.push_back(x0);

  auto rhs = [&](double, const Vec& y, Vec& dy) { dy = sgn * sys.field(y); };
  bool escaped = false;
  auto observer = [&](double t, const Vec& y, const Vec&, const detail::DenseStep&) {
    out.times.push_back(t);
    out.states.push_back(y);
    escaped = (y - c).norm() > cfg.escape_radius;
    return escaped;
  };

  Vec y = x0;
  double t = 0.0;
  const auto outcome = detail::dopri5(rhs, y, t, T, cfg, observer);
  if (outcome == detail::LoopOutcome::StepFailure) {
    out.status = TrajectoryStatus::StepFailure;
  } else if (escaped) {
    out.status = TrajectoryStatus::Escaped;
  }
  return out;
}

/// Final state only; throws EvaluationFailed unless the run completed.
inline Vec flow_map(const SystemInstance& sys, const Vec& x0, double T, Direction direction,
                    const IntegratorConfig& cfg, const std::optional<Vec>& center = std::nullopt) {
  const auto traj = integrate(sys, x0, T, direction, cfg, center);
  if (traj.status != TrajectoryStatus::Completed) {
    throw EvaluationFailed("trajectory from " + format_vector(x0) + " ended with status " +
                           std::string(to_string(traj.status)));
  }
  return traj.final_state();
}

// =============================================================================
// Path integral
// =============================================================================

inline constexpr int kTailWindow = 10;

inline void check_eigenpair(const Mat& A, cplx lambda, const CVec& w) {
  if (w.isZero(0.0)) throw NonEigenpair("w is zero");
  const CVec lhs = A.cast<cplx>().transpose() * w;  // (w^T A)^T
  const double res = (lhs - lambda * w).norm();
  const double scale = std::max(1.0, A.norm()) * std::max(1.0, w.norm());
  if (!(res <= 1e-8 * scale)) {
    throw NonEigenpair("(lambda, w) is not a left eigenpair of A (residual " + std::to_string(res) + ")");
  }
}

namespace detail {

/// Sliding-window tail bound: the envelope max|integrand| over the latest
/// window must not exceed the one before it, otherwise the bound is infinite.
/// Envelopes at or below noise_floor count as non-increasing.
class TailMonitor {
 public:
  explicit TailMonitor(double decay_rate, double noise_floor = 0.0) : rate_(decay_rate), floor_(noise_floor) {}

  void push(double magnitude) {
    history_.push_back(magnitude);
    if (history_.size() > 2 * kTailWindow) history_.pop_front();
    ++count_;
  }

  [[nodiscard]] double estimate() const {
    if (!(rate_ > 0.0) || count_ <= kTailWindow) return std::numeric_limits<double>::infinity();
    const auto split = history_.end() - kTailWindow;
    const double recent = *std::max_element(split, history_.end());
    const double earlier = *std::max_element(history_.begin(), split);
    if (!(recent <= earlier || recent <= floor_)) return std::numeric_limits<double>::infinity();
    return recent / rate_;
  }

 private:
  double rate_;
  double floor_;
  std::deque<double> history_;
  std::size_t count_ = 0;
};

}  // namespace detail

/// Integrates the augmented system y' = +-f(x* + y),
/// g' = +-e^{-mu t} w^T f_n(y) with g(0) = 0 and stops at the first of
/// convergence (t >= T_min and tail <= tail_tol), t = T_max or escape.
inline PathIntegralResult path_integral(const Decomposition& dec, const SystemInstance& sys,
                                        const PathIntegralSpec& spec, const Vec& x0,
                                        const IntegratorConfig& cfg) {
  check_dim(sys, x0);
  if (!x0.allFinite()) throw std::invalid_argument("path_integral: initial state is not finite");
  if (spec.w.size() != sys.dim) throw DimensionMismatch("path_integral: w has wrong dimension");
  cfg.validate();
  check_eigenpair(dec.A, spec.lambda, spec.w);

  const Eigen::Index n = sys.dim;
  const Vec& xs = dec.x_star;
  const Vec y0 = x0 - xs;

  PathIntegralResult res;
  if (y0.norm() <= cfg.convergence_radius) {
    res.final_state = x0;
    return res;
  }

  const cplx mu = spec.mu();
  const double sgn = spec.sign();
  const Mat& A = dec.A;
  const FieldFn& f = sys.field;

  Vec xbuf(n);
  auto rhs = [&](double t, const Vec& z, Vec& dz) {
    xbuf = xs + z.head(n);
    const Vec fx = f(xbuf);
    dz.resize(n + 2);
    dz.head(n) = sgn * fx;
    const Vec fn = fx - A * z.head(n);
    const cplx integrand = sgn * std::exp(-mu * t) * bilinear(spec.w, fn);
    dz[n] = integrand.real();
    dz[n + 1] = integrand.imag();
  };

  detail::TailMonitor tail(spec.decay_rate, cfg.atol);
  {
    Vec dz0(n + 2);
    Vec z0 = Vec::Zero(n + 2);
    z0.head(n) = y0;
    rhs(0.0, z0, dz0);
    tail.push(std::hypot(dz0[n], dz0[n + 1]));
  }

  IntegralStatus status = IntegralStatus::Truncated;
  double tail_now = std::numeric_limits<double>::infinity();
  bool escape_located = false;
  Vec z_escape;
  double t_escape = 0.0;
  auto observer = [&](double t, const Vec& z, const Vec& dz, const detail::DenseStep& dense) {
    tail.push(std::hypot(dz[n], dz[n + 1]));
    tail_now = tail.estimate();
    if (t >= cfg.T_min && tail_now <= cfg.tail_tol) {
      status = IntegralStatus::Converged;
      return true;
    }
    if (t >= cfg.T_max) {
      status = IntegralStatus::Truncated;
      return true;
    }
    if (z.head(n).norm() > cfg.escape_radius) {
      // stop where the interpolant crosses the radius so the stopping point
      // varies smoothly with x0
      if (dense.r1.head(n).norm() <= cfg.escape_radius) {
        double lo = dense.t0, hi = t;
        for (int it = 0; it < 60 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
          const double mid = 0.5 * (lo + hi);
          (dense.at(mid).head(n).norm() > cfg.escape_radius ? hi : lo) = mid;
        }
        t_escape = hi;
        z_escape = dense.at(hi);
        escape_located = true;
      }
      status = tail_now <= cfg.escape_tail_tol ? IntegralStatus::Truncated : IntegralStatus::Escaped;
      return true;
    }
    return false;
  };

  Vec z = Vec::Zero(n + 2);
  z.head(n) = y0;
  double t = 0.0;
  const auto outcome = detail::dopri5(rhs, z, t, cfg.T_max, cfg, observer);
  if (outcome == detail::LoopOutcome::StepFailure) status = IntegralStatus::StepFailure;
  if (escape_located) {
    z = z_escape;
    t = t_escape;
  }

  res.value = cplx{z[n], z[n + 1]};
  res.T_used = t;
  res.tail_estimate = tail_now;
  res.final_state = xs + z.head(n);
  res.status = status;
  return res;
}

/// |g(T) - (e^{-mu T} w^T (s_T - x*) - w^T (x0 - x*))| / (1 + |w^T (x0 - x*)|)
inline double identity_residual(const PathIntegralResult& r, const PathIntegralSpec& spec, const Vec& x_star,
                                const Vec& x0) {
  const cplx lin0 = bilinear(spec.w, x0 - x_star);
  const cplx linT = bilinear(spec.w, r.final_state - x_star);
  const cplx expected = std::exp(-spec.mu() * r.T_used) * linT - lin0;
  return std::abs(r.value - expected) / (1.0 + std::abs(lin0));
}

inline double accumulator_identity_residual(const Decomposition& dec, const SystemInstance& sys,
                                            const PathIntegralSpec& spec, const Vec& x0,
                                            const IntegratorConfig& cfg) {
  const auto r = path_integral(dec, sys, spec, x0, cfg);
  return identity_residual(r, spec, dec.x_star, x0);
}

}  // namespace koopman
