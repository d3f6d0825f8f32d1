#include "koopman/eigfn.hpp"
#include "koopman/flow.hpp"
#include "koopman/systems.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace koopman;
using Catch::Matchers::WithinAbs;

namespace {

Vec v(std::initializer_list<double> xs) {
  Vec out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out[i++] = x;
  return out;
}

SystemInstance linear_decay() {
  return parse_polynomial(std::string_view(R"({"dim":1,"equations":[[{"c":-1,"e":[1]}]]})"));
}

SystemInstance linear_2d() {
  return parse_polynomial(std::string_view(
      R"({"dim":2,"equations":[[{"c":-1,"e":[1,0]},{"c":0.5,"e":[0,1]}],[{"c":-2,"e":[0,1]}]]})"));
}

PrincipalEigenfunction make(const SystemInstance& sys, const Vec& x, Eigen::Index idx, const IntegratorConfig& cfg = {}) {
  return build(sys, verify_equilibrium(sys, x), idx, cfg);
}

PathIntegralResult run(const PrincipalEigenfunction& ef, const Vec& x) {
  return path_integral(ef.decomposition, ef.system, ef.spec(), x, ef.cfg);
}

}  // namespace

TEST_CASE("integrate a linear decay") {
  const auto traj = integrate(linear_decay(), v({1.0}), 1.0, Direction::Forward, {});
  CHECK(traj.status == TrajectoryStatus::Completed);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.states.front()[0] == 1.0);
  CHECK_THAT(traj.times.back(), WithinAbs(1.0, 1e-15));
  CHECK_THAT(traj.final_state()[0], WithinAbs(std::exp(-1.0), 1e-7));
  for (std::size_t i = 1; i < traj.times.size(); ++i) CHECK(traj.times[i] > traj.times[i - 1]);
}

TEST_CASE("Duffing forward trajectory settles at (1,0)") {
  // The focus contracts like e^{-0.25 t}: ~3e-3 remains at T = 20.
  const auto sys = make_duffing(0.5);
  CHECK((flow_map(sys, v({0.5, 0.5}), 20.0, Direction::Forward, {}) - v({1.0, 0.0})).norm() <= 1e-2);
  CHECK((flow_map(sys, v({0.5, 0.5}), 40.0, Direction::Forward, {}) - v({1.0, 0.0})).norm() <= 1e-3);
}

TEST_CASE("reversed anti-stable example1 returns to the origin") {
  const auto xT = flow_map(make_example1(1.0), v({0.9}), 10.0, Direction::Reversed, {});
  CHECK(std::abs(xT[0]) <= 1e-4);
}

TEST_CASE("integrate reports escape and argument errors") {
  IntegratorConfig cfg;
  cfg.escape_radius = 10.0;
  const auto traj = integrate(make_example1(1.0), v({1.5}), 10.0, Direction::Reversed, cfg);
  CHECK(traj.status == TrajectoryStatus::Escaped);
  CHECK(traj.final_state().norm() > 10.0);
  CHECK_THROWS_AS(flow_map(make_example1(1.0), v({1.5}), 10.0, Direction::Reversed, cfg), EvaluationFailed);
  CHECK_THROWS(integrate(linear_decay(), v({1.0}), 0.0, Direction::Forward, {}));
  CHECK_THROWS(integrate(linear_decay(), v({std::nan("")}), 1.0, Direction::Forward, {}));
}

TEST_CASE("integrate reports step failure on finite-time blow-up") {
  // x' = x^2 from 1 blows up at t = 1.
  const auto sys = parse_polynomial(std::string_view(R"({"dim":1,"equations":[[{"c":1,"e":[2]}]]})"));
  IntegratorConfig cfg;
  cfg.escape_radius = 1e300;
  const auto traj = integrate(sys, v({1.0}), 2.0, Direction::Forward, cfg);
  CHECK(traj.status != TrajectoryStatus::Completed);
}

TEST_CASE("IntegratorConfig validation") {
  IntegratorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.T_min = 60.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.rtol = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("path integral of a linear system vanishes") {
  // The identity residual measures trajectory error only; tight tolerances put it below 1e-12.
  IntegratorConfig tight;
  tight.rtol = 1e-12;
  tight.atol = 1e-14;
  const auto ef = make(linear_2d(), v({0.0, 0.0}), 0, tight);
  for (const auto& x : {v({0.3, -0.4}), v({1.0, 1.0})}) {
    const auto r = run(ef, x);
    CHECK(r.status == IntegralStatus::Converged);
    CHECK(std::abs(r.value) == 0.0);
    CHECK(accumulator_identity_residual(ef.decomposition, ef.system, ef.spec(), x, ef.cfg) <= 1e-12);
  }
}

TEST_CASE("path integral for example1 matches the analytic nonlinear part") {
  const double expected = 0.5 / std::sqrt(0.75) - 0.5;
  const auto fwd = run(make(make_example1(-1.0), v({0.0}), 0), v({0.5}));
  CHECK(fwd.status == IntegralStatus::Converged);
  CHECK_THAT(fwd.value.real(), WithinAbs(expected, 1e-6));
  CHECK_THAT(fwd.value.real(), WithinAbs(0.077350, 1e-6));

  const auto anti = make(make_example1(1.0), v({0.0}), 0);
  CHECK(anti.direction() == Direction::Reversed);
  const auto rev = run(anti, v({0.5}));
  CHECK(rev.status == IntegralStatus::Converged);
  CHECK_THAT(rev.value.real(), WithinAbs(expected, 1e-6));
  CHECK(std::abs(rev.value.imag()) == 0.0);
}

TEST_CASE("reversed mode equals forward mode on the reversed field") {
  const auto fwd = run(make(make_example1(-1.0), v({0.0}), 0), v({0.5}));
  const auto rev = run(make(make_example1(1.0), v({0.0}), 0), v({0.5}));
  CHECK(std::abs(fwd.value - rev.value) <= 1e-10);
}

TEST_CASE("tail estimate bounds converged results") {
  const auto ef = make(make_example1(-1.0), v({0.0}), 0);
  const auto r = run(ef, v({0.8}));
  CHECK(r.status == IntegralStatus::Converged);
  CHECK(r.tail_estimate <= ef.cfg.tail_tol);
  CHECK(r.T_used >= ef.cfg.T_min);
}

TEST_CASE("path integral at the equilibrium is zero") {
  const auto ef = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  const auto r = run(ef, v({1.0, 0.0}));
  CHECK(r.status == IntegralStatus::Converged);
  CHECK(std::abs(r.value) == 0.0);
}

TEST_CASE("path integral rejects a non-eigenpair") {
  const auto ef = make(make_example1(-1.0), v({0.0}), 0);
  auto spec = ef.spec();
  spec.lambda = cplx(-2.0, 0.0);
  CHECK_THROWS_AS(path_integral(ef.decomposition, ef.system, spec, v({0.5}), ef.cfg), NonEigenpair);
}

TEST_CASE("accumulator identity on example1 and Duffing") {
  const auto e1 = make(make_example1(-1.0), v({0.0}), 0);
  CHECK(accumulator_identity_residual(e1.decomposition, e1.system, e1.spec(), v({0.5}), e1.cfg) <= 1e-6);

  const auto duf = make(make_duffing(0.5), v({0.0, 0.0}), 0);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 30; ++k) {
    const Vec x = v({u(rng), u(rng)});
    CHECK(accumulator_identity_residual(duf.decomposition, duf.system, duf.spec(), x, duf.cfg) <= 1e-6);
  }
}

TEST_CASE("path integral is deterministic") {
  const auto ef = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  const auto a = run(ef, v({1.3, 0.2}));
  const auto b = run(ef, v({1.3, 0.2}));
  CHECK(a.value == b.value);
  CHECK(a.T_used == b.T_used);
  CHECK(a.final_state == b.final_state);
  CHECK(a.status == b.status);
}

TEST_CASE("halving tolerances changes a converged value by less than 10x the tolerance") {
  IntegratorConfig cfg;
  const auto ef = make(make_example1(-1.0), v({0.0}), 0, cfg);
  IntegratorConfig fine = cfg;
  fine.rtol /= 2.0;
  fine.atol /= 2.0;
  const auto a = run(ef, v({0.7}));
  const auto b = path_integral(ef.decomposition, ef.system, ef.spec(), v({0.7}), fine);
  REQUIRE(a.status == IntegralStatus::Converged);
  REQUIRE(b.status == IntegralStatus::Converged);
  CHECK(std::abs(a.value - b.value) <= 10.0 * cfg.rtol);
}

TEST_CASE("escaped saddle integrals are flagged and still satisfy the identity") {
  IntegratorConfig cfg;
  cfg.escape_tail_tol = 0.0;
  const auto ef = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 0, cfg);
  const auto r = run(ef, v({0.3, 0.4}));
  CHECK(r.status == IntegralStatus::Escaped);
  CHECK((r.final_state - ef.x_star()).norm() > cfg.escape_radius);
  CHECK(identity_residual(r, ef.spec(), ef.x_star(), v({0.3, 0.4})) <= 1e-6);
}

TEST_CASE("escape after the tail has decayed is a usable truncation") {
  IntegratorConfig cfg;
  cfg.escape_radius = 1e4;
  cfg.escape_tail_tol = 1e-3;
  const auto ef = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 0, cfg);
  const auto r = run(ef, v({0.3, 0.4}));
  CHECK(r.status == IntegralStatus::Truncated);
  CHECK(r.tail_estimate <= 1e-3);
}

TEST_CASE("rounding-level integrand does not block the tail") {
  // y1 = x1 - x2^2 = 0, so h vanishes along the trajectory
  IntegratorConfig cfg;
  cfg.escape_radius = 1e4;
  cfg.escape_tail_tol = 1e-3;
  const auto ef = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 0, cfg);
  const auto r = run(ef, v({0.04, -0.2}));
  CHECK(is_usable(r.status));
  CHECK(std::abs(r.value) <= 1e-6);

  detail::TailMonitor noisy(1.0, 1e-10);
  detail::TailMonitor strict(1.0);
  for (int k = 0; k < 30; ++k) {
    const double m = k % 2 ? 1e-13 : 1e-12 * (k + 1);
    noisy.push(m);
    strict.push(m);
  }
  CHECK(noisy.estimate() <= 1e-9);
  CHECK(std::isinf(strict.estimate()));
}

TEST_CASE("tail_decay_rate follows the mode") {
  const auto stable = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  CHECK_THAT(stable.spec().decay_rate, WithinAbs(0.25, 1e-12));
  const auto saddle = make(make_duffing(0.5), v({0.0, 0.0}), 0);
  CHECK_THAT(saddle.spec().decay_rate, WithinAbs(saddle.lambda.real(), 1e-12));
}
