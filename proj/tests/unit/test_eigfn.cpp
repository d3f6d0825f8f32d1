#include "koopman/acceptance.hpp"
#include "koopman/eigfn.hpp"

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

PrincipalEigenfunction make(const SystemInstance& sys, const Vec& x, Eigen::Index idx, const IntegratorConfig& cfg = {}) {
  return build(sys, verify_equilibrium(sys, x), idx, cfg);
}

SystemInstance linear_2d() {
  return parse_polynomial(std::string_view(
      R"({"dim":2,"equations":[[{"c":-1,"e":[1,0]},{"c":0.5,"e":[0,1]}],[{"c":-1.5,"e":[0,1]}]]})"));
}

double phi2(const Vec& x) { return -x[0] * x[0] + x[1] + 2.0 * x[0] * x[1] * x[1] - std::pow(x[1], 4); }

}  // namespace

TEST_CASE("build selects the evaluation mode") {
  const auto duf0 = make(make_duffing(0.5), v({0.0, 0.0}), 0);
  CHECK(duf0.mode == EvaluationMode::SaddleForward);
  CHECK_THAT(duf0.lambda.real(), WithinAbs(0.7808, 1e-4));

  const auto duf1 = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  CHECK(duf1.mode == EvaluationMode::StableForward);
  CHECK_THAT(duf1.condition.condition_value, WithinAbs(-0.25, 1e-12));

  CHECK(make(make_example1(1.0), v({0.0}), 0).mode == EvaluationMode::AntiStableReverse);
  CHECK(make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 1).mode == EvaluationMode::SaddleReverse);

  const Mat A = duf1.decomposition.A;
  CHECK((duf1.w.transpose() * A.cast<cplx>() - duf1.lambda * duf1.w.transpose()).norm() <= 1e-8);
}

TEST_CASE("build rejects violated gaps and bad indices") {
  const auto sys = parse_polynomial(std::string_view(
      R"({"dim":2,"equations":[[{"c":-1,"e":[1,0]}],[{"c":-3,"e":[0,1]},{"c":1,"e":[2,0]}]]})"));
  const auto eq = verify_equilibrium(sys, v({0.0, 0.0}));
  CHECK_NOTHROW(build(sys, eq, 0));
  try {
    build(sys, eq, 1);
    FAIL("expected ConditionViolated");
  } catch (const ConditionViolated& e) {
    CHECK_FALSE(e.report().satisfied);
    CHECK_THAT(e.report().condition_value, WithinAbs(1.0, 1e-12));
  }
  CHECK_THROWS_AS(build(sys, eq, 2), std::out_of_range);

  const auto center = parse_polynomial(std::string_view(
      R"({"dim":2,"equations":[[{"c":1,"e":[0,1]}],[{"c":-1,"e":[1,0]}]]})"));
  CHECK_THROWS_AS(build(center, verify_equilibrium(center, v({0.0, 0.0})), 0), NotHyperbolic);
}

TEST_CASE("evaluate example1 against the analytic eigenfunction") {
  const auto ef = make(make_example1(-1.0), v({0.0}), 0);
  const auto ev = evaluate(ef, v({0.5}));
  CHECK(ev.valid());
  CHECK_THAT(ev.phi.real(), WithinAbs(0.5 / std::sqrt(0.75), 1e-6));
  CHECK_THAT(ev.phi.real(), WithinAbs(0.577350, 1e-6));
  CHECK(ev.phi - ev.h == bilinear(ef.w, v({0.5})));
}

TEST_CASE("evaluate at the equilibrium returns zero") {
  for (const auto& ef : {make(make_duffing(0.5), v({1.0, 0.0}), 0), make(make_example1(1.0), v({0.0}), 0)}) {
    const auto ev = evaluate(ef, ef.x_star());
    CHECK(ev.phi == cplx(0.0, 0.0));
    CHECK(ev.h == cplx(0.0, 0.0));
  }
}

TEST_CASE("example2 lambda2 eigenfunction matches after calibration") {
  const auto ef = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 0, acceptance::example2_config());
  REQUIRE(ef.mode == EvaluationMode::SaddleForward);
  std::vector<std::pair<Vec, cplx>> ref;
  for (double a : {-0.4, -0.1, 0.2, 0.45}) {
    for (double b : {-0.3, 0.1, 0.35}) ref.emplace_back(v({a, b}), cplx(phi2(v({a, b})), 0.0));
  }
  const cplx c = calibrate_scale(ef, ref);
  const auto ev = evaluate_valid(ef, v({0.3, 0.4}));
  CHECK_THAT((c * ev.phi).real(), WithinAbs(0.3804, 1e-4));
  CHECK_THAT((c * ev.phi).imag(), WithinAbs(0.0, 1e-6));
}

TEST_CASE("example2 lambda1 reversed integral is reported as not usable") {
  // Along the reversed flow h = -x2^2 grows faster than the exp(-t) weight decays.
  const auto ef = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 1, acceptance::example2_config());
  const auto ev = evaluate(ef, v({0.2, 0.2}));
  CHECK_FALSE(ev.valid());
  CHECK_THROWS_AS(evaluate_valid(ef, v({0.2, 0.2})), EvaluationFailed);
  CHECK_THROWS_AS(pde_residual(ef, v({0.2, 0.2})), NonConvergedNeighbor);
}

TEST_CASE("finite-horizon evaluation") {
  const auto lin = make(linear_2d(), v({0.0, 0.0}), 0);
  CHECK(evaluate_finite_horizon(lin, v({0.3, 0.7}), 3.0) == bilinear(lin.w, v({0.3, 0.7})));

  const auto ef = make(make_example1(-1.0), v({0.0}), 0);
  const cplx a = evaluate_finite_horizon(ef, v({0.5}), 5.0);
  const cplx b = evaluate_finite_horizon(ef, v({0.5}), 10.0);
  CHECK(std::abs(a - b) < 1e-6 * 10.0);
  CHECK_THAT(evaluate_finite_horizon(ef, v({0.5}), 40.0).real(), WithinAbs(0.577350, 1e-6));
  CHECK_THROWS(evaluate_finite_horizon(ef, v({0.5}), 0.0));
}

TEST_CASE("eigen property residual") {
  IntegratorConfig tight;
  tight.rtol = 1e-12;
  tight.atol = 1e-14;
  const auto lin = make(linear_2d(), v({0.0, 0.0}), 1, tight);
  CHECK(eigen_property_residual(lin, v({0.4, -0.3}), 0.5) <= 1e-10);

  const auto duf = make(make_duffing(0.5), v({0.0, 0.0}), 0);
  CHECK(eigen_property_residual(duf, v({0.3, -0.2}), 0.5) <= 1e-4);

  const auto ex2 = make(make_example2(-1.0, 3.0), v({0.0, 0.0}), 0, acceptance::example2_config());
  CHECK(eigen_property_residual(ex2, v({0.2, 0.1}), 0.3) <= 1e-4);

  const auto foc = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double tau : {0.25, 0.5, 1.0}) {
    for (int k = 0; k < 5; ++k) CHECK(eigen_property_residual(foc, v({1.0 + u(rng), u(rng)}), tau) <= 1e-3);
  }
}

TEST_CASE("PDE residual") {
  const auto lin = make(linear_2d(), v({0.0, 0.0}), 0);
  CHECK(pde_residual(lin, v({0.3, 0.2})) == 0.0);
  CHECK(pde_residual(make(make_example1(-1.0), v({0.0}), 0), v({0.5})) <= 1e-3);
  CHECK(pde_residual(make(make_example1(1.0), v({0.0}), 0), v({-0.3})) <= 1e-3);
  CHECK_THROWS(pde_residual(lin, v({0.3, 0.2}), 0.0));
}

TEST_CASE("Laplace average oracle") {
  const auto lin = make(linear_2d(), v({0.0, 0.0}), 0);
  for (double T : {0.5, 3.0, 10.0}) {
    CHECK(std::abs(laplace_average(lin, v({0.3, -0.6}), T) - bilinear(lin.w, v({0.3, -0.6}))) <= 1e-9);
  }
  const auto ef = make(make_example1(-1.0), v({0.0}), 0);
  CHECK_THAT(laplace_average(ef, v({0.5}), 10.0).real(), WithinAbs(0.577350, 1e-4));

  const auto duf = make(make_duffing(0.5), v({0.0, 0.0}), 0);
  const auto ev = evaluate(duf, v({0.3, -0.2}));
  CHECK(std::abs(laplace_average(duf, v({0.3, -0.2}), 15.0) - ev.phi) <= 1e-4);
}

TEST_CASE("calibrate_scale") {
  const std::vector<cplx> a{{1, 2}, {-0.5, 0.25}, {3, 0}};
  CHECK(std::abs(calibrate_scale(a, a) - cplx(1.0, 0.0)) <= 1e-15);
  std::vector<cplx> twice;
  for (auto z : a) twice.push_back(2.0 * z);
  CHECK(std::abs(calibrate_scale(twice, a) - cplx(0.5, 0.0)) <= 1e-15);
  const std::vector<cplx> zeros(3, cplx(0.0, 0.0));
  CHECK_THROWS_AS(calibrate_scale(zeros, a), DegenerateReference);
}

TEST_CASE("conjugate symmetry and scaling covariance") {
  const auto ef = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  REQUIRE(ef.lambda.imag() != 0.0);
  const auto conj = ef.conjugated();
  const cplx c(0.7, -1.9);
  const auto scaled = ef.rescaled(c);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int k = 0; k < 10; ++k) {
    const Vec x = v({1.0 + u(rng), u(rng)});
    const auto a = evaluate(ef, x);
    const auto b = evaluate(conj, x);
    CHECK(std::abs(b.phi - std::conj(a.phi)) <= 1e-10);
    const auto s = evaluate(scaled, x);
    CHECK(std::abs(s.phi - c * a.phi) <= 1e-12 * std::abs(c * a.phi));
    CHECK(std::abs(s.h - c * a.h) <= 1e-12 * std::max(1.0, std::abs(c * a.h)));
  }
}

TEST_CASE("boundary term decays for stable evaluations") {
  const auto ef = make(make_duffing(0.5), v({1.0, 0.0}), 0);
  const Vec x = v({1.3, 0.2});
  const auto full = evaluate(ef, x);
  const double T = full.T_used;
  std::vector<double> boundary;
  for (double t : {0.75 * T, 0.85 * T, 0.95 * T}) boundary.push_back(std::abs(full.phi - evaluate_finite_horizon(ef, x, t)));
  CHECK(boundary[1] < boundary[0]);
  CHECK(boundary[2] < boundary[1]);
}
