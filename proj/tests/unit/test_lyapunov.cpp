#include "koopman/lyapunov.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace koopman;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec v(std::initializer_list<double> xs) {
  Vec out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out[i++] = x;
  return out;
}

CVec lambdas(std::initializer_list<cplx> ls) {
  CVec out(static_cast<Eigen::Index>(ls.size()));
  Eigen::Index i = 0;
  for (auto l : ls) out[i++] = l;
  return out;
}

LyapunovModel duffing_model() {
  const auto sys = make_duffing(0.5);
  return build_lyapunov(sys, verify_equilibrium(sys, v({1.0, 0.0})));
}

}  // namespace

TEST_CASE("solve_P closed forms") {
  const CMat P1 = solve_P(lambdas({{-1.0, 0.0}}), CMat::Identity(1, 1));
  CHECK_THAT(P1(0, 0).real(), WithinAbs(0.5, 1e-15));

  const CMat P2 = solve_P(lambdas({{-0.25, 1.39}, {-0.25, -1.39}}), CMat::Identity(2, 2));
  CHECK_THAT(P2(0, 0).real(), WithinAbs(2.0, 1e-12));
  CHECK_THAT(P2(1, 1).real(), WithinAbs(2.0, 1e-12));
  CHECK(std::abs(P2(0, 1)) == 0.0);
}

TEST_CASE("solve_P satisfies the Lyapunov equation for a general Q") {
  const CVec L = lambdas({{-0.5, 2.0}, {-0.5, -2.0}, {-1.5, 0.0}});
  CMat B(3, 3);
  B << cplx(1, 0), cplx(0.2, 0.1), cplx(0, 0), cplx(0, 0.3), cplx(1, 0), cplx(0.1, 0), cplx(0.4, 0), cplx(0, 0), cplx(1, -0.2);
  const CMat Q = B.adjoint() * B + CMat::Identity(3, 3);
  const CMat P = solve_P(L, Q);
  const CMat D = L.asDiagonal();
  CHECK((D.adjoint() * P + P * D + Q).norm() <= 1e-10);
  CHECK((P - P.adjoint()).norm() <= 1e-14);
  CHECK(is_hermitian_pd(P));
}

TEST_CASE("solve_P errors") {
  CHECK_THROWS_AS(solve_P(lambdas({{0.1, 0.0}}), CMat::Identity(1, 1)), UnstableLambda);
  CHECK_THROWS_AS(solve_P(lambdas({{0.0, 1.0}}), CMat::Identity(1, 1)), UnstableLambda);
  CMat Q = CMat::Identity(2, 2);
  Q(1, 1) = -1.0;
  CHECK_THROWS_AS(solve_P(lambdas({{-1.0, 0.0}, {-2.0, 0.0}}), Q), IndefiniteResult);
}

TEST_CASE("Duffing (1,0) model structure") {
  const auto m = duffing_model();
  REQUIRE(m.size() == 2);
  CHECK(m.conjugate == std::vector<bool>{false, true});
  CHECK(m.lambda[1] == std::conj(m.lambda[0]));
  CHECK_THAT(m.P(0, 0).real(), WithinAbs(2.0, 1e-12));
  for (const auto& ef : m.eigenfunctions) CHECK(ef.mode == EvaluationMode::StableForward);
}

TEST_CASE("build_lyapunov requires a stable equilibrium") {
  const auto sys = make_duffing(0.5);
  CHECK_THROWS(build_lyapunov(sys, verify_equilibrium(sys, v({0.0, 0.0}))));
}

TEST_CASE("V is zero at the equilibrium and positive nearby") {
  const auto m = duffing_model();
  CHECK(V(m, v({1.0, 0.0})) == 0.0);
  CHECK(V(m, v({1.2, 0.0})) > 0.0);
  CHECK(std::abs(vdot_sample(m, v({1.0, 0.0}))) <= 1e-12);
  CHECK(vdot_sample(m, v({1.3, 0.1})) < 0.0);
}

TEST_CASE("V decreases along trajectories near the Duffing focus") {
  const auto m = duffing_model();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0;
  while (tested < 40) {
    const Vec d = v({u(rng), u(rng)});
    if (d.norm() > 1.0 || d.norm() < 0.1) continue;
    const Vec x = v({1.0, 0.0}) + 0.5 * d;
    CHECK(V(m, x) > 0.0);
    CHECK(vdot_sample(m, x) < 0.0);
    ++tested;
  }
}

TEST_CASE("V reports failed components") {
  const auto m = duffing_model();
  IntegratorConfig cfg;
  cfg.escape_radius = 0.01;
  auto tight = m;
  for (auto& ef : tight.eigenfunctions) ef = ef.with_config(cfg);
  try {
    V(tight, v({1.4, 0.3}));
    FAIL("expected EvaluationFailed");
  } catch (const EvaluationFailed& e) {
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("Escaped"));
  }
}

TEST_CASE("exactness on a linear scalar system") {
  const auto sys = parse_polynomial(std::string_view(R"({"dim":1,"equations":[[{"c":-1,"e":[1]}]]})"));
  const auto m = build_lyapunov(sys, verify_equilibrium(sys, v({0.0})));
  CHECK_THAT(m.P(0, 0).real(), WithinAbs(0.5, 1e-15));
  CHECK_THAT(V(m, v({0.4})), WithinRel(0.08, 1e-12));
  CHECK_THAT(vdot_sample(m, v({0.4})), WithinRel(-0.16, 0.01));
}

TEST_CASE("exactness on a linear planar system: Vdot = -Phi^H Q Phi") {
  const auto sys = parse_polynomial(std::string_view(
      R"({"dim":2,"equations":[[{"c":-0.3,"e":[1,0]},{"c":2,"e":[0,1]}],[{"c":-2,"e":[1,0]},{"c":-0.3,"e":[0,1]}]]})"));
  const auto m = build_lyapunov(sys, verify_equilibrium(sys, v({0.0, 0.0})));
  for (const auto& x : {v({0.4, -0.2}), v({-0.1, 0.7})}) {
    const auto s = eval_phi(m, x);
    const double expected = -(s.phi.adjoint() * m.Q * s.phi)(0, 0).real();
    CHECK_THAT(vdot_sample(m, x), WithinRel(expected, 0.01));
  }
}

TEST_CASE("lyapunov_grid exports V values") {
  const auto m = duffing_model();
  const GridSpec spec{{GridAxis::sweep(0.5, 1.5, 5), GridAxis::sweep(-0.5, 0.5, 5)}};
  const auto f = lyapunov_grid(m, spec, 2);
  REQUIRE(f.values.size() == 25);
  CHECK(f.values[12].real() == 0.0);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(f.usable(i));
    CHECK(f.values[i].imag() == 0.0);
    CHECK(f.values[i].real() >= 0.0);
  }
}
