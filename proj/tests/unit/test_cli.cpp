#include "koopman/eigfn.hpp"
#include "koopman/io.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

using namespace koopman;
using nlohmann::json;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "koopman_test_cli";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

Outcome cli(const std::string& args, const std::string& env = "") {
  const auto out = path("stdout.txt");
  const auto err = path("stderr.txt");
  const std::string cmd = env + " '" + std::string(KOOPMAN_CLI) + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = io::read_file(out);
  o.err = io::read_file(err);
  return o;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const char* kLinear = R"({"dim":2,"equations":[[{"c":-1,"e":[1,0]}],[{"c":-2,"e":[0,1]}]]})";
const char* kGapViolated = R"({"dim":2,"equations":[[{"c":-1,"e":[1,0]}],[{"c":-3,"e":[0,1]},{"c":1,"e":[2,0]}]]})";

}  // namespace

TEST_CASE("analyze Duffing origin") {
  const auto o = cli("analyze --system duffing --param delta=0.5 --eq 0,0");
  REQUIRE(o.code == 0);
  const auto j = json::parse(o.out);
  CHECK(j["classification"] == "Saddle");
  CHECK(j["hyperbolic"] == true);
  CHECK_THAT(j["eigenvalues"][0]["lambda"]["re"].get<double>(), WithinAbs(0.78, 0.01));
  CHECK(j["eigenvalues"][0]["condition"]["mode"] == "SaddleForward");
  CHECK(j["A"].size() == 2);
}

TEST_CASE("analyze two-link arm") {
  const auto o = cli("analyze --system twolink --eq 0,0,0,0");
  REQUIRE(o.code == 0);
  const auto j = json::parse(o.out);
  CHECK(j["classification"] == "Stable");
  CHECK_THAT(j["eigenvalues"][0]["lambda"]["re"].get<double>(), WithinAbs(-0.23, 0.02));
  CHECK_THAT(std::abs(j["eigenvalues"][0]["lambda"]["im"].get<double>()), WithinAbs(2.29, 0.02));
  CHECK_THAT(j["eigenvalues"][2]["lambda"]["re"].get<double>(), WithinAbs(-0.32, 0.02));
  CHECK_THAT(std::abs(j["eigenvalues"][2]["lambda"]["im"].get<double>()), WithinAbs(5.32, 0.02));
}

TEST_CASE("analyze errors and warnings use the exit-code contract") {
  CHECK(cli("analyze --system lorenz").code == 1);
  CHECK(cli("analyze --system duffing").code == 1);
  CHECK(cli("analyze --system duffing --param delta").code == 1);
  CHECK(cli("analyze --system duffing --param delta=0.5 --eq 0.5").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("").code == 1);

  io::write_file(path("gap.json"), kGapViolated);
  const auto o = cli("analyze --system '" + path("gap.json") + "'");
  CHECK(o.code == 2);
  CHECK(json::parse(o.out)["eigenvalues"][1]["condition"]["satisfied"] == false);
  CHECK(cli("eval --system '" + path("gap.json") + "' --lambda-index 1 --point 0.1,0.1").code == 2);
  CHECK(cli("eval --system '" + path("gap.json") + "' --lambda-index 0 --point 0.1,0.1").code == 0);
}

TEST_CASE("eval example1 on 181 nodes") {
  const auto out = path("ex1.csv");
  const auto o = cli("eval --system example1 --param alpha=-1 --grid -0.9:0.9:181 --out '" + out + "'");
  REQUIRE(o.code == 0);
  const auto text = io::read_file(out);
  CHECK(count_lines(text) == 182);
  CHECK(text.rfind("x1,phi_re,phi_im,status\n", 0) == 0);
}

TEST_CASE("eval at the equilibrium gives zero") {
  const auto o = cli("eval --system duffing --param delta=0.5 --eq 1,0 --point 1,0 --format json");
  REQUIRE(o.code == 0);
  const auto j = json::parse(o.out);
  CHECK(j[0]["phi"]["re"] == 0.0);
  CHECK(j[0]["phi"]["im"] == 0.0);
  CHECK(j[0]["status"] == "Converged");
}

TEST_CASE("eval example2 lambda2 grid matches the analytic form") {
  const auto cfg = path("ex2.json");
  io::write_file(cfg, R"({"system":"example2","params":{"lambda1":-1,"lambda2":3},"lambda_index":0,
    "integrator":{"escape_radius":1e4,"escape_tail_tol":1e-3},"grid":"-0.5:0.5:11,-0.5:0.5:11",
    "output":{"format":"json"}})");
  const auto o = cli("eval --config '" + cfg + "'");
  REQUIRE(o.code == 0);
  const auto j = json::parse(o.out);
  std::vector<cplx> got;
  std::vector<cplx> ref;
  for (std::size_t i = 0; i < j["phi_re"].size(); ++i) {
    const double a = -0.5 + 0.1 * static_cast<double>(i / 11);
    const double b = -0.5 + 0.1 * static_cast<double>(i % 11);
    REQUIRE(j["status"][i] != "Escaped");
    got.emplace_back(j["phi_re"][i].get<double>(), j["phi_im"][i].get<double>());
    ref.emplace_back(-a * a + b + 2 * a * b * b - b * b * b * b, 0.0);
  }
  const cplx c = calibrate_scale(got, ref);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += std::norm(c * got[i] - ref[i]);
    den += std::norm(ref[i]);
  }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("manifold without a sign change writes an empty polyline file") {
  io::write_file(path("linear.json"), kLinear);
  const auto out = path("empty.json");
  const auto o = cli("manifold --system '" + path("linear.json") + "' --grid 0.2:1:5,-1:1:5 --format json --out '" + out + "'");
  REQUIRE(o.code == 0);
  CHECK(json::parse(io::read_file(out))["polylines"].empty());
}

TEST_CASE("manifold of the Duffing saddle passes near the origin") {
  const auto o = cli("manifold --system duffing --param delta=0.5 --grid -2:2:21,-2:2:21 --refine --workers 2");
  REQUIRE(o.code == 0);
  CHECK(o.out.rfind("polyline,x1,x2\n", 0) == 0);
  CHECK(count_lines(o.out) > 20);
  CHECK(cli("manifold --system duffing --param delta=0.5 --grid -2:2:21").code == 1);
}

TEST_CASE("lyapunov grid") {
  const auto o = cli("lyapunov --system duffing --param delta=0.5 --eq 1,0 --grid 0.5:1.5:5,-0.5:0.5:5");
  REQUIRE(o.code == 0);
  CHECK(count_lines(o.out) == 26);
  CHECK(cli("lyapunov --system duffing --param delta=0.5 --eq 0,0 --grid -1:1:3,-1:1:3").code == 1);
}

TEST_CASE("dataset command") {
  const auto a = path("ds_a.csv");
  const auto b = path("ds_b.csv");
  const std::string base = "dataset --system example1 --param alpha=-1 --domain -0.9:0.9 --count 50 --seed 4 ";
  REQUIRE(cli(base + "--out '" + a + "'").code == 0);
  REQUIRE(cli(base + "--workers 3 --out '" + b + "'").code == 0);
  CHECK(io::read_file(a) == io::read_file(b));
  CHECK(io::read_file(a + ".meta.json") == io::read_file(b + ".meta.json"));
  CHECK(count_lines(io::read_file(a)) == 51);
  CHECK(json::parse(io::read_file(a + ".meta.json"))["sampling"]["seed"] == 4);

  CHECK(cli("dataset --system example1 --param alpha=-1 --count 0 --out '" + path("zero.csv") + "'").code == 1);
  CHECK_FALSE(fs::exists(path("zero.csv")));
  CHECK(cli("dataset --system example1 --param alpha=-1 --count 5").code == 1);
  CHECK(cli("dataset --system example1 --param alpha=-1 --domain -0.9:0.9 --grid-counts 4 --out '" + path("g.csv") + "'").code == 0);
  CHECK(count_lines(io::read_file(path("g.csv"))) == 5);
}

TEST_CASE("schema violations stop before any computation") {
  const auto cfg = path("bad.json");
  io::write_file(cfg, R"({"system":"duffing","params":{"delta":0.5},"unknown_key":1})");
  const auto out = path("bad_out.csv");
  const auto o = cli("eval --config '" + cfg + "' --grid -1:1:3,-1:1:3 --out '" + out + "'");
  CHECK(o.code == 1);
  CHECK_THAT(o.err, ContainsSubstring("unknown_key"));
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("outputs are idempotent") {
  const std::string args = "eval --system duffing --param delta=0.5 --eq 1,0 --grid 0.5:1.5:6,-0.5:0.5:6 --format json";
  CHECK(cli(args).out == cli(args + " --workers 1").out);
}

TEST_CASE("help documents every command's flags") {
  for (const std::string cmd : {"analyze", "eval", "manifold", "lyapunov", "dataset"}) {
    const auto o = cli(cmd + " --help");
    CHECK(o.code == 0);
    for (const std::string flag : {"--system", "--param", "--eq", "--workers", "--config", "--out", "--format"}) {
      CHECK_THAT(o.out, ContainsSubstring(flag));
    }
  }
  CHECK_THAT(cli("eval --help").out, ContainsSubstring("--lambda-index"));
  CHECK_THAT(cli("manifold --help").out, ContainsSubstring("--level"));
  CHECK_THAT(cli("dataset --help").out, ContainsSubstring("--seed"));
  CHECK_THAT(cli("verify --help").out, ContainsSubstring("--suite"));
}

TEST_CASE("KOOPMAN_LOG controls diagnostics") {
  const std::string args = "analyze --system duffing --param delta=0.5";
  CHECK_THAT(cli(args, "KOOPMAN_LOG=info").err, ContainsSubstring("equilibrium"));
  CHECK(cli(args, "KOOPMAN_LOG=error").err.empty());
  const auto o = cli(args, "KOOPMAN_LOG=loud");
  CHECK(o.code == 0);
  CHECK_THAT(o.err, ContainsSubstring("KOOPMAN_LOG"));
}

TEST_CASE("schema command prints the published schema") {
  const auto o = cli("schema");
  REQUIRE(o.code == 0);
  const auto file = io::parse_json(io::read_file(std::string(KOOPMAN_SOURCE_DIR) + "/schema/run_config.schema.json"), "schema");
  CHECK(json::parse(o.out) == file);
}

TEST_CASE("verify emits a scorecard") {
  const auto out = path("card.json");
  const auto o = cli("verify --suite oracles --out '" + out + "'");
  const auto card = json::parse(io::read_file(out));
  CHECK(card["suite"] == "oracles");
  CHECK(card["criteria"].size() == 2);
  CHECK(o.code == (card["passed"] == true ? 0 : 1));
  CHECK_THAT(o.err, ContainsSubstring("[8]"));
  CHECK(cli("verify --suite nonsense").code == 1);
}
