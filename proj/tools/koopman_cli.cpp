// koopman: command-line front end for eigenfunction analysis, evaluation,
// stable-manifold extraction, Lyapunov grids, datasets and the acceptance suite.

#include "koopman/koopman.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace koopman;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConditionWarning = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("koopman");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("KOOPMAN_LOG")) {
    const std::string v = env;
    static const std::map<std::string, spdlog::level::level_enum> levels{
        {"error", spdlog::level::err}, {"warn", spdlog::level::warn}, {"info", spdlog::level::info}, {"debug", spdlog::level::debug}};
    if (auto it = levels.find(v); it != levels.end()) {
      spdlog::set_level(it->second);
    } else {
      spdlog::warn("KOOPMAN_LOG='{}' is not one of error, warn, info, debug; using warn", v);
    }
  }
}

/// Options common to all subcommands. Values from --config are defaults that
/// explicit flags override.
struct Common {
  std::string config_path;
  std::string system;
  std::vector<std::string> params;
  std::string eq;
  std::optional<int> lambda_index;
  std::optional<unsigned> workers;
  std::string out;
  std::string format;

  json doc = json::object();
};

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (auto part : io::split(s, ',')) {
    try {
      out.push_back(io::parse_double(part, what));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) {
  Vec x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
  return x;
}

void add_common(CLI::App* cmd, Common& c, bool needs_lambda) {
  cmd->add_option("--config", c.config_path, "JSON run configuration (validated against the published schema)");
  cmd->add_option("--system", c.system, "builtin system (example1, example2, duffing, twolink) or a polynomial JSON file");
  cmd->add_option("--param", c.params, "system parameter k=v (repeatable)");
  cmd->add_option("--eq", c.eq, "equilibrium guess v1,..,vn (refined by Newton's method)");
  if (needs_lambda) cmd->add_option("--lambda-index", c.lambda_index, "eigenvalue index, sorted by descending real part");
  cmd->add_option("--workers", c.workers, "worker threads (default: available cores)");
  cmd->add_option("--out", c.out, "output path (default: standard output)");
  cmd->add_option("--format", c.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

/// Loads --config, validates it, and folds command-line flags into it.
void resolve(Common& c) {
  if (!c.config_path.empty()) {
    c.doc = io::parse_json(io::read_file(c.config_path), c.config_path);
    try {
      validate_run_config(c.doc);
    } catch (const ConfigError& e) {
      throw ConfigError(c.config_path + ": " + e.what());
    }
  }
  if (!c.system.empty()) {
    if (std::filesystem::path(c.system).extension() == ".json") {
      c.doc["system"] = io::parse_json(io::read_file(c.system), c.system);
    } else {
      c.doc["system"] = c.system;
    }
  }
  for (const auto& kv : c.params) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos || pos == 0) throw ConfigError("--param expects k=v, got '" + kv + "'");
    try {
      c.doc["params"][kv.substr(0, pos)] = io::parse_double(kv.substr(pos + 1), "--param " + kv);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  if (!c.eq.empty()) c.doc["equilibrium_guess"] = parse_list(c.eq, "--eq");
  if (c.lambda_index) c.doc["lambda_index"] = *c.lambda_index;
  if (c.workers) c.doc["workers"] = *c.workers;
  if (!c.out.empty()) c.doc["output"]["path"] = c.out;
  if (!c.format.empty()) c.doc["output"]["format"] = c.format;
  validate_run_config(c.doc);
  if (!c.doc.contains("system")) throw ConfigError("no system given (use --system or a config file)");
}

unsigned workers_of(const json& doc) { return doc.value("workers", 0u); }

IntegratorConfig integrator_of(const json& doc) {
  return doc.contains("integrator") ? integrator_from_json(doc["integrator"]) : IntegratorConfig{};
}

Equilibrium equilibrium_of(const SystemInstance& sys, const json& doc) {
  Vec guess;
  if (doc.contains("equilibrium_guess")) {
    guess = io::vec_from_json(doc["equilibrium_guess"]);
  } else if (!sys.declared_equilibria.empty()) {
    guess = sys.declared_equilibria.front();
  } else {
    guess = Vec::Zero(sys.dim);
  }
  check_dim(sys, guess);
  const auto eq = refine_equilibrium(sys, guess);
  spdlog::info("equilibrium {} (residual {:.3e})", format_vector(eq.point), eq.residual_norm);
  return eq;
}

std::string format_of(const json& doc, const std::string& fallback = "csv") {
  return doc.contains("output") ? doc["output"].value("format", fallback) : fallback;
}

void emit(const json& doc, const std::string& content) {
  const std::string path = doc.contains("output") ? doc["output"].value("path", std::string()) : std::string();
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    io::write_file(path, content);
    spdlog::info("wrote {}", path);
  }
}

PrincipalEigenfunction eigenfunction_of(const SystemInstance& sys, const Equilibrium& eq, const json& doc) {
  const auto idx = doc.value("lambda_index", 0);
  const auto ef = build(sys, eq, idx, integrator_of(doc));
  spdlog::info("lambda = {}{:+}j, mode {}", ef.lambda.real(), ef.lambda.imag(), to_string(ef.mode));
  if (ef.condition.boundedness_caveat) {
    spdlog::info("saddle mode: boundedness along trajectories is judged per point from the status");
  }
  return ef;
}

GridSpec grid_of(const json& doc, const SystemInstance& sys, const std::vector<std::string>& fixed_flags,
                 const std::string& grid_flag) {
  std::string sweeps = grid_flag.empty() ? doc.value("grid", std::string()) : grid_flag;
  if (sweeps.empty()) throw ConfigError("no grid given (use --grid min:max:count[,...])");
  std::map<std::size_t, double> fixed;
  if (doc.contains("fixed")) {
    for (const auto& [k, v] : doc["fixed"].items()) fixed[static_cast<std::size_t>(std::stoul(k))] = v.get<double>();
  }
  for (const auto& f : fixed_flags) {
    const auto pos = f.find('=');
    if (pos == std::string::npos) throw ConfigError("--fixed expects axis=value, got '" + f + "'");
    std::size_t axis = 0;
    try {
      axis = static_cast<std::size_t>(std::stoul(f.substr(0, pos)));
    } catch (const std::exception&) {
      throw ConfigError("--fixed: bad axis in '" + f + "'");
    }
    try {
      fixed[axis] = io::parse_double(f.substr(pos + 1), "--fixed");
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  return parse_grid(sweeps, fixed, static_cast<std::size_t>(sys.dim));
}

json condition_json(const ConditionReport& r) {
  return {{"mode", std::string(to_string(r.mode))},
          {"condition_value", r.condition_value},
          {"satisfied", r.satisfied},
          {"lambda_max", io::to_json(r.lambda_max)},
          {"boundedness_caveat", r.boundedness_caveat}};
}

// ---- subcommands -------------------------------------------------------------

int cmd_analyze(Common& c) {
  resolve(c);
  const auto sys = system_from_config(c.doc);
  const auto eq = equilibrium_of(sys, c.doc);
  const auto dec = decompose_at(sys, eq);
  const auto s = eig(dec.A);
  const auto cls = classify(s);

  json eigs = json::array();
  bool violated = false;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const auto rep = check_condition(s, i);
    violated = violated || !rep.satisfied;
    eigs.push_back({{"index", i},
                    {"lambda", io::to_json(s.eigenvalues[i])},
                    {"left_vector", io::to_json(s.left(i))},
                    {"right_vector", io::to_json(s.right(i))},
                    {"condition", condition_json(rep)}});
  }
  const json report{{"system", {{"name", sys.name}, {"source", sys.source}}},
                    {"equilibrium", io::to_json(eq.point)},
                    {"residual_norm", eq.residual_norm},
                    {"A", io::to_json(dec.A)},
                    {"hyperbolic", hyperbolicity(s)},
                    {"classification", std::string(to_string(cls))},
                    {"eigenvalues", eigs}};
  emit(c.doc, report.dump(2) + "\n");
  if (violated) {
    spdlog::warn("spectral-gap condition violated for at least one eigenvalue");
    return kExitConditionWarning;
  }
  return kExitOk;
}

std::string points_to_csv(const PrincipalEigenfunction& ef, const std::vector<DatasetRecord>& recs) {
  return dataset_to_csv(recs, ef.system.dim);
}

json points_to_json(const std::vector<DatasetRecord>& recs) {
  json arr = json::array();
  for (const auto& r : recs) {
    arr.push_back({{"x", io::to_json(r.x)},
                   {"phi", {{"re", nullable(r.phi.real())}, {"im", nullable(r.phi.imag())}}},
                   {"h", {{"re", nullable(r.h.real())}, {"im", nullable(r.h.imag())}}},
                   {"status", std::string(to_string(r.status))},
                   {"T_used", nullable(r.T_used)}});
  }
  return arr;
}

struct EvalArgs {
  std::string grid;
  std::vector<std::string> fixed;
  std::vector<std::string> points;
};

int cmd_eval(Common& c, const EvalArgs& a) {
  resolve(c);
  const auto sys = system_from_config(c.doc);
  const auto eq = equilibrium_of(sys, c.doc);
  const auto ef = eigenfunction_of(sys, eq, c.doc);
  const std::string fmt = format_of(c.doc);

  std::vector<Vec> pts;
  for (const auto& p : a.points) pts.push_back(to_vec(parse_list(p, "--point")));
  if (c.doc.contains("points") && a.points.empty()) {
    for (const auto& p : c.doc["points"]) pts.push_back(io::vec_from_json(p));
  }
  if (!pts.empty()) {
    if (!a.grid.empty()) throw ConfigError("give either --grid or --point, not both");
    for (const auto& p : pts) check_dim(sys, p);
    std::vector<DatasetRecord> recs(pts.size());
    parallel_for(pts.size(), workers_of(c.doc), [&](std::size_t i) { recs[i] = make_record(ef, pts[i]); });
    emit(c.doc, fmt == "json" ? points_to_json(recs).dump(1) + "\n" : points_to_csv(ef, recs));
    return kExitOk;
  }

  const auto grid = grid_of(c.doc, sys, a.fixed, a.grid);
  const auto field = eval_grid(ef, grid, workers_of(c.doc));
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < field.values.size(); ++i) flagged += field.usable(i) ? 0 : 1;
  if (flagged) spdlog::warn("{} of {} nodes flagged (Escaped or StepFailure)", flagged, field.values.size());
  emit(c.doc, fmt == "json" ? field_to_json(field).dump(1) + "\n" : field_to_csv(field));
  return kExitOk;
}

struct ManifoldArgs {
  std::string grid;
  std::vector<std::string> fixed;
  std::optional<double> level;
  std::string part;
  bool refine = false;
};

int cmd_manifold(Common& c, ManifoldArgs a) {
  resolve(c);
  const auto sys = system_from_config(c.doc);
  const auto eq = equilibrium_of(sys, c.doc);
  const auto ef = eigenfunction_of(sys, eq, c.doc);
  const auto grid = grid_of(c.doc, sys, a.fixed, a.grid);
  const double level = a.level.value_or(c.doc.value("level", 0.0));
  const auto part = level_part_from_string(a.part.empty() ? c.doc.value("part", std::string("real")) : a.part);
  const bool refine = a.refine || c.doc.value("refine", false);

  const auto field = eval_grid(ef, grid, workers_of(c.doc));
  auto ls = zero_level_set(field, level, part);
  if (refine) refine_level_set(ls, field, ef, 40, workers_of(c.doc));
  if (!ls.skipped_cells.empty()) spdlog::warn("{} cells skipped next to flagged nodes", ls.skipped_cells.size());
  spdlog::info("{} polyline(s), {} vertices", ls.polylines.size(), ls.vertex_count());
  emit(c.doc, format_of(c.doc) == "json" ? level_set_to_json(ls).dump(1) + "\n" : level_set_to_csv(ls));
  return kExitOk;
}

int cmd_lyapunov(Common& c, const EvalArgs& a) {
  resolve(c);
  const auto sys = system_from_config(c.doc);
  const auto eq = equilibrium_of(sys, c.doc);
  const auto model = build_lyapunov(sys, eq, integrator_of(c.doc));
  const auto grid = grid_of(c.doc, sys, a.fixed, a.grid);
  const auto field = lyapunov_grid(model, grid, workers_of(c.doc));
  emit(c.doc, format_of(c.doc) == "json" ? field_to_json(field).dump(1) + "\n" : field_to_csv(field));
  return kExitOk;
}

struct DatasetArgs {
  std::optional<long long> count;
  std::optional<std::uint64_t> seed;
  std::string domain;
  std::string grid_counts;
};

Box domain_of(const SystemInstance& sys, const json& doc, const std::string& flag) {
  if (flag.empty() && !doc.contains("domain")) return sys.domain;
  Box b{Vec(sys.dim), Vec(sys.dim)};
  std::vector<std::pair<double, double>> d;
  if (!flag.empty()) {
    for (auto part : io::split(flag, ',')) {
      const auto f = io::split(part, ':');
      if (f.size() != 2) throw ConfigError("--domain expects lo:hi[,lo:hi...]");
      try {
        d.emplace_back(io::parse_double(f[0], "--domain"), io::parse_double(f[1], "--domain"));
      } catch (const FormatError& e) {
        throw ConfigError(e.what());
      }
    }
  } else {
    for (const auto& p : doc["domain"]) d.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  if (static_cast<Eigen::Index>(d.size()) != sys.dim) throw ConfigError("domain: need one lo:hi pair per dimension");
  for (Eigen::Index k = 0; k < sys.dim; ++k) {
    b.lo[k] = d[static_cast<std::size_t>(k)].first;
    b.hi[k] = d[static_cast<std::size_t>(k)].second;
  }
  return b;
}

int cmd_dataset(Common& c, const DatasetArgs& a) {
  resolve(c);
  if (a.count) c.doc["count"] = *a.count;
  if (a.seed) c.doc["seed"] = *a.seed;
  validate_run_config(c.doc);
  const std::string path = c.doc.contains("output") ? c.doc["output"].value("path", std::string()) : std::string();
  if (path.empty()) throw ConfigError("dataset needs --out");
  if (format_of(c.doc) != "csv") throw ConfigError("datasets are written as CSV with a JSON sidecar");

  const auto sys = system_from_config(c.doc);
  const auto eq = equilibrium_of(sys, c.doc);
  const auto ef = eigenfunction_of(sys, eq, c.doc);
  const Box box = domain_of(sys, c.doc, a.domain);

  Sampling sampling = UniformRandom{c.doc.value("seed", std::uint64_t{0})};
  std::size_t count = 0;
  if (!a.grid_counts.empty()) {
    GridSampling g;
    std::size_t total = 1;
    for (double v : parse_list(a.grid_counts, "--grid-counts")) {
      if (v < 1 || v != std::floor(v)) throw ConfigError("--grid-counts: counts must be positive integers");
      g.counts.push_back(static_cast<std::size_t>(v));
      total *= g.counts.back();
    }
    if (c.doc.contains("count") && c.doc["count"].get<std::size_t>() != total) {
      throw ConfigError("--count does not match the product of --grid-counts");
    }
    count = total;
    sampling = g;
  } else {
    if (!c.doc.contains("count")) throw ConfigError("dataset needs --count");
    count = c.doc["count"].get<std::size_t>();
  }
  const auto ds = generate_dataset(ef, box, count, sampling, workers_of(c.doc));
  write_dataset(ds, path);
  std::size_t flagged = 0;
  for (const auto& r : ds.records) flagged += is_usable(r.status) ? 0 : 1;
  if (flagged) spdlog::warn("{} of {} records flagged", flagged, ds.records.size());
  spdlog::info("wrote {} and {}", path, meta_path(path));
  return kExitOk;
}

int cmd_verify(const std::string& suite_name, const std::string& out, std::optional<unsigned> workers) {
  acceptance::Options opt;
  opt.workers = workers.value_or(0);
  const auto ids = acceptance::suite(suite_name);
  json card{{"suite", suite_name}, {"criteria", json::array()}};
  bool all = true;
  for (int id : ids) {
    const auto r = acceptance::run(id, opt);
    std::cerr << acceptance::format_line(r) << "\n";
    auto j = acceptance::to_json(r);
    j.erase("seconds");
    card["criteria"].push_back(j);
    all = all && r.passed;
  }
  card["passed"] = all;
  const std::string text = card.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    io::write_file(out, text);
  }
  return all ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Principal Koopman eigenfunctions by path integrals"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  Common common;
  EvalArgs eval_args;
  ManifoldArgs man_args;
  DatasetArgs ds_args;
  std::string suite = "all";
  std::string verify_out;
  std::optional<unsigned> verify_workers;

  auto* analyze = app.add_subcommand("analyze", "Equilibrium, linearization, spectrum and gap conditions as JSON");
  add_common(analyze, common, false);

  auto* eval = app.add_subcommand("eval", "Evaluate an eigenfunction on a grid or at points");
  add_common(eval, common, true);
  eval->add_option("--grid", eval_args.grid, "swept axes min:max:count[,...]");
  eval->add_option("--fixed", eval_args.fixed, "fixed axis axis=value (1-based, repeatable)");
  eval->add_option("--point", eval_args.points, "evaluation point v1,..,vn (repeatable)");

  auto* manifold = app.add_subcommand("manifold", "Zero level set of an eigenfunction on a 2D slice");
  add_common(manifold, common, true);
  manifold->add_option("--grid", man_args.grid, "two swept axes min:max:count,min:max:count");
  manifold->add_option("--fixed", man_args.fixed, "fixed axis axis=value (1-based, repeatable)");
  manifold->add_option("--level", man_args.level, "level value (default 0)");
  manifold->add_option("--part", man_args.part, "scalar to contour")->check(CLI::IsMember({"real", "imag", "magnitude"}));
  manifold->add_flag("--refine", man_args.refine, "move vertices to the sign change by bisection");

  auto* lyap = app.add_subcommand("lyapunov", "Lyapunov function V = Phi^H P Phi on a grid");
  add_common(lyap, common, false);
  lyap->add_option("--grid", eval_args.grid, "swept axes min:max:count[,...]");
  lyap->add_option("--fixed", eval_args.fixed, "fixed axis axis=value (1-based, repeatable)");

  auto* dataset = app.add_subcommand("dataset", "Labelled dataset CSV plus .meta.json sidecar");
  add_common(dataset, common, true);
  dataset->add_option("--count", ds_args.count, "number of samples (>= 1)")->check(CLI::PositiveNumber);
  dataset->add_option("--seed", ds_args.seed, "seed for uniform random sampling (default 0)");
  dataset->add_option("--domain", ds_args.domain, "sampling box lo:hi[,lo:hi...] (default: system domain)");
  dataset->add_option("--grid-counts", ds_args.grid_counts, "grid sampling with per-axis counts c1,..,cn");

  auto* verify = app.add_subcommand("verify", "Run the acceptance suite and emit a JSON scorecard");
  verify->add_option("--suite", suite, "suite to run")->check(CLI::IsMember(acceptance::suite_names()));
  verify->add_option("--out", verify_out, "scorecard path (default: standard output)");
  verify->add_option("--workers", verify_workers, "worker threads (default: available cores)");

  auto* schema = app.add_subcommand("schema", "Print the run-configuration JSON schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(common);
    if (eval->parsed()) return cmd_eval(common, eval_args);
    if (manifold->parsed()) return cmd_manifold(common, man_args);
    if (lyap->parsed()) return cmd_lyapunov(common, eval_args);
    if (dataset->parsed()) return cmd_dataset(common, ds_args);
    if (verify->parsed()) return cmd_verify(suite, verify_out, verify_workers);
    if (schema->parsed()) {
      std::cout << run_config_schema().dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ConditionViolated& e) {
    spdlog::warn("{}", e.what());
    return kExitConditionWarning;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitError;
}
