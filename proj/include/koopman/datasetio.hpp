#pragma once

// Labelled datasets {(x_i, phi(x_i))} and their interchange format: a CSV
// file plus a "<path>.meta.json" sidecar, format_version "1".

#include "koopman/config.hpp"
#include "koopman/core.hpp"
#include "koopman/eigfn.hpp"
#include "koopman/io.hpp"
#include "koopman/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace koopman {

inline constexpr const char* kDatasetFormatVersion = "1";

struct DatasetRecord {
  Vec x;
  cplx phi{0.0, 0.0};
  cplx h{0.0, 0.0};
  IntegralStatus status = IntegralStatus::Converged;
  double T_used = 0.0;

  bool operator==(const DatasetRecord&) const = default;
};

struct UniformRandom {
  std::uint64_t seed = 0;
  bool operator==(const UniformRandom&) const = default;
};

struct GridSampling {
  std::vector<std::size_t> counts;  // per dimension, each >= 1
  bool operator==(const GridSampling&) const = default;
};

using Sampling = std::variant<UniformRandom, GridSampling>;

struct DatasetMeta {
  std::string system_name;
  ParamMap params;
  nlohmann::json system_source;
  Vec x_star;
  cplx lambda{0.0, 0.0};
  CVec w;
  EvaluationMode mode = EvaluationMode::StableForward;
  ConditionReport condition;
  Box domain;
  std::size_t count = 0;
  Sampling sampling;
  IntegratorConfig integrator;
  std::string format_version = kDatasetFormatVersion;
};

inline bool operator==(const ConditionReport& a, const ConditionReport& b) {
  return a.mode == b.mode && a.condition_value == b.condition_value && a.satisfied == b.satisfied &&
         a.lambda_max == b.lambda_max && a.boundedness_caveat == b.boundedness_caveat;
}

inline bool operator==(const IntegratorConfig& a, const IntegratorConfig& b) { return to_json(a) == to_json(b); }

inline bool operator==(const DatasetMeta& a, const DatasetMeta& b) {
  return a.system_name == b.system_name && a.params == b.params && a.system_source == b.system_source &&
         a.x_star == b.x_star && a.lambda == b.lambda && a.w == b.w && a.mode == b.mode &&
         a.condition == b.condition && a.domain.lo == b.domain.lo && a.domain.hi == b.domain.hi &&
         a.count == b.count && a.sampling == b.sampling && a.integrator == b.integrator &&
         a.format_version == b.format_version;
}

struct Dataset {
  std::vector<DatasetRecord> records;
  DatasetMeta meta;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform,
/// unlike std::uniform_real_distribution.
[[nodiscard]] inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<Vec> sample_points(const Box& domain, std::size_t count, const Sampling& sampling) {
  const Eigen::Index n = domain.dim();
  std::vector<Vec> pts;
  pts.reserve(count);
  if (const auto* u = std::get_if<UniformRandom>(&sampling)) {
    std::mt19937_64 rng(u->seed);
    for (std::size_t i = 0; i < count; ++i) {
      Vec x(n);
      for (Eigen::Index k = 0; k < n; ++k) x[k] = domain.lo[k] + unit_uniform(rng) * (domain.hi[k] - domain.lo[k]);
      pts.push_back(std::move(x));
    }
    return pts;
  }
  const auto& g = std::get<GridSampling>(sampling);
  if (static_cast<Eigen::Index>(g.counts.size()) != n) throw ConfigError("grid sampling: need one count per dimension");
  std::size_t total = 1;
  for (auto c : g.counts) {
    if (c < 1) throw ConfigError("grid sampling: counts must be >= 1");
    total *= c;
  }
  if (total != count) {
    throw ConfigError("grid sampling: counts multiply to " + std::to_string(total) + ", not " + std::to_string(count));
  }
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vec x(n);
    std::size_t rest = flat;
    for (Eigen::Index k = n; k-- > 0;) {
      const std::size_t c = g.counts[static_cast<std::size_t>(k)];
      const std::size_t i = rest % c;
      rest /= c;
      x[k] = c == 1 ? 0.5 * (domain.lo[k] + domain.hi[k])
                    : domain.lo[k] + (domain.hi[k] - domain.lo[k]) * static_cast<double>(i) / static_cast<double>(c - 1);
    }
    pts.push_back(std::move(x));
  }
  return pts;
}

inline DatasetMeta make_meta(const PrincipalEigenfunction& ef, const Box& domain, std::size_t count,
                             const Sampling& sampling) {
  DatasetMeta m;
  m.system_name = ef.system.name;
  m.params = ef.system.params;
  m.system_source = ef.system.source;
  m.x_star = ef.x_star();
  m.lambda = ef.lambda;
  m.w = ef.effective_w();
  m.mode = ef.mode;
  m.condition = ef.condition;
  m.domain = domain;
  m.count = count;
  m.sampling = sampling;
  m.integrator = ef.cfg;
  return m;
}

inline DatasetRecord make_record(const PrincipalEigenfunction& ef, const Vec& x) {
  DatasetRecord r;
  r.x = x;
  try {
    const auto ev = evaluate(ef, x);
    r.phi = ev.phi;
    r.h = ev.h;
    r.status = ev.status;
    r.T_used = ev.T_used;
  } catch (const Error&) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.phi = r.h = cplx{nan, nan};
    r.status = IntegralStatus::StepFailure;
    r.T_used = nan;
  }
  return r;
}

/// Failed evaluations are kept with their status so the consumer can filter.
inline Dataset generate_dataset(const PrincipalEigenfunction& ef, const Box& domain, std::size_t count,
                                const Sampling& sampling, unsigned workers = 0) {
  if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
  if (domain.dim() != ef.system.dim) throw DimensionMismatch("generate_dataset: domain has the wrong dimension");
  for (Eigen::Index k = 0; k < domain.dim(); ++k) {
    if (!(domain.lo[k] <= domain.hi[k])) {
      throw ConfigError("generate_dataset: domain needs lo <= hi on axis " + std::to_string(k + 1));
    }
    if (domain.lo[k] < ef.system.domain.lo[k] || domain.hi[k] > ef.system.domain.hi[k]) {
      throw ConfigError("generate_dataset: domain leaves the declared domain of '" + ef.system.name + "' on axis " +
                        std::to_string(k + 1));
    }
  }
  const auto pts = sample_points(domain, count, sampling);
  Dataset ds;
  ds.meta = make_meta(ef, domain, count, sampling);
  ds.records.resize(count);
  parallel_for(count, workers, [&](std::size_t i) { ds.records[i] = make_record(ef, pts[i]); });
  return ds;
}

inline nlohmann::json meta_to_json(const DatasetMeta& m) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : m.params) params[k] = v;
  nlohmann::json sampling;
  if (const auto* u = std::get_if<UniformRandom>(&m.sampling)) {
    sampling = {{"mode", "uniform_random"}, {"seed", u->seed}};
  } else {
    sampling = {{"mode", "grid"}, {"counts", std::get<GridSampling>(m.sampling).counts}};
  }
  return {{"format_version", m.format_version},
          {"system", {{"name", m.system_name}, {"params", params}, {"source", m.system_source}}},
          {"equilibrium", io::to_json(m.x_star)},
          {"lambda", io::to_json(m.lambda)},
          {"w", io::to_json(m.w)},
          {"mode", std::string(to_string(m.mode))},
          {"condition",
           {{"mode", std::string(to_string(m.condition.mode))},
            {"condition_value", m.condition.condition_value},
            {"satisfied", m.condition.satisfied},
            {"lambda_max", io::to_json(m.condition.lambda_max)},
            {"boundedness_caveat", m.condition.boundedness_caveat}}},
          {"domain", {{"lo", io::to_json(m.domain.lo)}, {"hi", io::to_json(m.domain.hi)}}},
          {"count", m.count},
          {"sampling", sampling},
          {"integrator", to_json(m.integrator)}};
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || !j["format_version"].is_string()) {
    throw FormatError("dataset meta: missing format_version");
  }
  if (j["format_version"].get<std::string>() != kDatasetFormatVersion) {
    throw FormatVersionMismatch("dataset meta: format_version '" + j["format_version"].get<std::string>() +
                                "' is not supported (expected '" + kDatasetFormatVersion + "')");
  }
  DatasetMeta m;
  try {
    const auto& sys = j.at("system");
    m.system_name = sys.at("name").get<std::string>();
    for (const auto& [k, v] : sys.at("params").items()) m.params[k] = v.get<double>();
    m.system_source = sys.at("source");
    m.x_star = io::vec_from_json(j.at("equilibrium"));
    m.lambda = io::cplx_from_json(j.at("lambda"));
    m.w = io::cvec_from_json(j.at("w"));
    m.mode = evaluation_mode_from_string(j.at("mode").get<std::string>());
    const auto& c = j.at("condition");
    m.condition.mode = evaluation_mode_from_string(c.at("mode").get<std::string>());
    m.condition.condition_value = c.at("condition_value").get<double>();
    m.condition.satisfied = c.at("satisfied").get<bool>();
    m.condition.lambda_max = io::cplx_from_json(c.at("lambda_max"));
    m.condition.boundedness_caveat = c.at("boundedness_caveat").get<bool>();
    m.domain.lo = io::vec_from_json(j.at("domain").at("lo"));
    m.domain.hi = io::vec_from_json(j.at("domain").at("hi"));
    m.count = j.at("count").get<std::size_t>();
    const auto& s = j.at("sampling");
    const auto mode = s.at("mode").get<std::string>();
    if (mode == "uniform_random") {
      m.sampling = UniformRandom{s.at("seed").get<std::uint64_t>()};
    } else if (mode == "grid") {
      m.sampling = GridSampling{s.at("counts").get<std::vector<std::size_t>>()};
    } else {
      throw FormatError("dataset meta: unknown sampling mode '" + mode + "'");
    }
    m.integrator = integrator_from_json(j.at("integrator"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset meta: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset meta: ") + e.what());
  }
  if (m.x_star.size() != m.w.size() || m.domain.lo.size() != m.x_star.size() || m.domain.hi.size() != m.x_star.size()) {
    throw FormatError("dataset meta: inconsistent dimensions");
  }
  return m;
}

inline std::string dataset_header(Eigen::Index n) {
  std::string s;
  for (Eigen::Index k = 0; k < n; ++k) s += "x" + std::to_string(k + 1) + ",";
  return s + "phi_re,phi_im,h_re,h_im,status,T_used";
}

inline std::string meta_path(const std::string& path) { return path + ".meta.json"; }

inline std::string dataset_to_csv(const std::vector<DatasetRecord>& records, Eigen::Index n) {
  std::string s = dataset_header(n) + "\n";
  for (const auto& r : records) {
    if (r.x.size() != n) throw DimensionMismatch("write_dataset: record dimension does not match the metadata");
    for (Eigen::Index k = 0; k < n; ++k) s += io::format_double(r.x[k]) + ",";
    s += io::format_double(r.phi.real()) + "," + io::format_double(r.phi.imag()) + "," + io::format_double(r.h.real()) +
         "," + io::format_double(r.h.imag()) + "," + std::string(to_string(r.status)) + "," +
         io::format_double(r.T_used) + "\n";
  }
  return s;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  const auto n = ds.meta.x_star.size();
  io::write_file(path, dataset_to_csv(ds.records, n));
  io::write_file(meta_path(path), meta_to_json(ds.meta).dump(2) + "\n");
}

inline Dataset read_dataset(const std::string& path) {
  const std::string mpath = meta_path(path);
  if (!std::filesystem::exists(mpath)) throw IoError("dataset '" + path + "': missing sidecar '" + mpath + "'");
  Dataset ds;
  ds.meta = meta_from_json(io::parse_json(io::read_file(mpath), mpath));
  const auto n = ds.meta.x_star.size();

  const std::string text = io::read_file(path);
  const auto rows = io::lines(text);
  if (rows.empty() || rows[0] != dataset_header(n)) {
    throw FormatError("dataset '" + path + "': header does not match dimension " + std::to_string(n) +
                      " from the metadata");
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string ctx = path + ":" + std::to_string(i + 1);
    const auto cols = io::split(rows[i]);
    if (static_cast<Eigen::Index>(cols.size()) != n + 6) throw FormatError(ctx + ": wrong column count");
    DatasetRecord r;
    r.x.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) r.x[k] = io::parse_double(cols[static_cast<std::size_t>(k)], ctx);
    const auto base = static_cast<std::size_t>(n);
    r.phi = {io::parse_double(cols[base], ctx), io::parse_double(cols[base + 1], ctx)};
    r.h = {io::parse_double(cols[base + 2], ctx), io::parse_double(cols[base + 3], ctx)};
    try {
      r.status = integral_status_from_string(cols[base + 4]);
    } catch (const Error& e) {
      throw FormatError(ctx + ": " + e.what());
    }
    r.T_used = io::parse_double(cols[base + 5], ctx);
    ds.records.push_back(std::move(r));
  }
  if (ds.records.size() != ds.meta.count) {
    throw FormatError("dataset '" + path + "': " + std::to_string(ds.records.size()) + " records, metadata says " +
                      std::to_string(ds.meta.count));
  }
  return ds;
}

}  // namespace koopman
