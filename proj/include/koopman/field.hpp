#pragma once

// Grid evaluation of eigenfunctions, zero-level-set extraction by marching
// squares on 2D slices, and CSV/JSON field export.

#include "koopman/core.hpp"
#include "koopman/eigfn.hpp"
#include "koopman/io.hpp"
#include "koopman/parallel.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace koopman {

struct GridAxis {
  bool swept = true;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  double value = 0.0;  // used when !swept

  static GridAxis sweep(double lo, double hi, std::size_t n) { return {true, lo, hi, n, 0.0}; }
  static GridAxis fixed(double v) { return {false, 0.0, 0.0, 0, v}; }

  [[nodiscard]] double coordinate(std::size_t k) const {
    if (!swept) return value;
    if (k == 0) return min;
    if (k + 1 == count) return max;
    // Weighted form keeps symmetric grids exactly symmetric (0 is hit exactly).
    const auto n = static_cast<double>(count - 1);
    const auto kd = static_cast<double>(k);
    return (min * (n - kd) + max * kd) / n;
  }
};

struct GridSpec {
  std::vector<GridAxis> axes;

  void validate() const {
    std::size_t swept = 0;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& ax = axes[a];
      if (!ax.swept) {
        if (!std::isfinite(ax.value)) throw ConfigError("grid axis " + std::to_string(a + 1) + ": fixed value not finite");
        continue;
      }
      ++swept;
      if (!(std::isfinite(ax.min) && std::isfinite(ax.max) && ax.min < ax.max)) {
        throw ConfigError("grid axis " + std::to_string(a + 1) + ": need finite min < max");
      }
      if (ax.count < 2) throw ConfigError("grid axis " + std::to_string(a + 1) + ": count must be >= 2");
    }
    if (swept == 0) throw ConfigError("grid: at least one axis must be swept");
  }

  [[nodiscard]] std::size_t dim() const noexcept { return axes.size(); }

  [[nodiscard]] std::vector<std::size_t> swept_axes() const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (axes[a].swept) out.push_back(a);
    }
    return out;
  }

  [[nodiscard]] std::size_t node_count() const {
    std::size_t n = 1;
    for (const auto& ax : axes) {
      if (ax.swept) n *= ax.count;
    }
    return n;
  }

  /// Per-swept-axis indices of a flat row-major index (last swept axis fastest).
  [[nodiscard]] std::vector<std::size_t> unravel(std::size_t flat) const {
    const auto sw = swept_axes();
    std::vector<std::size_t> idx(sw.size());
    for (std::size_t k = sw.size(); k-- > 0;) {
      const std::size_t c = axes[sw[k]].count;
      idx[k] = flat % c;
      flat /= c;
    }
    return idx;
  }

  [[nodiscard]] Vec point(std::size_t flat) const {
    const auto sw = swept_axes();
    const auto idx = unravel(flat);
    Vec x(static_cast<Eigen::Index>(axes.size()));
    for (std::size_t a = 0; a < axes.size(); ++a) x[static_cast<Eigen::Index>(a)] = axes[a].value;
    for (std::size_t k = 0; k < sw.size(); ++k) {
      x[static_cast<Eigen::Index>(sw[k])] = axes[sw[k]].coordinate(idx[k]);
    }
    return x;
  }
};

/// Parses "min:max:count[,min:max:count...]" for the swept axes plus
/// "axis=value" entries (1-based axis) for the fixed ones. Swept specs fill
/// the non-fixed axes in order.
inline GridSpec parse_grid(const std::string& sweeps, const std::map<std::size_t, double>& fixed, std::size_t dim) {
  std::vector<GridAxis> swept;
  for (const auto part : io::split(sweeps, ',')) {
    const auto f = io::split(part, ':');
    if (f.size() != 3) throw ConfigError("grid: expected min:max:count, got '" + std::string(part) + "'");
    const double lo = io::parse_double(f[0], "grid min");
    const double hi = io::parse_double(f[1], "grid max");
    const double cnt = io::parse_double(f[2], "grid count");
    if (!(cnt >= 2.0) || cnt != std::floor(cnt)) throw ConfigError("grid: count must be an integer >= 2");
    swept.push_back(GridAxis::sweep(lo, hi, static_cast<std::size_t>(cnt)));
  }
  for (const auto& [axis, v] : fixed) {
    if (axis < 1 || axis > dim) throw ConfigError("grid: fixed axis " + std::to_string(axis) + " out of range");
  }
  if (swept.size() + fixed.size() != dim) {
    throw ConfigError("grid: " + std::to_string(swept.size()) + " swept + " + std::to_string(fixed.size()) +
                      " fixed axes do not cover dimension " + std::to_string(dim));
  }
  GridSpec spec;
  std::size_t next = 0;
  for (std::size_t a = 1; a <= dim; ++a) {
    if (auto it = fixed.find(a); it != fixed.end()) {
      spec.axes.push_back(GridAxis::fixed(it->second));
    } else {
      spec.axes.push_back(swept[next++]);
    }
  }
  spec.validate();
  return spec;
}

struct ScalarField {
  GridSpec spec;
  std::vector<cplx> values;  // NaN where the status is not usable
  std::vector<IntegralStatus> statuses;

  [[nodiscard]] bool usable(std::size_t i) const { return is_usable(statuses[i]); }
};

inline cplx flagged_value() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nan, nan};
}

/// Evaluates ef at every node. Per-node failures land in statuses; the output
/// does not depend on the number of workers.
inline ScalarField eval_grid(const PrincipalEigenfunction& ef, const GridSpec& spec, unsigned workers = 0) {
  spec.validate();
  if (spec.dim() != static_cast<std::size_t>(ef.system.dim)) {
    throw DimensionMismatch("eval_grid: grid has " + std::to_string(spec.dim()) + " axes, system has dimension " +
                            std::to_string(ef.system.dim));
  }
  ScalarField f;
  f.spec = spec;
  const std::size_t n = spec.node_count();
  f.values.assign(n, flagged_value());
  f.statuses.assign(n, IntegralStatus::StepFailure);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      const auto ev = evaluate(ef, spec.point(i));
      f.statuses[i] = ev.status;
      if (ev.valid()) f.values[i] = ev.phi;
    } catch (const Error&) {
      f.statuses[i] = IntegralStatus::StepFailure;
    }
  });
  return f;
}

enum class LevelPart : std::uint8_t { Real, Imag, Magnitude };

inline std::string_view to_string(LevelPart p) {
  switch (p) {
    case LevelPart::Real: return "real";
    case LevelPart::Imag: return "imag";
    case LevelPart::Magnitude: return "magnitude";
  }
  return "?";
}

inline LevelPart level_part_from_string(std::string_view s) {
  if (s == "real") return LevelPart::Real;
  if (s == "imag") return LevelPart::Imag;
  if (s == "magnitude") return LevelPart::Magnitude;
  throw ConfigError("unknown level part '" + std::string(s) + "' (expected real, imag or magnitude)");
}

[[nodiscard]] inline double level_scalar(cplx z, LevelPart part, double level) {
  switch (part) {
    case LevelPart::Real: return z.real() - level;
    case LevelPart::Imag: return z.imag() - level;
    case LevelPart::Magnitude: return std::abs(z) - level;
  }
  return z.real() - level;
}

/// A vertex on the grid edge between nodes a and b at x = x_a + t (x_b - x_a).
struct LevelVertex {
  double u = 0.0;
  double v = 0.0;
  std::size_t node_a = 0;
  std::size_t node_b = 0;
  double t = 0.0;
};

struct LevelSet {
  std::size_t axis_u = 0;
  std::size_t axis_v = 1;
  double level = 0.0;
  LevelPart part = LevelPart::Real;
  std::vector<std::vector<LevelVertex>> polylines;
  std::vector<std::pair<std::size_t, std::size_t>> skipped_cells;  // (i, j) lower-left node indices

  [[nodiscard]] std::size_t vertex_count() const {
    std::size_t n = 0;
    for (const auto& p : polylines) n += p.size();
    return n;
  }
};

/// Full state at a level-set vertex (fixed axes filled from the grid).
inline Vec vertex_point(const GridSpec& spec, const LevelVertex& vx) {
  const Vec a = spec.point(vx.node_a);
  const Vec b = spec.point(vx.node_b);
  return a + vx.t * (b - a);
}

/// Optional sampler for the cell centre of ambiguous cells; returns the
/// selected scalar minus the level, or nullopt to fall back to the corner mean.
using CenterSampler = std::function<std::optional<double>(const Vec&)>;

namespace detail {

struct EdgeKey {
  std::size_t a;
  std::size_t b;
  auto operator<=>(const EdgeKey&) const = default;
};

inline EdgeKey edge_key(std::size_t p, std::size_t q) { return p < q ? EdgeKey{p, q} : EdgeKey{q, p}; }

}  // namespace detail

inline LevelSet zero_level_set(const ScalarField& field, double level = 0.0, LevelPart part = LevelPart::Real,
                               const CenterSampler& center = {}) {
  const auto sw = field.spec.swept_axes();
  if (sw.size() != 2) {
    throw NotTwoDimensional("zero_level_set: field has " + std::to_string(sw.size()) + " swept axes, need 2");
  }
  const std::size_t nu = field.spec.axes[sw[0]].count;
  const std::size_t nv = field.spec.axes[sw[1]].count;
  auto node = [nv](std::size_t i, std::size_t j) { return i * nv + j; };
  auto scalar = [&](std::size_t k) { return level_scalar(field.values[k], part, level); };

  LevelSet out;
  out.axis_u = sw[0];
  out.axis_v = sw[1];
  out.level = level;
  out.part = part;

  std::map<detail::EdgeKey, LevelVertex> vertices;
  auto vertex_on = [&](std::size_t p, std::size_t q) {
    const auto key = detail::edge_key(p, q);
    if (auto it = vertices.find(key); it != vertices.end()) return key;
    const double sa = scalar(key.a);
    const double sb = scalar(key.b);
    LevelVertex vx;
    vx.node_a = key.a;
    vx.node_b = key.b;
    vx.t = sa / (sa - sb);
    const Vec x = vertex_point(field.spec, vx);
    vx.u = x[static_cast<Eigen::Index>(sw[0])];
    vx.v = x[static_cast<Eigen::Index>(sw[1])];
    vertices.emplace(key, vx);
    return key;
  };

  std::vector<std::pair<detail::EdgeKey, detail::EdgeKey>> segments;
  for (std::size_t i = 0; i + 1 < nu; ++i) {
    for (std::size_t j = 0; j + 1 < nv; ++j) {
      // Corners counter-clockwise; edge e connects corner e and e+1.
      const std::array<std::size_t, 4> c{node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
      bool flagged = false;
      for (auto k : c) flagged = flagged || !field.usable(k) || !std::isfinite(scalar(k));
      if (flagged) {
        out.skipped_cells.emplace_back(i, j);
        continue;
      }
      std::array<bool, 4> pos{};
      for (int k = 0; k < 4; ++k) pos[static_cast<std::size_t>(k)] = scalar(c[static_cast<std::size_t>(k)]) >= 0.0;
      std::vector<int> crossing;
      for (int e = 0; e < 4; ++e) {
        if (pos[static_cast<std::size_t>(e)] != pos[static_cast<std::size_t>((e + 1) % 4)]) crossing.push_back(e);
      }
      auto edge = [&](int e) {
        return vertex_on(c[static_cast<std::size_t>(e)], c[static_cast<std::size_t>((e + 1) % 4)]);
      };
      if (crossing.size() == 2) {
        segments.emplace_back(edge(crossing[0]), edge(crossing[1]));
      } else if (crossing.size() == 4) {
        double mid = 0.0;
        for (auto k : c) mid += 0.25 * scalar(k);
        if (center) {
          const Vec xc = 0.5 * (field.spec.point(c[0]) + field.spec.point(c[2]));
          if (auto s = center(xc); s && std::isfinite(*s)) mid = *s;
        }
        if ((mid >= 0.0) == pos[0]) {
          // Corners 0 and 2 joined through the centre: cut off corners 1 and 3.
          segments.emplace_back(edge(0), edge(1));
          segments.emplace_back(edge(2), edge(3));
        } else {
          segments.emplace_back(edge(3), edge(0));
          segments.emplace_back(edge(1), edge(2));
        }
      }
    }
  }

  // Chain segments through shared edges. Open chains start at degree-1 edges.
  std::map<detail::EdgeKey, std::vector<std::size_t>> incident;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    incident[segments[s].first].push_back(s);
    incident[segments[s].second].push_back(s);
  }
  std::vector<bool> used(segments.size(), false);
  auto walk = [&](detail::EdgeKey start) {
    std::vector<LevelVertex> line{vertices.at(start)};
    detail::EdgeKey at = start;
    for (;;) {
      std::optional<std::size_t> next;
      for (auto s : incident[at]) {
        if (!used[s]) {
          next = s;
          break;
        }
      }
      if (!next) break;
      used[*next] = true;
      at = segments[*next].first == at ? segments[*next].second : segments[*next].first;
      line.push_back(vertices.at(at));
    }
    out.polylines.push_back(std::move(line));
  };
  for (const auto& [key, segs] : incident) {
    if (segs.size() == 1 && !used[segs[0]]) walk(key);
  }
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (!used[s]) walk(segments[s].first);
  }
  return out;
}

/// Moves a vertex along its cell edge to the sign change of the selected
/// scalar of ef by bisection. The vertex stays on its edge; if a bracket
/// evaluation fails, the last valid bracket midpoint is kept.
inline void refine_vertex(LevelVertex& vx, const LevelSet& ls, const ScalarField& field,
                          const PrincipalEigenfunction& ef, int iterations = 40) {
  const Vec xa = field.spec.point(vx.node_a);
  const Vec xb = field.spec.point(vx.node_b);
  const bool pos_a = level_scalar(field.values[vx.node_a], ls.part, ls.level) >= 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto ev = evaluate(ef, xa + mid * (xb - xa));
    if (!ev.valid()) break;
    ((level_scalar(ev.phi, ls.part, ls.level) >= 0.0) == pos_a ? lo : hi) = mid;
  }
  vx.t = 0.5 * (lo + hi);
  const Vec x = xa + vx.t * (xb - xa);
  vx.u = x[static_cast<Eigen::Index>(ls.axis_u)];
  vx.v = x[static_cast<Eigen::Index>(ls.axis_v)];
}

inline void refine_level_set(LevelSet& ls, const ScalarField& field, const PrincipalEigenfunction& ef,
                             int iterations = 40, unsigned workers = 0) {
  std::vector<LevelVertex*> all;
  for (auto& line : ls.polylines) {
    for (auto& vx : line) all.push_back(&vx);
  }
  parallel_for(all.size(), workers, [&](std::size_t k) { refine_vertex(*all[k], ls, field, ef, iterations); });
}

// ---- export / import -------------------------------------------------------

enum class FieldFormat : std::uint8_t { CSV, JSON };

inline FieldFormat field_format_from_string(std::string_view s) {
  if (s == "csv") return FieldFormat::CSV;
  if (s == "json") return FieldFormat::JSON;
  throw ConfigError("unknown format '" + std::string(s) + "' (expected csv or json)");
}

inline nlohmann::json grid_to_json(const GridSpec& spec) {
  auto axes = nlohmann::json::array();
  for (const auto& ax : spec.axes) {
    if (ax.swept) {
      axes.push_back({{"min", ax.min}, {"max", ax.max}, {"count", ax.count}});
    } else {
      axes.push_back({{"value", ax.value}});
    }
  }
  return axes;
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec spec;
  for (const auto& a : j) {
    if (a.contains("value")) {
      spec.axes.push_back(GridAxis::fixed(a.at("value").get<double>()));
    } else {
      spec.axes.push_back(GridAxis::sweep(a.at("min").get<double>(), a.at("max").get<double>(),
                                          a.at("count").get<std::size_t>()));
    }
  }
  spec.validate();
  return spec;
}

inline std::string field_to_csv(const ScalarField& f) {
  const auto sw = f.spec.swept_axes();
  std::string s;
  for (auto a : sw) s += "x" + std::to_string(a + 1) + ",";
  s += "phi_re,phi_im,status\n";
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const Vec x = f.spec.point(i);
    for (auto a : sw) s += io::format_double(x[static_cast<Eigen::Index>(a)]) + ",";
    s += io::format_double(f.values[i].real()) + "," + io::format_double(f.values[i].imag()) + "," +
         std::string(to_string(f.statuses[i])) + "\n";
  }
  return s;
}

inline nlohmann::json nullable(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json field_to_json(const ScalarField& f) {
  auto re = nlohmann::json::array();
  auto im = nlohmann::json::array();
  auto st = nlohmann::json::array();
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    re.push_back(nullable(f.values[i].real()));
    im.push_back(nullable(f.values[i].imag()));
    st.push_back(std::string(to_string(f.statuses[i])));
  }
  return {{"axes", grid_to_json(f.spec)}, {"phi_re", re}, {"phi_im", im}, {"status", st}};
}

inline void export_field(const ScalarField& f, FieldFormat format, const std::string& path) {
  if (format == FieldFormat::CSV) {
    io::write_file(path, field_to_csv(f));
  } else {
    io::write_file(path, field_to_json(f).dump(1) + "\n");
  }
}

inline ScalarField field_from_json(const nlohmann::json& j) {
  ScalarField f;
  try {
    f.spec = grid_from_json(j.at("axes"));
    const auto& re = j.at("phi_re");
    const auto& im = j.at("phi_im");
    const auto& st = j.at("status");
    const std::size_t n = f.spec.node_count();
    if (re.size() != n || im.size() != n || st.size() != n) {
      throw FormatError("field: array lengths do not match the grid (" + std::to_string(n) + " nodes)");
    }
    for (std::size_t i = 0; i < n; ++i) {
      f.values.emplace_back(from_nullable(re[i]), from_nullable(im[i]));
      f.statuses.push_back(integral_status_from_string(st[i].get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field: ") + e.what());
  }
  return f;
}

/// CSV does not carry fixed axes, so the grid is supplied by the caller and
/// the coordinates in the file are checked against it.
inline ScalarField field_from_csv(std::string_view text, const GridSpec& spec) {
  spec.validate();
  const auto sw = spec.swept_axes();
  const auto rows = io::lines(text);
  std::string header;
  for (auto a : sw) header += "x" + std::to_string(a + 1) + ",";
  header += "phi_re,phi_im,status";
  if (rows.empty() || rows[0] != header) throw FormatError("field csv: header does not match the grid");
  const std::size_t n = spec.node_count();
  if (rows.size() != n + 1) {
    throw FormatError("field csv: expected " + std::to_string(n) + " data rows, found " +
                      std::to_string(rows.size() - 1));
  }
  ScalarField f;
  f.spec = spec;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = io::split(rows[i + 1]);
    const std::string ctx = "field csv row " + std::to_string(i + 2);
    if (cols.size() != sw.size() + 3) throw FormatError(ctx + ": wrong column count");
    const Vec x = spec.point(i);
    for (std::size_t k = 0; k < sw.size(); ++k) {
      if (io::parse_double(cols[k], ctx) != x[static_cast<Eigen::Index>(sw[k])]) {
        throw FormatError(ctx + ": coordinate does not match the grid");
      }
    }
    f.values.emplace_back(io::parse_double(cols[sw.size()], ctx), io::parse_double(cols[sw.size() + 1], ctx));
    f.statuses.push_back(integral_status_from_string(cols[sw.size() + 2]));
  }
  return f;
}

inline ScalarField read_field(const std::string& path, FieldFormat format, const GridSpec* csv_grid = nullptr) {
  const std::string text = io::read_file(path);
  try {
    if (format == FieldFormat::JSON) return field_from_json(io::parse_json(text, path));
    if (csv_grid == nullptr) throw FormatError("reading a CSV field needs its grid");
    return field_from_csv(text, *csv_grid);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline nlohmann::json level_set_to_json(const LevelSet& ls) {
  auto lines = nlohmann::json::array();
  for (const auto& line : ls.polylines) {
    auto pts = nlohmann::json::array();
    for (const auto& v : line) pts.push_back({v.u, v.v});
    lines.push_back(pts);
  }
  auto skipped = nlohmann::json::array();
  for (const auto& [i, j] : ls.skipped_cells) skipped.push_back({i, j});
  return {{"axes", {ls.axis_u + 1, ls.axis_v + 1}},
          {"level", ls.level},
          {"part", std::string(to_string(ls.part))},
          {"polylines", lines},
          {"skipped_cells", skipped}};
}

/// CSV: one row per vertex, polylines numbered from 0.
inline std::string level_set_to_csv(const LevelSet& ls) {
  std::string s = "polyline,x" + std::to_string(ls.axis_u + 1) + ",x" + std::to_string(ls.axis_v + 1) + "\n";
  for (std::size_t p = 0; p < ls.polylines.size(); ++p) {
    for (const auto& v : ls.polylines[p]) {
      s += std::to_string(p) + "," + io::format_double(v.u) + "," + io::format_double(v.v) + "\n";
    }
  }
  return s;
}

}  // namespace koopman
