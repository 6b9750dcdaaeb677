#pragma once

// File formats: generator spec JSON, trajectory and energy CSV (17
// significant digits, lossless round-trip), report serialization.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carre/core.hpp"
#include "carre/energies.hpp"
#include "carre/errors.hpp"
#include "carre/generator.hpp"
#include "carre/hilbert.hpp"
#include "carre/rational.hpp"
#include "carre/semigroup.hpp"

namespace carre {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "1";

/// Full-precision decimal rendering; parses back to the identical double.
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

/// Parses JSON and rewrites byte offsets of syntax errors into
/// line:column anchors.
inline json parse_json_text(const std::string& text,
                            const std::string& origin = "<input>") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& err) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < err.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" +
                      std::to_string(col) + ": " + err.what());
  }
}

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_json_text(buffer.str(), path);
}

/// Generator description: {"kind": "loop"|"cycle"|"random"|"explicit",
/// "params": {...}, "matrix": [[...]]}. Matrix entries must be finite.
struct GeneratorSpec {
  enum class Kind { loop, cycle, random, explicit_matrix };

  Kind kind = Kind::loop;
  double a = 1.0, b = 1.0, c = 1.0;
  Index m = 3;
  double diffusivity = 1.0;
  std::uint64_t seed = 0;
  double density = 1.0;
  Mat<double> matrix;

  static GeneratorSpec parse(const json& j) {
    GeneratorSpec spec;
    if (!j.is_object() || !j.contains("kind"))
      throw ConfigError("generator spec must be an object with a \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    const json params = j.value("params", json::object());
    if (kind == "loop") {
      spec.kind = Kind::loop;
      spec.a = params.value("a", 1.0);
      spec.b = params.value("b", 1.0);
      spec.c = params.value("c", 1.0);
    } else if (kind == "cycle") {
      spec.kind = Kind::cycle;
      spec.m = params.value("m", 3);
      spec.diffusivity = params.value("diffusivity", 1.0);
    } else if (kind == "random") {
      spec.kind = Kind::random;
      spec.m = params.value("m", 4);
      spec.seed = params.value("seed", 0ULL);
      spec.density = params.value("density", 0.5);
    } else if (kind == "explicit") {
      spec.kind = Kind::explicit_matrix;
      if (!j.contains("matrix"))
        throw ConfigError("explicit generator spec needs a \"matrix\" field");
      const json& rows = j.at("matrix");
      if (!rows.is_array() || rows.empty())
        throw ConfigError("matrix must be a nonempty array of rows");
      const Index m = static_cast<Index>(rows.size());
      spec.matrix.resize(m, m);
      for (Index i = 0; i < m; ++i) {
        const json& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != m)
          throw ConfigError("matrix row " + std::to_string(i) +
                            " has the wrong length");
        for (Index jj = 0; jj < m; ++jj) {
          const json& cell = row[static_cast<std::size_t>(jj)];
          if (!cell.is_number())
            throw ConfigError("matrix entries must be finite numbers");
          const double v = cell.get<double>();
          if (!std::isfinite(v))
            throw ConfigError("matrix entries must be finite (NaN/Inf rejected)");
          spec.matrix(i, jj) = v;
        }
      }
    } else {
      throw ConfigError("unknown generator kind \"" + kind + "\"");
    }
    return spec;
  }

  /// Colon-separated builtin shorthand: loop:a:b:c, cycle:m:D,
  /// random:m:seed:density.
  static GeneratorSpec from_builtin(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.empty()) throw ConfigError("empty builtin generator spec");
    auto num = [&](std::size_t i) {
      if (i >= parts.size())
        throw ConfigError("builtin spec \"" + text + "\" is missing parameters");
      try {
        return std::stod(parts[i]);
      } catch (const std::exception&) {
        throw ConfigError("builtin spec parameter \"" + parts[i] +
                          "\" is not a number");
      }
    };
    GeneratorSpec spec;
    if (parts[0] == "loop") {
      spec.kind = Kind::loop;
      spec.a = num(1);
      spec.b = num(2);
      spec.c = num(3);
    } else if (parts[0] == "cycle") {
      spec.kind = Kind::cycle;
      spec.m = static_cast<Index>(num(1));
      spec.diffusivity = num(2);
    } else if (parts[0] == "random") {
      spec.kind = Kind::random;
      spec.m = static_cast<Index>(num(1));
      spec.seed = static_cast<std::uint64_t>(num(2));
      spec.density = num(3);
    } else {
      throw ConfigError("unknown builtin generator \"" + parts[0] + "\"");
    }
    return spec;
  }

  Generator<double> build(double tol = 1e-9) const {
    switch (kind) {
      case Kind::loop: return loop_chain<double>(a, b, c);
      case Kind::cycle: return cycle_laplacian<double>(m, diffusivity);
      case Kind::random: return random_generator(m, seed, density);
      case Kind::explicit_matrix: return validate_generator<double>(matrix, tol);
    }
    throw ConfigError("unreachable generator kind");
  }

  /// Exact-rational lift; the double parameters convert losslessly.
  Generator<Rational> build_exact() const {
    switch (kind) {
      case Kind::loop:
        return loop_chain<Rational>(Rational(a), Rational(b), Rational(c));
      case Kind::cycle:
        return cycle_laplacian<Rational>(m, Rational(diffusivity));
      case Kind::explicit_matrix:
        return validate_generator<Rational>(to_rational(matrix), 0.0);
      case Kind::random:
        throw ConfigError("random generators have no exact-rational form");
    }
    throw ConfigError("unreachable generator kind");
  }
};

/// Initial observable shorthand: basis:K, vec:x0,x1,..., random:SEED, or
/// alpha:VALUE for the three-state family (1, 2a, 4a).
inline Vec<double> parse_g0(const std::string& text, Index m) {
  const auto colon = text.find(':');
  const std::string head = colon == std::string::npos ? text : text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);

  if (head == "basis") {
    Index k = 0;
    try {
      k = static_cast<Index>(std::stol(rest));
    } catch (const std::exception&) {
      throw ConfigError("basis index \"" + rest + "\" is not an integer");
    }
    if (k < 0 || k >= m) throw ConfigError("basis index out of range");
    Vec<double> g = Vec<double>::Zero(m);
    g(k) = 1.0;
    return g;
  }
  if (head == "vec") {
    std::vector<double> vals;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        vals.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("vector entry \"" + item + "\" is not a number");
      }
    }
    if (static_cast<Index>(vals.size()) != m)
      throw ConfigError("g0 has length " + std::to_string(vals.size()) +
                        " but the generator has " + std::to_string(m) + " states");
    Vec<double> g(m);
    for (Index i = 0; i < m; ++i) g(i) = vals[static_cast<std::size_t>(i)];
    return g;
  }
  if (head == "random") {
    std::uint64_t seed = 0;
    try {
      seed = static_cast<std::uint64_t>(std::stoull(rest));
    } catch (const std::exception&) {
      throw ConfigError("random g0 seed \"" + rest + "\" is not an integer");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec<double> g(m);
    for (Index i = 0; i < m; ++i) g(i) = gauss(rng);
    return g;
  }
  if (head == "alpha") {
    if (m != 3) throw ConfigError("alpha g0 is defined for three states only");
    double alpha = 0.0;
    try {
      alpha = std::stod(rest);
    } catch (const std::exception&) {
      throw ConfigError("alpha value \"" + rest + "\" is not a number");
    }
    Vec<double> g(3);
    g << 1.0, 2.0 * alpha, 4.0 * alpha;
    return g;
  }
  throw ConfigError("unknown g0 spec \"" + text + "\"");
}

/// Grid shorthand geo:T0:TMAX:COUNT or lin:T0:TMAX:COUNT.
inline TimeGrid parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 4)
    throw ConfigError("grid spec must be geo:T0:TMAX:COUNT or lin:T0:TMAX:COUNT");
  double t0 = 0, t_max = 0;
  std::size_t count = 0;
  try {
    t0 = std::stod(parts[1]);
    t_max = std::stod(parts[2]);
    count = static_cast<std::size_t>(std::stoul(parts[3]));
  } catch (const std::exception&) {
    throw ConfigError("grid spec \"" + text + "\" has non-numeric fields");
  }
  try {
    if (parts[0] == "geo") return TimeGrid::geometric(t0, t_max, count);
    if (parts[0] == "lin") return TimeGrid::linear(t0, t_max, count);
  } catch (const Error& err) {
    throw ConfigError(std::string("bad grid: ") + err.what());
  }
  throw ConfigError("unknown grid kind \"" + parts[0] + "\"");
}

/// Trajectory CSV: t,state_0,...,state_{m-1}, one row per grid point.
inline void write_trajectory_csv(std::ostream& out, const TimeGrid& grid,
                                 const std::vector<Vec<double>>& states) {
  if (states.size() != grid.size())
    throw DimensionMismatchError("trajectory length does not match grid");
  const Index m = states.empty() ? 0 : states.front().size();
  out << "t";
  for (Index i = 0; i < m; ++i) out << ",state_" << i;
  out << "\n";
  for (std::size_t j = 0; j < grid.size(); ++j) {
    out << format_double(grid[j]);
    for (Index i = 0; i < m; ++i) out << "," << format_double(states[j](i));
    out << "\n";
  }
}

/// Energy CSV: t,e0,...,eN.
inline void write_energy_csv(std::ostream& out, const EnergyTrajectory& traj) {
  out << "t";
  for (int n = 0; n <= traj.max_order(); ++n) out << ",e" << n;
  out << "\n";
  for (std::size_t j = 0; j < traj.samples(); ++j) {
    out << format_double(traj.grid()[j]);
    for (int n = 0; n <= traj.max_order(); ++n)
      out << "," << format_double(traj.value(n, j));
    out << "\n";
  }
}

inline json to_json(const NormalityReport& rep) {
  return json{{"classification", to_string(rep.classification)},
              {"commutator_norm", rep.commutator_norm},
              {"symmetry_defect", rep.symmetry_defect},
              {"tolerance", rep.tolerance}};
}

inline json to_json(const CheckRecord& rec) {
  json j{{"check", rec.name},
         {"status", rec.status},
         {"pass", rec.pass},
         {"worst_defect", rec.worst_defect},
         {"tolerance", rec.tolerance},
         {"details", rec.details}};
  if (rec.location_n >= 0) j["location_n"] = rec.location_n;
  if (std::isfinite(rec.location_t)) j["location_t"] = rec.location_t;
  return j;
}

inline json to_json(const DecayReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) checks.push_back(to_json(c));
  json j{{"schema_version", kSchemaVersion}, {"checks", checks}};
  if (std::isfinite(rep.fitted_rate)) j["fitted_rate"] = rep.fitted_rate;
  if (std::isfinite(rep.poincare)) j["poincare"] = rep.poincare;
  if (std::isfinite(rep.poly_margin)) j["poly_bound_margin"] = rep.poly_margin;
  return j;
}

}  // namespace carre
