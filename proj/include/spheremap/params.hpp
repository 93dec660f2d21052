#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spheremap {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Safety-aware cost model shared by every planner: risk weight, cost cutoff
/// distance and the minimal allowed obstacle distance.
struct PlannerParams {
  double xi = 7.0;
  double d_max = 2.0;
  double r_min = 0.8;

  void validate() const {
    if (!(xi >= 0.0)) throw ConfigError("xi must be >= 0");
    if (!(r_min > 0.0)) throw ConfigError("r_min must be > 0");
    if (!(d_max >= r_min)) throw ConfigError("d_max must be >= r_min");
  }
};

struct BuildParams {
  double r_min = 0.8;
  double cube_side = 60.0;
  double r_exp = 5.0;
  double r_merge = 20.0;
  double kappa = 0.9;  ///< redundancy coverage fraction
  /// Stride for per-voxel candidate sampling; 1 = every free voxel, 0 = off.
  int voxel_stride = 1;
  int ray_count = 64;
  int samples_per_ray = 8;
  double eps_r = 1e-6;
  /// Radius cap. Obstacles are gathered from the cube inflated by this
  /// margin, so capped radii never exceed the true clearance.
  double max_radius = 10.0;
  /// NodeIndex bucket size; <= 0 selects 2 * max_radius.
  double index_cell = 0.0;
  std::uint32_t seed = 0;
  /// Skip expansion candidates that would get no edge while other nodes are
  /// within reach. Such spheres can never lie on a path.
  bool connect_candidates = true;

  double node_index_cell() const { return index_cell > 0.0 ? index_cell : 2.0 * max_radius; }

  void validate() const {
    if (!(r_min > 0.0)) throw ConfigError("r_min must be > 0");
    if (!(cube_side > 0.0)) throw ConfigError("cube_side must be > 0");
    if (!(r_exp > 0.0 && r_exp < r_merge)) throw ConfigError("need 0 < r_exp < r_merge");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must be in (0, 1]");
    if (voxel_stride < 0 || ray_count < 0 || samples_per_ray < 0) {
      throw ConfigError("sampling counts must be >= 0");
    }
    if (!(eps_r >= 0.0)) throw ConfigError("eps_r must be >= 0");
    if (!(max_radius >= r_min)) throw ConfigError("max_radius must be >= r_min");
  }
};

/// Parses `key=value` lines; '#' starts a comment, blank lines are skipped.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("params line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("params line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("param " + key + ": not a number: '" + value + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("param " + key + ": not an integer: '" + value + "'");
  }
  return v;
}

/// Applies a known key to the parameter structs; returns false for keys it
/// does not own so callers can route or reject them.
inline bool apply_param(BuildParams& b, const std::string& key, const std::string& value) {
  if (key == "r_min") b.r_min = parse_double(key, value);
  else if (key == "cube_side") b.cube_side = parse_double(key, value);
  else if (key == "r_exp") b.r_exp = parse_double(key, value);
  else if (key == "r_merge") b.r_merge = parse_double(key, value);
  else if (key == "kappa") b.kappa = parse_double(key, value);
  else if (key == "voxel_stride") b.voxel_stride = int(parse_int(key, value));
  else if (key == "ray_count") b.ray_count = int(parse_int(key, value));
  else if (key == "samples_per_ray") b.samples_per_ray = int(parse_int(key, value));
  else if (key == "eps_r") b.eps_r = parse_double(key, value);
  else if (key == "max_radius") b.max_radius = parse_double(key, value);
  else if (key == "index_cell") b.index_cell = parse_double(key, value);
  else if (key == "seed") b.seed = std::uint32_t(parse_int(key, value));
  else if (key == "connect_candidates") b.connect_candidates = parse_int(key, value) != 0;
  else return false;
  return true;
}

inline bool apply_param(PlannerParams& p, const std::string& key, const std::string& value) {
  if (key == "xi") p.xi = parse_double(key, value);
  else if (key == "d_max") p.d_max = parse_double(key, value);
  else if (key == "r_min") p.r_min = parse_double(key, value);
  else return false;
  return true;
}

}  // namespace spheremap
