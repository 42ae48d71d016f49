#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlvms/mesh.hpp"

namespace mlvms {

/// Process exit codes; each failure class gets its own code so scripts can
/// tell a bad config from a solver breakdown.
enum class ExitCode : int {
  ok = 0,
  config_error = 2,
  mesh_error = 3,
  solver_error = 4,
  io_error = 5,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One flat key = value section of a config file.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return (it == kv_.end()) ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  int get_int(const std::string& key) const { return parse_int(key, get_string(key)); }
  int get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
  }

  /// Whitespace-separated list of doubles.
  std::vector<double> get_doubles(const std::string& key) const {
    std::istringstream is(get_string(key));
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_double(key, tok));
    if (out.empty()) throw ConfigError("config key " + key + ": expected numbers");
    return out;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
    }
  }
  static int parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      int x = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected an integer, got '" + v + "'");
    }
  }
  std::map<std::string, std::string> kv_;
};

/// Parsed config file: one global section plus one section per level, in
/// order. Syntax: `key = value` lines, `#` comments, `[level N]` headers.
struct RawConfig {
  KeyValues global;
  std::vector<KeyValues> levels;
};

inline RawConfig parse_config_text(const std::string& text) {
  RawConfig cfg;
  KeyValues* section = &cfg.global;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      std::istringstream hs(line.substr(1, line.size() - 2));
      std::string word;
      int idx = -1;
      hs >> word >> idx;
      if (word != "level" || idx != static_cast<int>(cfg.levels.size()))
        throw ConfigError("line " + std::to_string(lineno) +
                          ": expected [level " + std::to_string(cfg.levels.size()) + "]");
      cfg.levels.emplace_back();
      section = &cfg.levels.back();
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    section->set(key, value);
  }
  return cfg;
}

inline RawConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

/// Fully typed run configuration, validated at construction.
struct LevelConfig {
  Box box;
  std::array<double, kMaxDim> h{};
  HyperParams hyper;
  int q = 0;  // TD mode count
};

struct RunConfig {
  std::string problem;          // poisson2d_gaussians | heat1d
  std::string solver = "full";  // full | td | pgd
  unsigned seed = 42;
  double tol = 1e-8;        // outer alternation tolerance
  double td_tol = 1e-7;     // inner ALS tolerance
  int max_iter = 50;        // outer alternation sweeps
  int max_sweeps = 200;     // inner ALS sweeps
  int quad_order = -1;      // -1: p+2 per level
  bool corrections = true;  // intermediate-level correction loads
  bool check_stagnation = true;  // inner ALS stagnation guard
  double mode_tol = 1e-3;   // pgd enrichment cutoff / modes study tolerance
  int max_modes = 20;
  int ladder = 3;                        // converge refinements
  std::string refine = "simultaneous";  // simultaneous | fine_only
  std::vector<LevelConfig> levels;

  LevelSpec level_spec(int l) const {
    const LevelConfig& lc = levels.at(l);
    LevelSpec spec;
    spec.domain = lc.box;
    spec.hyper = lc.hyper;
    spec.h = lc.h;
    spec.mode_count = lc.q;
    return spec;
  }
  std::vector<LevelSpec> level_specs() const {
    std::vector<LevelSpec> out;
    for (std::size_t l = 0; l < levels.size(); ++l) out.push_back(level_spec(static_cast<int>(l)));
    return out;
  }
};

/// Dimension of the named problem's domain (time axis included).
inline int problem_dim(const std::string& problem) {
  if (problem == "poisson2d_gaussians") return 2;
  if (problem == "heat1d") return 2;
  if (problem == "lpbf") return 4;
  throw ConfigError("unknown problem: " + problem);
}

inline RunConfig make_run_config(const RawConfig& raw) {
  RunConfig cfg;
  cfg.problem = raw.global.get_string("problem");
  const int dim = problem_dim(cfg.problem);
  cfg.solver = raw.global.get_string("solver", "full");
  if (cfg.solver != "full" && cfg.solver != "td" && cfg.solver != "pgd")
    throw ConfigError("solver must be one of: full, td, pgd");
  cfg.seed = static_cast<unsigned>(raw.global.get_int("seed", 42));
  cfg.tol = raw.global.get_double("tol", 1e-8);
  cfg.td_tol = raw.global.get_double("td_tol", 1e-7);
  cfg.max_iter = raw.global.get_int("max_iter", 50);
  cfg.max_sweeps = raw.global.get_int("max_sweeps", 200);
  cfg.quad_order = raw.global.get_int("quad_order", -1);
  cfg.corrections = raw.global.get_bool("corrections", true);
  cfg.check_stagnation = raw.global.get_bool("stagnation", true);
  cfg.mode_tol = raw.global.get_double("mode_tol", 1e-3);
  cfg.max_modes = raw.global.get_int("max_modes", 20);
  cfg.ladder = raw.global.get_int("ladder", 3);
  cfg.refine = raw.global.get_string("refine", "simultaneous");
  if (cfg.refine != "simultaneous" && cfg.refine != "fine_only")
    throw ConfigError("refine must be one of: simultaneous, fine_only");
  if (cfg.tol <= 0 || cfg.td_tol <= 0) throw ConfigError("tolerances must be positive");
  if (cfg.max_iter <= 0 || cfg.max_sweeps <= 0) throw ConfigError("iteration caps must be positive");

  if (raw.levels.empty()) throw ConfigError("config needs at least one [level N] section");
  for (std::size_t l = 0; l < raw.levels.size(); ++l) {
    const KeyValues& kv = raw.levels[l];
    LevelConfig lc;
    auto lo = kv.get_doubles("lo");
    auto hi = kv.get_doubles("hi");
    auto h = kv.get_doubles("h");
    if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim ||
        static_cast<int>(h.size()) != dim)
      throw ConfigError("level " + std::to_string(l) + ": lo/hi/h must each have " +
                        std::to_string(dim) + " entries");
    lc.box.dim = dim;
    for (int d = 0; d < dim; ++d) {
      lc.box.lo[d] = lo[d];
      lc.box.hi[d] = hi[d];
      lc.h[d] = h[d];
      if (!(hi[d] > lo[d])) throw ConfigError("level " + std::to_string(l) + ": needs hi > lo");
      if (!(h[d] > 0)) throw ConfigError("level " + std::to_string(l) + ": needs h > 0");
    }
    lc.hyper.p = kv.get_int("p", 3);
    lc.hyper.s = kv.get_int("s", 2);
    lc.hyper.a = kv.get_double("a", 3.0);
    lc.q = kv.get_int("q", 0);
    if (cfg.solver != "full" && lc.q <= 0)
      throw ConfigError("level " + std::to_string(l) + ": solver " + cfg.solver +
                        " needs a positive mode count q");
    cfg.levels.push_back(lc);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return make_run_config(load_config(path));
}

}  // namespace mlvms
