#pragma once

// Experiment configuration: a single human-readable key-value document per
// experiment, with an inline schema version. Parsing, structural validation,
// canonical serialization and fingerprinting live here; resolving coefficient
// keys into evaluators is the experiment runner's job.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emlab {

inline constexpr int kConfigSchemaVersion = 1;

// Raised for malformed or structurally invalid configurations; the CLI maps
// it to its validation-failure exit code.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentKind {
  rate_sweep,        // strong-error ladder against a reference solution
  quadrature_sweep,  // Riemann-sum functional of a path, swept over anchors
  sobolev_estimate,  // deterministic seminorm estimation on a mesh ladder
  density_diagnostic,  // Monte Carlo check of the near-Gaussian density bound
  oracle_validation,   // randomized bitwise coupling trials
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::rate_sweep: return "rate_sweep";
    case ExperimentKind::quadrature_sweep: return "quadrature_sweep";
    case ExperimentKind::sobolev_estimate: return "sobolev_estimate";
    case ExperimentKind::density_diagnostic: return "density_diagnostic";
    case ExperimentKind::oracle_validation: return "oracle_validation";
  }
  throw std::logic_error("to_string: bad ExperimentKind");
}

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "rate_sweep") return ExperimentKind::rate_sweep;
  if (s == "quadrature_sweep") return ExperimentKind::quadrature_sweep;
  if (s == "sobolev_estimate") return ExperimentKind::sobolev_estimate;
  if (s == "density_diagnostic") return ExperimentKind::density_diagnostic;
  if (s == "oracle_validation") return ExperimentKind::oracle_validation;
  throw ConfigError("config: unknown kind '" + s + "'");
}

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name;   // output file stem, [A-Za-z0-9_-]
  ExperimentKind kind = ExperimentKind::rate_sweep;
  std::string claim;  // the mathematical statement the run probes

  // Coefficient catalogue keys and parameters.
  std::string drift = "zero";
  std::map<std::string, double> drift_params;
  std::string diffusion = "identity";
  std::map<std::string, double> diffusion_params;
  std::string bump;  // density diagnostics: the bump observable
  std::map<std::string, double> bump_params;
  std::string profile = "oracle_only";

  int dimension = 1;
  std::vector<double> x0;  // empty means the origin

  // Sweep geometry and Monte Carlo budget.
  std::vector<int> levels_log2;
  int reference_level = 0;
  int gap = 6;
  std::uint64_t paths = 0;
  int batches = 8;
  double p = 2.0;
  std::uint64_t seed = 0;

  // Kind-specific knobs.
  std::string statistic = "running_sup";  // quadrature: running_sup | terminal
  std::string process = "brownian";       // quadrature: brownian | em_scheme
  double alpha = 0.25;                    // sobolev_estimate exponent
  double m = 2.0;                         // sobolev_estimate integrability
  double radius = 10.0;                   // sobolev_estimate truncation radius
  std::vector<double> meshes;             // sobolev_estimate mesh ladder
  std::vector<double> times;              // density_diagnostic times
  std::uint64_t trials = 0;               // oracle_validation trial count

  // Presentation and bookkeeping; excluded from the fingerprint.
  double budget_seconds = 0.0;  // 0 disables the budget check
  std::string out_dir = ".";
};

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(s).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(s).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline double parse_double_token(const std::string& tok, const std::string& key) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last || tok.empty()) {
    throw ConfigError("config: key '" + key + "' has a malformed number '" +
                      tok + "'");
  }
  return v;
}

inline std::uint64_t parse_u64_token(const std::string& tok,
                                     const std::string& key) {
  std::uint64_t v = 0;
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), last, v);
  if (res.ec != std::errc{} || res.ptr != last || tok.empty()) {
    throw ConfigError("config: key '" + key +
                      "' has a malformed unsigned integer '" + tok + "'");
  }
  return v;
}

inline int parse_int_token(const std::string& tok, const std::string& key) {
  int v = 0;
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), last, v);
  if (res.ec != std::errc{} || res.ptr != last || tok.empty()) {
    throw ConfigError("config: key '" + key + "' has a malformed integer '" +
                      tok + "'");
  }
  return v;
}

inline std::vector<double> parse_double_list(const std::string& value,
                                             const std::string& key) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(value)) {
    out.push_back(parse_double_token(tok, key));
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& value,
                                       const std::string& key) {
  std::vector<int> out;
  for (const std::string& tok : split_commas(value)) {
    out.push_back(parse_int_token(tok, key));
  }
  return out;
}

inline bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                    c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

// Parses the key-value document format: one `key = value` pair per line,
// full-line comments starting with '#', blank lines ignored. Duplicate or
// unknown keys are errors. Coefficient parameters use dotted keys
// (`drift.theta = 1.0`).
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, bool> seen;
  bool kind_set = false;

  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string line = detail::trim(
        std::string_view(text).substr(pos, eol == std::string::npos
                                               ? std::string::npos
                                               : eol - pos));
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++lineno;
    if (line.empty() || line[0] == '#') continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not a key = value pair");
    }
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value =
        detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " has an empty key");
    }
    if (seen[key]) {
      throw ConfigError("config: duplicate key '" + key + "'");
    }
    seen[key] = true;
    if (value.empty()) {
      throw ConfigError("config: key '" + key + "' has an empty value");
    }

    const auto dotted = [&](const char* prefix) {
      return key.size() > std::strlen(prefix) &&
             key.compare(0, std::strlen(prefix), prefix) == 0;
    };

    if (key == "schema_version") {
      cfg.schema_version = detail::parse_int_token(value, key);
    } else if (key == "name") {
      cfg.name = value;
    } else if (key == "kind") {
      cfg.kind = parse_kind(value);
      kind_set = true;
    } else if (key == "claim") {
      cfg.claim = value;
    } else if (key == "drift") {
      cfg.drift = value;
    } else if (dotted("drift.")) {
      cfg.drift_params[key.substr(6)] = detail::parse_double_token(value, key);
    } else if (key == "diffusion") {
      cfg.diffusion = value;
    } else if (dotted("diffusion.")) {
      cfg.diffusion_params[key.substr(10)] =
          detail::parse_double_token(value, key);
    } else if (key == "bump") {
      cfg.bump = value;
    } else if (dotted("bump.")) {
      cfg.bump_params[key.substr(5)] = detail::parse_double_token(value, key);
    } else if (key == "profile") {
      cfg.profile = value;
    } else if (key == "dimension") {
      cfg.dimension = detail::parse_int_token(value, key);
    } else if (key == "x0") {
      cfg.x0 = detail::parse_double_list(value, key);
    } else if (key == "levels") {
      cfg.levels_log2 = detail::parse_int_list(value, key);
    } else if (key == "reference_level") {
      cfg.reference_level = detail::parse_int_token(value, key);
    } else if (key == "gap") {
      cfg.gap = detail::parse_int_token(value, key);
    } else if (key == "paths") {
      cfg.paths = detail::parse_u64_token(value, key);
    } else if (key == "batches") {
      cfg.batches = detail::parse_int_token(value, key);
    } else if (key == "p") {
      cfg.p = detail::parse_double_token(value, key);
    } else if (key == "seed") {
      cfg.seed = detail::parse_u64_token(value, key);
    } else if (key == "statistic") {
      cfg.statistic = value;
    } else if (key == "process") {
      cfg.process = value;
    } else if (key == "alpha") {
      cfg.alpha = detail::parse_double_token(value, key);
    } else if (key == "m") {
      cfg.m = detail::parse_double_token(value, key);
    } else if (key == "radius") {
      cfg.radius = detail::parse_double_token(value, key);
    } else if (key == "meshes") {
      cfg.meshes = detail::parse_double_list(value, key);
    } else if (key == "times") {
      cfg.times = detail::parse_double_list(value, key);
    } else if (key == "trials") {
      cfg.trials = detail::parse_u64_token(value, key);
    } else if (key == "budget_seconds") {
      cfg.budget_seconds = detail::parse_double_token(value, key);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  if (!kind_set) throw ConfigError("config: missing required key 'kind'");
  if (cfg.name.empty()) throw ConfigError("config: missing required key 'name'");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

// Structural validation: field ranges and cross-field invariants that do not
// require resolving coefficient keys. Throws ConfigError on the first
// violation.
inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " +
                      std::to_string(cfg.schema_version));
  }
  if (!detail::valid_name(cfg.name)) {
    throw ConfigError(
        "config: name must be nonempty and use only letters, digits, '-', '_'");
  }
  if (cfg.dimension < 1 || cfg.dimension > 16) {
    throw ConfigError("config: dimension must lie in [1, 16]");
  }
  if (!cfg.x0.empty() &&
      static_cast<int>(cfg.x0.size()) != cfg.dimension) {
    throw ConfigError("config: x0 must be empty or match the dimension");
  }
  for (double v : cfg.x0) {
    if (!std::isfinite(v)) throw ConfigError("config: x0 must be finite");
  }
  if (cfg.budget_seconds < 0.0 || !std::isfinite(cfg.budget_seconds)) {
    throw ConfigError("config: budget_seconds must be finite and nonnegative");
  }

  const auto check_levels = [&](bool need_reference_gap) {
    if (cfg.levels_log2.empty()) {
      throw ConfigError("config: levels must be a nonempty list");
    }
    for (std::size_t i = 0; i < cfg.levels_log2.size(); ++i) {
      if (cfg.levels_log2[i] < 1 || cfg.levels_log2[i] > 30) {
        throw ConfigError("config: levels must lie in [1, 30]");
      }
      if (i > 0 && cfg.levels_log2[i] <= cfg.levels_log2[i - 1]) {
        throw ConfigError("config: levels must be strictly increasing");
      }
    }
    if (need_reference_gap) {
      if (cfg.gap < 4) {
        throw ConfigError("config: gap must be at least 4");
      }
      if (cfg.reference_level < cfg.levels_log2.back() + cfg.gap) {
        throw ConfigError(
            "config: reference_level must exceed the top level by the gap");
      }
    } else if (cfg.reference_level < cfg.levels_log2.back()) {
      throw ConfigError(
          "config: reference_level must be at least the top level");
    }
    if (cfg.reference_level > 26) {
      throw ConfigError("config: reference_level must be at most 26");
    }
  };
  const auto check_monte_carlo = [&] {
    if (cfg.paths == 0) throw ConfigError("config: paths must be positive");
    if (cfg.batches < 2 || cfg.batches > 64) {
      throw ConfigError("config: batches must lie in [2, 64]");
    }
    if (cfg.paths % static_cast<std::uint64_t>(cfg.batches) != 0) {
      throw ConfigError("config: paths must be divisible by batches");
    }
    if (!(cfg.p > 0.0) || !std::isfinite(cfg.p)) {
      throw ConfigError("config: p must be positive and finite");
    }
  };

  switch (cfg.kind) {
    case ExperimentKind::rate_sweep:
      check_levels(/*need_reference_gap=*/true);
      check_monte_carlo();
      break;
    case ExperimentKind::quadrature_sweep:
      check_levels(/*need_reference_gap=*/false);
      check_monte_carlo();
      if (cfg.dimension != 1) {
        throw ConfigError("config: quadrature sweeps are one-dimensional");
      }
      if (cfg.statistic != "running_sup" && cfg.statistic != "terminal") {
        throw ConfigError("config: statistic must be running_sup or terminal");
      }
      if (cfg.process != "brownian" && cfg.process != "em_scheme") {
        throw ConfigError("config: process must be brownian or em_scheme");
      }
      break;
    case ExperimentKind::sobolev_estimate: {
      if (cfg.meshes.empty()) {
        throw ConfigError("config: meshes must be a nonempty list");
      }
      if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
        throw ConfigError("config: alpha must lie in (0, 1)");
      }
      if (!(cfg.m >= 1.0) || !std::isfinite(cfg.m)) {
        throw ConfigError("config: m must be at least 1");
      }
      if (!(cfg.radius >= 1.0) || !std::isfinite(cfg.radius)) {
        throw ConfigError("config: radius must be at least 1");
      }
      for (std::size_t i = 0; i < cfg.meshes.size(); ++i) {
        if (!(cfg.meshes[i] > 0.0) || !(cfg.meshes[i] <= cfg.radius / 160.0)) {
          throw ConfigError(
              "config: each mesh must be positive and at most radius / 160");
        }
        if (i > 0 && cfg.meshes[i] >= cfg.meshes[i - 1]) {
          throw ConfigError("config: meshes must be strictly decreasing");
        }
      }
      if (cfg.dimension != 1) {
        throw ConfigError("config: seminorm estimation is one-dimensional");
      }
      break;
    }
    case ExperimentKind::density_diagnostic:
      if (cfg.times.empty()) {
        throw ConfigError("config: times must be a nonempty list");
      }
      for (double t : cfg.times) {
        if (!(t > 0.0) || !(t <= 1.0)) {
          throw ConfigError("config: times must lie in (0, 1]");
        }
      }
      if (cfg.reference_level < 1 || cfg.reference_level > 24) {
        throw ConfigError("config: reference_level must lie in [1, 24]");
      }
      if (cfg.paths == 0) throw ConfigError("config: paths must be positive");
      if (!(cfg.p >= 1.0) || !std::isfinite(cfg.p)) {
        throw ConfigError("config: p must be at least 1");
      }
      if (cfg.bump.empty()) {
        throw ConfigError("config: density diagnostics need a bump observable");
      }
      if (cfg.profile == "oracle_only") {
        throw ConfigError(
            "config: density diagnostics need an assumption profile with an "
            "ellipticity promise");
      }
      break;
    case ExperimentKind::oracle_validation:
      if (cfg.trials == 0) {
        throw ConfigError("config: trials must be positive");
      }
      break;
  }
}

namespace detail {

inline void append_params(std::vector<std::pair<std::string, std::string>>& kv,
                          const std::string& prefix,
                          const std::map<std::string, double>& params) {
  for (const auto& [k, v] : params) {
    kv.emplace_back(prefix + "." + k, fmt_g17(v));
  }
}

}  // namespace detail

// Canonical serialization: every semantically meaningful field, sorted by
// key, numbers normalized to 17 significant digits. Presentation fields
// (name, claim, out_dir, budget_seconds) are deliberately excluded, so the
// fingerprint identifies the computation rather than its labeling.
inline std::string canonical_serialization(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("schema_version", std::to_string(cfg.schema_version));
  kv.emplace_back("kind", to_string(cfg.kind));
  kv.emplace_back("drift", cfg.drift);
  detail::append_params(kv, "drift", cfg.drift_params);
  kv.emplace_back("diffusion", cfg.diffusion);
  detail::append_params(kv, "diffusion", cfg.diffusion_params);
  kv.emplace_back("bump", cfg.bump);
  detail::append_params(kv, "bump", cfg.bump_params);
  kv.emplace_back("profile", cfg.profile);
  kv.emplace_back("dimension", std::to_string(cfg.dimension));

  const auto join_doubles = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += detail::fmt_g17(v[i]);
    }
    return s;
  };
  std::string levels;
  for (std::size_t i = 0; i < cfg.levels_log2.size(); ++i) {
    if (i) levels += ',';
    levels += std::to_string(cfg.levels_log2[i]);
  }
  kv.emplace_back("x0", join_doubles(cfg.x0));
  kv.emplace_back("levels", levels);
  kv.emplace_back("reference_level", std::to_string(cfg.reference_level));
  kv.emplace_back("gap", std::to_string(cfg.gap));
  kv.emplace_back("paths", std::to_string(cfg.paths));
  kv.emplace_back("batches", std::to_string(cfg.batches));
  kv.emplace_back("p", detail::fmt_g17(cfg.p));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("statistic", cfg.statistic);
  kv.emplace_back("process", cfg.process);
  kv.emplace_back("alpha", detail::fmt_g17(cfg.alpha));
  kv.emplace_back("m", detail::fmt_g17(cfg.m));
  kv.emplace_back("radius", detail::fmt_g17(cfg.radius));
  kv.emplace_back("meshes", join_doubles(cfg.meshes));
  kv.emplace_back("times", join_doubles(cfg.times));
  kv.emplace_back("trials", std::to_string(cfg.trials));

  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

// 64-bit FNV-1a over the canonical serialization, rendered as 16 hex digits.
inline std::string fingerprint_config(const ExperimentConfig& cfg) {
  const std::string bytes = canonical_serialization(cfg);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// Renders a config back into the key-value document format, in canonical key
// order. parse_config(serialize_config(c)) reproduces c up to defaults.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  const auto put = [&](const std::string& k, const std::string& v) {
    if (!v.empty()) out += k + " = " + v + "\n";
  };
  put("schema_version", std::to_string(cfg.schema_version));
  put("name", cfg.name);
  put("kind", to_string(cfg.kind));
  put("claim", cfg.claim);
  put("drift", cfg.drift);
  for (const auto& [k, v] : cfg.drift_params) {
    put("drift." + k, detail::fmt_g17(v));
  }
  put("diffusion", cfg.diffusion);
  for (const auto& [k, v] : cfg.diffusion_params) {
    put("diffusion." + k, detail::fmt_g17(v));
  }
  put("bump", cfg.bump);
  for (const auto& [k, v] : cfg.bump_params) {
    put("bump." + k, detail::fmt_g17(v));
  }
  put("profile", cfg.profile);
  put("dimension", std::to_string(cfg.dimension));
  std::string x0s;
  for (std::size_t i = 0; i < cfg.x0.size(); ++i) {
    if (i) x0s += ", ";
    x0s += detail::fmt_g17(cfg.x0[i]);
  }
  put("x0", x0s);
  std::string levels;
  for (std::size_t i = 0; i < cfg.levels_log2.size(); ++i) {
    if (i) levels += ", ";
    levels += std::to_string(cfg.levels_log2[i]);
  }
  put("levels", levels);
  if (cfg.reference_level > 0) {
    put("reference_level", std::to_string(cfg.reference_level));
  }
  put("gap", std::to_string(cfg.gap));
  if (cfg.paths > 0) put("paths", std::to_string(cfg.paths));
  put("batches", std::to_string(cfg.batches));
  put("p", detail::fmt_g17(cfg.p));
  put("seed", std::to_string(cfg.seed));
  if (cfg.kind == ExperimentKind::quadrature_sweep) {
    put("statistic", cfg.statistic);
    put("process", cfg.process);
  }
  if (cfg.kind == ExperimentKind::sobolev_estimate) {
    put("alpha", detail::fmt_g17(cfg.alpha));
    put("m", detail::fmt_g17(cfg.m));
    put("radius", detail::fmt_g17(cfg.radius));
    std::string ms;
    for (std::size_t i = 0; i < cfg.meshes.size(); ++i) {
      if (i) ms += ", ";
      ms += detail::fmt_g17(cfg.meshes[i]);
    }
    put("meshes", ms);
  }
  if (cfg.kind == ExperimentKind::density_diagnostic) {
    std::string ts;
    for (std::size_t i = 0; i < cfg.times.size(); ++i) {
      if (i) ts += ", ";
      ts += detail::fmt_g17(cfg.times[i]);
    }
    put("times", ts);
  }
  if (cfg.trials > 0) put("trials", std::to_string(cfg.trials));
  if (cfg.budget_seconds > 0.0) {
    put("budget_seconds", detail::fmt_g17(cfg.budget_seconds));
  }
  put("out_dir", cfg.out_dir);
  return out;
}

}  // namespace emlab
