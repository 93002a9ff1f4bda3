// Drift and diffusion coefficient descriptions plus the built-in catalogue.
// In one dimension every discontinuous entry uses its right-continuous
// representative (the value at a jump is the right limit); indicator entries
// in higher dimension include the boundary of their closed domain.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace emlab {

enum class RegularityClass {
  smooth,
  lipschitz,
  hoelder,             // parameter hoelder_alpha
  sobolev,             // parameters sobolev_alpha, sobolev_m
  bounded_measurable,
};

using CoefficientFn =
    std::function<void(std::span<const double>, std::span<double>)>;

struct DriftSpec {
  int dimension = 1;
  CoefficientFn evaluator;  // writes b(x), length = dimension
  RegularityClass regularity = RegularityClass::smooth;
  double hoelder_alpha = 0.0;
  double sobolev_alpha = 0.0;
  double sobolev_m = 0.0;
  double sup_norm_bound = 0.0;  // Euclidean sup norm; +inf when unbounded
  std::optional<double> seminorm_bound;  // declared homogeneous Sobolev seminorm
  bool bounded = true;
  bool oracle_only = false;  // usable only for oracle comparisons
  std::string name;
};

struct DiffusionSpec {
  int dimension = 1;
  CoefficientFn evaluator;  // writes sigma(x), row-major dimension x dimension
  double ellipticity_lambda = 0.0;  // |y^T sigma sigma^T y| >= lambda^2 |y|^2
  double c2_bound = 0.0;            // bound on sigma and two derivatives
  bool is_additive = false;         // sigma identically the identity
  bool oracle_only = false;
  std::string name;
};

using Params = std::map<std::string, double>;

namespace detail {

inline double param_or(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void check_params_known(const Params& p,
                               std::initializer_list<const char*> known,
                               const std::string& who) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* name : known) ok = ok || (k == name);
    if (!ok) throw std::invalid_argument(who + ": unknown parameter '" + k + "'");
  }
}

}  // namespace detail

// Built-in drift catalogue. Valid names: zero, constant, linear_ou,
// hoelder_cusp, indicator_interval, indicator_lipschitz_domain,
// oscillatory_measurable, custom (the last must be constructed directly).
inline DriftSpec builtin_drift(const std::string& name, const Params& params = {},
                               int dimension = 1) {
  if (dimension < 1) throw std::invalid_argument("builtin_drift: dimension must be >= 1");
  DriftSpec spec;
  spec.dimension = dimension;
  spec.name = name;
  const double sqrt_d = std::sqrt(static_cast<double>(dimension));

  if (name == "zero") {
    detail::check_params_known(params, {}, name);
    spec.evaluator = [](std::span<const double>, std::span<double> out) {
      for (double& v : out) v = 0.0;
    };
    spec.regularity = RegularityClass::smooth;
    spec.sup_norm_bound = 0.0;
    spec.seminorm_bound = 0.0;
    return spec;
  }
  if (name == "constant") {
    detail::check_params_known(params, {"value"}, name);
    const double c = detail::param_or(params, "value", 1.0);
    spec.evaluator = [c](std::span<const double>, std::span<double> out) {
      for (double& v : out) v = c;
    };
    spec.regularity = RegularityClass::smooth;
    spec.sup_norm_bound = std::abs(c) * sqrt_d;
    spec.seminorm_bound = 0.0;
    return spec;
  }
  if (name == "linear_ou") {
    detail::check_params_known(params, {"theta"}, name);
    const double theta = detail::param_or(params, "theta", 1.0);
    if (theta <= 0.0) throw std::invalid_argument("linear_ou: theta must be positive");
    spec.evaluator = [theta](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = -theta * x[i];
    };
    spec.regularity = RegularityClass::smooth;
    spec.sup_norm_bound = std::numeric_limits<double>::infinity();
    spec.bounded = false;
    spec.oracle_only = true;  // unbounded: outside every assumption profile
    return spec;
  }
  if (name == "hoelder_cusp") {
    detail::check_params_known(params, {"alpha", "scale"}, name);
    const double alpha = detail::param_or(params, "alpha", 0.5);
    const double scale = detail::param_or(params, "scale", 1.0);
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("hoelder_cusp: alpha must lie in (0,1)");
    }
    spec.evaluator = [alpha, scale, sqrt_d](std::span<const double> x,
                                            std::span<double> out) {
      double r2 = 0.0;
      for (double xi : x) r2 += xi * xi;
      const double v =
          scale / sqrt_d * std::max(0.0, 1.0 - std::pow(std::sqrt(r2), alpha));
      for (double& o : out) o = v;
    };
    spec.regularity = RegularityClass::hoelder;
    spec.hoelder_alpha = alpha;
    spec.sup_norm_bound = std::abs(scale);
    return spec;
  }
  if (name == "indicator_interval") {
    detail::check_params_known(params, {"lo", "hi", "alpha", "m", "scale"}, name);
    if (dimension != 1) {
      throw std::invalid_argument("indicator_interval: one-dimensional only");
    }
    const double lo = detail::param_or(params, "lo", 0.0);
    const double hi = detail::param_or(params, "hi", 1.0);
    const double alpha = detail::param_or(params, "alpha", 0.25);
    const double m = detail::param_or(params, "m", 2.0);
    const double scale = detail::param_or(params, "scale", 1.0);
    if (!(hi > lo)) throw std::invalid_argument("indicator_interval: need hi > lo");
    if (!(alpha > 0.0 && alpha < 1.0) || m < 1.0 || alpha * m >= 1.0) {
      throw std::invalid_argument(
          "indicator_interval: need alpha in (0,1), m >= 1, alpha*m < 1");
    }
    spec.evaluator = [lo, hi, scale](std::span<const double> x, std::span<double> out) {
      out[0] = (x[0] >= lo && x[0] < hi) ? scale : 0.0;  // right-continuous
    };
    spec.regularity = RegularityClass::sobolev;
    spec.sobolev_alpha = alpha;
    spec.sobolev_m = m;
    spec.sup_norm_bound = std::abs(scale);
    // closed form: the indicator of a width-w interval has
    // seminorm^m = |scale|^m * w^(1-alpha m) * 4 / (alpha m (1 - alpha m))
    const double beta = alpha * m;
    spec.seminorm_bound =
        std::pow(std::pow(std::abs(scale), m) * std::pow(hi - lo, 1.0 - beta) * 4.0 /
                     (beta * (1.0 - beta)),
                 1.0 / m);
    return spec;
  }
  if (name == "indicator_lipschitz_domain") {
    detail::check_params_known(params, {"half_width", "alpha", "m", "scale"}, name);
    const double w = detail::param_or(params, "half_width", 1.0);
    const double alpha = detail::param_or(params, "alpha", 0.25);
    const double m = detail::param_or(params, "m", 2.0);
    const double scale = detail::param_or(params, "scale", 1.0);
    if (w <= 0.0) throw std::invalid_argument("indicator_lipschitz_domain: half_width > 0");
    if (!(alpha > 0.0 && alpha < 1.0) || m < 1.0 || alpha * m >= 1.0) {
      throw std::invalid_argument(
          "indicator_lipschitz_domain: need alpha in (0,1), m >= 1, alpha*m < 1");
    }
    const bool half_open = (dimension == 1);  // right-continuous in d = 1
    const double component = scale / sqrt_d;
    spec.evaluator = [w, component, half_open](std::span<const double> x,
                                               std::span<double> out) {
      bool inside = true;
      for (double xi : x) {
        inside = inside && (half_open ? (xi >= -w && xi < w)
                                      : (xi >= -w && xi <= w));
      }
      const double v = inside ? component : 0.0;
      for (double& o : out) o = v;
    };
    spec.regularity = RegularityClass::sobolev;
    spec.sobolev_alpha = alpha;
    spec.sobolev_m = m;
    spec.sup_norm_bound = std::abs(scale);
    return spec;
  }
  if (name == "oscillatory_measurable") {
    detail::check_params_known(params, {"scale"}, name);
    if (dimension != 1) {
      throw std::invalid_argument("oscillatory_measurable: one-dimensional only");
    }
    const double scale = detail::param_or(params, "scale", 1.0);
    spec.evaluator = [scale](std::span<const double> x, std::span<double> out) {
      out[0] = (x[0] == 0.0 || std::sin(1.0 / x[0]) > 0.0) ? scale : 0.0;
    };
    spec.regularity = RegularityClass::bounded_measurable;
    spec.sup_norm_bound = std::abs(scale);
    return spec;
  }
  if (name == "custom") {
    throw std::invalid_argument(
        "builtin_drift: custom drifts carry their own evaluator; construct a "
        "DriftSpec directly instead");
  }
  throw std::invalid_argument("builtin_drift: unknown key '" + name + "'");
}

// Built-in diffusion catalogue. Valid names: identity, scaled_identity,
// sine_elliptic, gbm_test.
inline DiffusionSpec builtin_diffusion(const std::string& name,
                                       const Params& params = {},
                                       int dimension = 1) {
  if (dimension < 1) throw std::invalid_argument("builtin_diffusion: dimension must be >= 1");
  DiffusionSpec spec;
  spec.dimension = dimension;
  spec.name = name;
  const std::size_t d = static_cast<std::size_t>(dimension);

  if (name == "identity" || name == "scaled_identity") {
    detail::check_params_known(params, {"scale"}, name);
    const double s =
        (name == "identity") ? 1.0 : detail::param_or(params, "scale", 1.0);
    if (s < 0.0) throw std::invalid_argument(name + ": scale must be nonnegative");
    spec.evaluator = [s, d](std::span<const double>, std::span<double> out) {
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (i == j) ? s : 0.0;
      }
    };
    spec.ellipticity_lambda = s;
    spec.c2_bound = s;
    spec.is_additive = (s == 1.0);
    // The zero matrix turns the scheme into a deterministic Euler method;
    // useful as an exact benchmark but outside every ellipticity assumption.
    spec.oracle_only = (s == 0.0);
    return spec;
  }
  if (name == "sine_elliptic") {
    detail::check_params_known(params, {"c"}, name);
    if (dimension != 1) throw std::invalid_argument("sine_elliptic: one-dimensional only");
    const double c = detail::param_or(params, "c", 0.5);
    if (!(std::abs(c) < 1.0)) {
      throw std::invalid_argument("sine_elliptic: need |c| < 1 for ellipticity");
    }
    spec.evaluator = [c](std::span<const double> x, std::span<double> out) {
      out[0] = 1.0 + c * std::sin(x[0]);
    };
    spec.ellipticity_lambda = 1.0 - std::abs(c);
    spec.c2_bound = 1.0 + 3.0 * std::abs(c);
    return spec;
  }
  if (name == "gbm_test") {
    detail::check_params_known(params, {}, name);
    if (dimension != 1) throw std::invalid_argument("gbm_test: one-dimensional only");
    spec.evaluator = [](std::span<const double> x, std::span<double> out) {
      out[0] = x[0];
    };
    spec.ellipticity_lambda = 0.0;  // degenerate at the origin
    spec.c2_bound = std::numeric_limits<double>::infinity();
    spec.oracle_only = true;
    return spec;
  }
  throw std::invalid_argument("builtin_diffusion: unknown key '" + name + "'");
}

// Pointwise sum of one-dimensional drifts (metadata combined by the triangle
// inequality; regularity drops to the weakest class among the terms).
inline DriftSpec drift_sum(const DriftSpec& a, const DriftSpec& b,
                           const std::string& name) {
  if (a.dimension != 1 || b.dimension != 1) {
    throw std::invalid_argument("drift_sum: one-dimensional terms only");
  }
  DriftSpec out = a;
  out.name = name;
  auto fa = a.evaluator, fb = b.evaluator;
  out.evaluator = [fa, fb](std::span<const double> x, std::span<double> o) {
    double va, vb;
    fa(x, std::span<double>(&va, 1));
    fb(x, std::span<double>(&vb, 1));
    o[0] = va + vb;
  };
  out.sup_norm_bound = a.sup_norm_bound + b.sup_norm_bound;
  out.bounded = a.bounded && b.bounded;
  out.oracle_only = a.oracle_only || b.oracle_only;
  const auto weaker = [](RegularityClass u, RegularityClass v) {
    return static_cast<int>(u) >= static_cast<int>(v) ? u : v;
  };
  out.regularity = weaker(a.regularity, b.regularity);
  if (a.regularity == RegularityClass::sobolev &&
      b.regularity == RegularityClass::sobolev && a.sobolev_alpha == b.sobolev_alpha &&
      a.sobolev_m == b.sobolev_m && a.seminorm_bound && b.seminorm_bound) {
    out.seminorm_bound = *a.seminorm_bound + *b.seminorm_bound;
  } else {
    out.seminorm_bound.reset();
  }
  return out;
}

// View a one-dimensional drift as a plain scalar function.
inline std::function<double(double)> scalar_function(const DriftSpec& spec) {
  if (spec.dimension != 1) {
    throw std::invalid_argument("scalar_function: drift must be one-dimensional");
  }
  auto ev = spec.evaluator;
  return [ev](double x) {
    double out;
    ev(std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
  };
}

}  // namespace emlab
