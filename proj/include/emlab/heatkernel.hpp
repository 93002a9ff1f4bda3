#pragma once

// Exact Gaussian densities and heat-semigroup quadrature utilities. These are
// the analytic oracles behind the quadrature and density diagnostics: a
// centered Gaussian kernel with a general SPD covariance, the heat semigroup
// P_t f = p_t * f evaluated by deterministic quadrature in d <= 2, a
// time-regularity ratio sweep for P_t on rough integrands, and the Gaussian
// moment envelope |x|^k p_t(x) <= sqrt(2) (2k/e)^{k/2} t^{k/2} p_{2t}(x).
//
// Note the doubled-time normalization in the moment envelope: comparing
// against the *halved*-time density cannot work, since
// p_t(x) / p_{t/2}(x) = sqrt(1/2) exp(+x^2/(2t)) grows without bound. The
// doubled-time ratio sqrt(2) u^k exp(-u^2/4), u = |x|/sqrt(t), peaks at
// u = sqrt(2k) with the finite envelope above.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emlab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Centered Gaussian with a general symmetric positive-definite covariance.
// The inverse and determinant are precomputed at construction.
struct GaussianKernel {
  int dimension = 0;
  std::vector<double> covariance;  // row-major d x d
  std::vector<double> inverse;     // row-major d x d
  double determinant = 1.0;
  double norm_constant = 0.0;  // (2 pi)^{-d/2} det^{-1/2}
};

inline GaussianKernel make_gaussian_kernel(int dimension,
                                           std::vector<double> covariance) {
  if (dimension < 1) {
    throw std::invalid_argument("gaussian_kernel: dimension must be positive");
  }
  const std::size_t d = static_cast<std::size_t>(dimension);
  if (covariance.size() != d * d) {
    throw std::invalid_argument("gaussian_kernel: covariance size mismatch");
  }
  for (double v : covariance) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("gaussian_kernel: covariance must be finite");
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(covariance[i * d + j] - covariance[j * d + i]) > 1e-12) {
        throw std::invalid_argument("gaussian_kernel: covariance not symmetric");
      }
    }
  }

  // Cholesky factorization; a non-positive pivot means the matrix is not
  // positive definite.
  std::vector<double> L(d * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double diag = covariance[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= L[j * d + k] * L[j * d + k];
    if (!(diag > 0.0)) {
      throw std::invalid_argument("gaussian_kernel: covariance not positive definite");
    }
    L[j * d + j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double off = covariance[i * d + j];
      for (std::size_t k = 0; k < j; ++k) off -= L[i * d + k] * L[j * d + k];
      L[i * d + j] = off / L[j * d + j];
    }
  }

  GaussianKernel kernel;
  kernel.dimension = dimension;
  kernel.covariance = std::move(covariance);
  kernel.determinant = 1.0;
  for (std::size_t j = 0; j < d; ++j) {
    kernel.determinant *= L[j * d + j] * L[j * d + j];
  }

  // Inverse by forward/back substitution against unit columns.
  kernel.inverse.assign(d * d, 0.0);
  std::vector<double> y(d), z(d);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < d; ++i) {
      double v = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) v -= L[i * d + k] * y[k];
      y[i] = v / L[i * d + i];
    }
    for (std::size_t ii = d; ii-- > 0;) {
      double v = y[ii];
      for (std::size_t k = ii + 1; k < d; ++k) v -= L[k * d + ii] * z[k];
      z[ii] = v / L[ii * d + ii];
    }
    for (std::size_t i = 0; i < d; ++i) kernel.inverse[i * d + c] = z[i];
  }

  kernel.norm_constant = std::pow(kTwoPi, -0.5 * static_cast<double>(dimension)) /
                         std::sqrt(kernel.determinant);
  return kernel;
}

inline double density(const GaussianKernel& kernel, std::span<const double> x) {
  const std::size_t d = static_cast<std::size_t>(kernel.dimension);
  if (x.size() != d) {
    throw std::invalid_argument("density: point dimension mismatch");
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += kernel.inverse[i * d + j] * x[j];
    quad += x[i] * row;
  }
  return kernel.norm_constant * std::exp(-0.5 * quad);
}

inline double density(const GaussianKernel& kernel, double x) {
  return density(kernel, std::span<const double>(&x, 1));
}

namespace detail {

// Composite-Simpson weight for node i of n+1 nodes (n even).
inline double simpson_weight(std::size_t i, std::size_t n) {
  if (i == 0 || i == n) return 1.0;
  return (i % 2 == 1) ? 4.0 : 2.0;
}

}  // namespace detail

// Quadrature check of the kernel's unit mass, d <= 2: composite Simpson over
// a box of +-8 standard deviations per axis.
inline double kernel_mass_quadrature(const GaussianKernel& kernel,
                                     std::size_t points_per_axis = 2049) {
  if (kernel.dimension > 2) {
    throw std::invalid_argument(
        "kernel_mass_quadrature: grid quadrature is limited to d <= 2");
  }
  std::size_t n = points_per_axis < 9 ? 8 : points_per_axis - 1;
  if (n % 2 == 1) ++n;
  const std::size_t d = static_cast<std::size_t>(kernel.dimension);
  std::vector<double> halfwidth(d), step(d);
  for (std::size_t a = 0; a < d; ++a) {
    halfwidth[a] = 8.0 * std::sqrt(kernel.covariance[a * d + a]);
    step[a] = 2.0 * halfwidth[a] / static_cast<double>(n);
  }
  double acc = 0.0;
  if (d == 1) {
    for (std::size_t i = 0; i <= n; ++i) {
      const double x = -halfwidth[0] + static_cast<double>(i) * step[0];
      acc += detail::simpson_weight(i, n) * density(kernel, x);
    }
    return acc * step[0] / 3.0;
  }
  std::vector<double> x(2);
  for (std::size_t i = 0; i <= n; ++i) {
    x[0] = -halfwidth[0] + static_cast<double>(i) * step[0];
    const double wi = detail::simpson_weight(i, n);
    double row = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
      x[1] = -halfwidth[1] + static_cast<double>(j) * step[1];
      row += detail::simpson_weight(j, n) * density(kernel, x);
    }
    acc += wi * row;
  }
  return acc * step[0] * step[1] / 9.0;
}

// A quadrature value together with the observed change under one mesh
// halving, as a practical error indicator.
struct SemigroupValue {
  double value = 0.0;
  double mesh_error = 0.0;
};

namespace detail {

inline double heat_convolution_1d(const std::function<double(double)>& f,
                                  double t, double x, double spacing) {
  const double w = 8.0 * std::sqrt(t);
  std::size_t cells =
      static_cast<std::size_t>(std::ceil(2.0 * w / spacing));
  if (cells < 8) cells = 8;
  if (cells % 2 == 1) ++cells;
  const double H = 2.0 * w / static_cast<double>(cells);
  const double inv2t = 1.0 / (2.0 * t);
  const double norm = 1.0 / std::sqrt(kTwoPi * t);
  double acc = 0.0;
  for (std::size_t i = 0; i <= cells; ++i) {
    const double r = w - static_cast<double>(i) * H;  // x - y
    acc += simpson_weight(i, cells) * f(x - r) * std::exp(-r * r * inv2t);
  }
  return norm * acc * H / 3.0;
}

inline double heat_convolution_2d(const std::function<double(double, double)>& f,
                                  double t, double x0, double x1,
                                  double spacing) {
  const double w = 8.0 * std::sqrt(t);
  std::size_t cells =
      static_cast<std::size_t>(std::ceil(2.0 * w / spacing));
  if (cells < 8) cells = 8;
  if (cells % 2 == 1) ++cells;
  const double H = 2.0 * w / static_cast<double>(cells);
  const double inv2t = 1.0 / (2.0 * t);
  const double norm = 1.0 / (kTwoPi * t);
  double acc = 0.0;
  for (std::size_t i = 0; i <= cells; ++i) {
    const double r0 = w - static_cast<double>(i) * H;
    const double g0 = std::exp(-r0 * r0 * inv2t);
    double row = 0.0;
    for (std::size_t j = 0; j <= cells; ++j) {
      const double r1 = w - static_cast<double>(j) * H;
      row += simpson_weight(j, cells) * f(x0 - r0, x1 - r1) *
             std::exp(-r1 * r1 * inv2t);
    }
    acc += simpson_weight(i, cells) * g0 * row;
  }
  return norm * acc * H * H / 9.0;
}

inline void check_semigroup_args(bool have_f, double t, double mesh,
                                 const char* where) {
  if (!have_f) {
    throw std::invalid_argument(std::string(where) + ": missing integrand");
  }
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw std::invalid_argument(std::string(where) + ": time must be positive");
  }
  if (mesh < 0.0 || !std::isfinite(mesh)) {
    throw std::invalid_argument(std::string(where) + ": invalid mesh");
  }
  if (mesh > std::sqrt(t)) {
    throw std::invalid_argument(std::string(where) +
                                ": mesh coarser than the diffusion scale");
  }
}

}  // namespace detail

// P_t f(x) for a bounded scalar f by truncated Simpson convolution against
// the standard heat kernel (window +-8 sqrt(t)). mesh is the quadrature
// spacing; 0 picks sqrt(t)/16384. The returned value uses the halved mesh and
// mesh_error reports the change from the halving.
inline SemigroupValue semigroup_apply(const std::function<double(double)>& f,
                                      double t, double x, double mesh = 0.0) {
  detail::check_semigroup_args(static_cast<bool>(f), t, mesh, "semigroup_apply");
  if (mesh == 0.0) mesh = std::sqrt(t) / 16384.0;
  const double coarse = detail::heat_convolution_1d(f, t, x, mesh);
  const double fine = detail::heat_convolution_1d(f, t, x, mesh * 0.5);
  return {fine, std::abs(fine - coarse)};
}

// Two-dimensional variant with the isotropic kernel t I.
inline SemigroupValue semigroup_apply_2d(
    const std::function<double(double, double)>& f, double t, double x0,
    double x1, double mesh = 0.0) {
  detail::check_semigroup_args(static_cast<bool>(f), t, mesh,
                               "semigroup_apply_2d");
  if (mesh == 0.0) mesh = std::sqrt(t) / 128.0;
  const double coarse = detail::heat_convolution_2d(f, t, x0, x1, mesh);
  const double fine = detail::heat_convolution_2d(f, t, x0, x1, mesh * 0.5);
  return {fine, std::abs(fine - coarse)};
}

// Grid geometry for the time-regularity sweep.
struct TimeRegularityOptions {
  double feature_halfwidth = 2.0;  // window around 0 where f varies
  double grid_divisor = 256.0;     // shared spacing = sqrt(s) / divisor
  double outer_pad_sd = 12.0;      // L_m window pad, units of sqrt(t)
  double kernel_cut_sd = 8.0;      // kernel truncation, units of sqrt(time)
};

// ||P_t f - P_s f||_{L_m} / (t-s)^{alpha/2} for one pair s <= t. With the
// exponent delta fixed at alpha/2 the s-power in the bound drops out, so the
// denominator is just (t-s)^{alpha/2}. Both semigroup values are computed on
// one shared grid with discrete kernel masses normalized to unit sum, so a
// constant f yields exactly zero.
inline double semigroup_time_ratio(const std::function<double(double)>& f,
                                   double alpha, double m, double s, double t,
                                   TimeRegularityOptions opt = {}) {
  if (!f) {
    throw std::invalid_argument("semigroup_time_ratio: missing integrand");
  }
  if (!(s > 0.0) || !(t >= s) || !(t <= 1.0)) {
    throw std::invalid_argument(
        "semigroup_time_ratio: need 0 < s <= t <= 1");
  }
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw std::invalid_argument("semigroup_time_ratio: alpha must lie in (0,1)");
  }
  if (!(m >= 1.0) || !std::isfinite(m)) {
    throw std::invalid_argument("semigroup_time_ratio: m must be at least 1");
  }
  if (alpha * m >= 1.0) {
    throw std::invalid_argument(
        "semigroup_time_ratio: the (alpha, m) seminorm diverges for "
        "discontinuous integrands when alpha*m >= 1");
  }
  if (t == s) return 0.0;

  const double delta = std::sqrt(s) / opt.grid_divisor;
  const double xw = opt.feature_halfwidth + opt.outer_pad_sd * std::sqrt(t);
  const std::int64_t nx = static_cast<std::int64_t>(std::ceil(xw / delta));
  const std::int64_t kt =
      static_cast<std::int64_t>(std::ceil(opt.kernel_cut_sd * std::sqrt(t) / delta));
  const std::int64_t ks =
      static_cast<std::int64_t>(std::ceil(opt.kernel_cut_sd * std::sqrt(s) / delta));
  const std::int64_t ny = nx + kt;

  std::vector<double> fy(static_cast<std::size_t>(2 * ny + 1));
  double fmax = 0.0;
  for (std::int64_t j = -ny; j <= ny; ++j) {
    const double v = f(static_cast<double>(j) * delta);
    fy[static_cast<std::size_t>(j + ny)] = v;
    fmax = std::max(fmax, std::abs(v));
  }

  auto normalized_kernel = [&](double time, std::int64_t half) {
    std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (std::int64_t o = -half; o <= half; ++o) {
      const double r = static_cast<double>(o) * delta;
      const double v = std::exp(-r * r / (2.0 * time));
      k[static_cast<std::size_t>(o + half)] = v;
      sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
  };
  const std::vector<double> wt = normalized_kernel(t, kt);
  const std::vector<double> ws = normalized_kernel(s, ks);

  double acc = 0.0;
  for (std::int64_t xi = -nx; xi <= nx; ++xi) {
    double pt = 0.0;
    for (std::int64_t o = -kt; o <= kt; ++o) {
      pt += wt[static_cast<std::size_t>(o + kt)] *
            fy[static_cast<std::size_t>(xi - o + ny)];
    }
    double ps = 0.0;
    for (std::int64_t o = -ks; o <= ks; ++o) {
      ps += ws[static_cast<std::size_t>(o + ks)] *
            fy[static_cast<std::size_t>(xi - o + ny)];
    }
    acc += std::pow(std::abs(pt - ps), m);
  }
  const double lhs = std::pow(acc * delta, 1.0 / m);
  // Normalized kernel masses each carry one rounding, so for (nearly)
  // constant f the difference is pure floating-point noise; clamp it.
  if (lhs <= fmax * 1e-12) return 0.0;
  return lhs / std::pow(t - s, 0.5 * alpha);
}

struct TimeRegularityCheck {
  std::vector<double> s_values;  // sweep points, t = 2s each
  std::vector<double> ratios;
  double max_over_min = 0.0;
  bool bounded = false;  // max/min below 100 (or an identically zero sweep)
};

// Sweeps s over the dyadic points s_lo, 2 s_lo, ..., s_hi with t = 2s and
// reports whether the regularity ratio stays within a factor of 100.
inline TimeRegularityCheck check_semigroup_time_regularity(
    const std::function<double(double)>& f, double alpha, double m,
    double s_lo, double s_hi, TimeRegularityOptions opt = {}) {
  if (!(s_lo > 0.0) || !(s_hi >= s_lo) || !(2.0 * s_hi <= 1.0)) {
    throw std::invalid_argument(
        "check_semigroup_time_regularity: need 0 < s_lo <= s_hi <= 1/2");
  }
  TimeRegularityCheck check;
  for (double s = s_lo; s <= s_hi * (1.0 + 1e-12); s *= 2.0) {
    check.s_values.push_back(s);
    check.ratios.push_back(semigroup_time_ratio(f, alpha, m, s, 2.0 * s, opt));
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double r : check.ratios) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  check.max_over_min = (hi == 0.0) ? 0.0 : hi / lo;
  check.bounded = (hi == 0.0) || (lo > 0.0 && hi / lo < 100.0);
  return check;
}

// Grid check of the Gaussian moment envelope
//   |x|^k p_t(x) <= sqrt(2) (2k/e)^{k/2} t^{k/2} p_{2t}(x).
struct MomentBoundCheck {
  int k = 1;
  double grid_envelope = 0.0;   // sup over the grid of the normalized ratio
  double analytic_bound = 0.0;  // sqrt(2) (2k/e)^{k/2}
  bool bounded = false;
};

inline MomentBoundCheck check_gaussian_moment_bound(int k, double t,
                                                    double radius_in_sd = 12.0,
                                                    std::size_t points = 4097) {
  if (k < 1) {
    throw std::invalid_argument("check_gaussian_moment_bound: k must be >= 1");
  }
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw std::invalid_argument("check_gaussian_moment_bound: time must be positive");
  }
  if (points < 3 || !(radius_in_sd > 0.0)) {
    throw std::invalid_argument("check_gaussian_moment_bound: degenerate grid");
  }
  const double sd = std::sqrt(t);
  const double pk = 0.5 * static_cast<double>(k);
  MomentBoundCheck check;
  check.k = k;
  check.analytic_bound =
      std::sqrt(2.0) * std::pow(2.0 * static_cast<double>(k) / std::exp(1.0), pk);
  const double pt_norm = 1.0 / std::sqrt(kTwoPi * t);
  const double p2t_norm = 1.0 / std::sqrt(kTwoPi * 2.0 * t);
  for (std::size_t i = 0; i < points; ++i) {
    const double u = -radius_in_sd +
                     2.0 * radius_in_sd * static_cast<double>(i) /
                         static_cast<double>(points - 1);
    const double x = u * sd;
    const double pt = pt_norm * std::exp(-x * x / (2.0 * t));
    const double p2t = p2t_norm * std::exp(-x * x / (4.0 * t));
    const double ratio =
        std::pow(std::abs(x), static_cast<double>(k)) * pt / (std::pow(t, pk) * p2t);
    check.grid_envelope = std::max(check.grid_envelope, ratio);
  }
  check.bounded = check.grid_envelope <= check.analytic_bound * (1.0 + 1e-9);
  return check;
}

}  // namespace emlab
