#pragma once

// Strong-error functionals, rate fitting, quadrature statistics and density
// diagnostics for coupled Euler-Maruyama experiments.
//
// Everything here is driven by per-path result slots reduced in ascending
// path order (see parallel.hpp), so outputs are bitwise independent of the
// worker count. Batches are contiguous blocks of the path index range, which
// keeps batch statistics deterministic as well.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emlab/brownian.hpp"
#include "emlab/coefficients.hpp"
#include "emlab/parallel.hpp"
#include "emlab/rng.hpp"
#include "emlab/scheme.hpp"

namespace emlab {

namespace detail {

inline void check_error_order(double p, const char* where) {
  if (!(p > 0.0) || !std::isfinite(p)) {
    throw std::invalid_argument(std::string(where) +
                                ": the moment order p must be positive and finite");
  }
}

// Streams the continuous-time interpolation of a trajectory along the nodes
// of a finer lattice, one node at a time, reproducing the arithmetic of
// evaluate_on_fine_nodes exactly (same segment resets, same accumulation
// order). Trajectories already at the lattice resolution are read off
// directly, which is also the only mode available to closed-form references.
class FineCursor {
 public:
  FineCursor(const Trajectory& traj, const BrownianLattice& fine)
      : traj_(&traj), fine_(&fine), dd_(static_cast<std::size_t>(traj.dimension)) {
    if (traj.dimension != fine.dimension) {
      throw std::invalid_argument(
          "strong_error: trajectory and lattice dimensions differ");
    }
    if (!(traj.lineage == fine.lineage)) {
      throw std::invalid_argument(
          "strong_error: lattice lineage does not match the trajectory's "
          "driving path");
    }
    const int j = steps_to_level(traj.n, fine.level, "strong_error");
    direct_ = (traj.n == fine.steps());
    if (!direct_) {
      if (traj.frozen_drift.empty()) {
        throw std::invalid_argument(
            "strong_error: closed-form reference has no frozen coefficients; "
            "it must live at the lattice resolution");
      }
      per_ = 1ull << (fine.level - j);
      hf_ = fine.step_size();
      segw_.assign(dd_, 0.0);
      buf_.assign(dd_, 0.0);
    }
    cur_ = traj.states.data();
  }

  // Moves to fine node r; must be called with r = 1, 2, ... in order.
  const double* advance(std::uint64_t r) {
    if (direct_) {
      cur_ = traj_->states.data() + r * dd_;
      return cur_;
    }
    const std::uint64_t k = (r - 1) / per_;
    const std::uint64_t o = r - k * per_;
    if (o == 1) std::fill(segw_.begin(), segw_.end(), 0.0);
    const double* dw = fine_->increments.data() + (r - 1) * dd_;
    for (std::size_t i = 0; i < dd_; ++i) segw_[i] += dw[i];
    const double toff = static_cast<double>(o) * hf_;
    const double* x = traj_->states.data() + k * dd_;
    const double* bk = traj_->frozen_drift.data() + k * dd_;
    const double* sk = traj_->frozen_diffusion.data() + k * dd_ * dd_;
    for (std::size_t i = 0; i < dd_; ++i) {
      double incr = bk[i] * toff;
      for (std::size_t c = 0; c < dd_; ++c) incr += sk[i * dd_ + c] * segw_[c];
      buf_[i] = x[i] + incr;
    }
    cur_ = buf_.data();
    return cur_;
  }

  const double* value() const { return cur_; }

 private:
  const Trajectory* traj_;
  const BrownianLattice* fine_;
  std::size_t dd_;
  bool direct_ = true;
  std::uint64_t per_ = 1;
  double hf_ = 0.0;
  std::vector<double> segw_;
  std::vector<double> buf_;
  const double* cur_ = nullptr;
};

inline double squared_distance(const double* a, const double* b, std::size_t dd) {
  double s = 0.0;
  for (std::size_t i = 0; i < dd; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

// Per-path strong-error contribution between two trajectories on the same
// grid: the supremum over shared nodes of the Euclidean distance, raised to
// the p-th power. Aggregating across paths as (mean contribution)^{1/p}
// yields the empirical L_p error. Symmetric and zero on identical inputs.
inline double strong_error(const Trajectory& reference, const Trajectory& approx,
                           double p) {
  detail::check_error_order(p, "strong_error");
  if (reference.dimension != approx.dimension) {
    throw std::invalid_argument("strong_error: trajectory dimensions differ");
  }
  if (!(reference.lineage == approx.lineage)) {
    throw std::invalid_argument(
        "strong_error: trajectories were built from different driving paths");
  }
  if (reference.n != approx.n) {
    throw std::invalid_argument(
        "strong_error: resolutions differ; supply the shared fine lattice");
  }
  const std::size_t dd = static_cast<std::size_t>(reference.dimension);
  double sup2 = 0.0;
  for (std::uint64_t k = 0; k <= reference.n; ++k) {
    sup2 = std::max(sup2, detail::squared_distance(
                              reference.states.data() + k * dd,
                              approx.states.data() + k * dd, dd));
  }
  return std::pow(std::sqrt(sup2), p);
}

// Same contribution with the supremum taken over every node of the shared
// fine lattice. Coarser trajectories are evaluated there through the scheme's
// own continuous-time interpolation; the loop is fused so no intermediate
// arrays of fine-node values are materialized.
inline double strong_error(const Trajectory& reference, const Trajectory& approx,
                           const BrownianLattice& fine, double p) {
  detail::check_error_order(p, "strong_error");
  if (reference.dimension != approx.dimension) {
    throw std::invalid_argument("strong_error: trajectory dimensions differ");
  }
  detail::FineCursor a(reference, fine);
  detail::FineCursor b(approx, fine);
  const std::size_t dd = static_cast<std::size_t>(reference.dimension);
  const std::uint64_t N = fine.steps();
  double sup2 = detail::squared_distance(a.value(), b.value(), dd);
  for (std::uint64_t r = 1; r <= N; ++r) {
    sup2 = std::max(sup2,
                    detail::squared_distance(a.advance(r), b.advance(r), dd));
  }
  return std::pow(std::sqrt(sup2), p);
}

// One strong-error measurement per resolution level, with batch replicates.
struct ErrorTable {
  std::vector<std::uint64_t> levels;  // resolutions n, ascending powers of two
  double p = 2.0;
  std::uint64_t paths = 0;   // Monte Carlo sample count
  int batches = 0;           // contiguous batch count used for error bars
  std::vector<double> errors;        // per level: (mean contribution)^{1/p}
  std::vector<double> batch_errors;  // levels.size() x batches, row-major
  std::vector<double> batch_stderr;  // per level: sd of batch errors / sqrt(B)
};

namespace detail {

// Reduces a rows x paths matrix of per-path p-th-power contributions into a
// table, summing in ascending path order within contiguous batches.
inline void reduce_power_table(const std::vector<double>& powers,
                               std::size_t rows, ErrorTable& table) {
  const std::uint64_t paths = table.paths;
  const int batches = table.batches;
  const std::uint64_t per_batch = paths / static_cast<std::uint64_t>(batches);
  const double inv_p = 1.0 / table.p;
  table.errors.assign(rows, 0.0);
  table.batch_errors.assign(rows * static_cast<std::size_t>(batches), 0.0);
  table.batch_stderr.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = powers.data() + r * paths;
    double total = 0.0;
    for (int b = 0; b < batches; ++b) {
      double block = 0.0;
      const std::uint64_t lo = static_cast<std::uint64_t>(b) * per_batch;
      for (std::uint64_t i = lo; i < lo + per_batch; ++i) block += v[i];
      total += block;
      table.batch_errors[r * static_cast<std::size_t>(batches) +
                         static_cast<std::size_t>(b)] =
          std::pow(block / static_cast<double>(per_batch), inv_p);
    }
    table.errors[r] = std::pow(total / static_cast<double>(paths), inv_p);
    if (batches >= 2) {
      const double* be = table.batch_errors.data() + r * static_cast<std::size_t>(batches);
      double mean = 0.0;
      for (int b = 0; b < batches; ++b) mean += be[b];
      mean /= batches;
      double var = 0.0;
      for (int b = 0; b < batches; ++b) var += (be[b] - mean) * (be[b] - mean);
      var /= (batches - 1);
      table.batch_stderr[r] = std::sqrt(var / batches);
    }
  }
}

inline void check_batched_paths(std::uint64_t paths, int batches, int workers,
                                const char* where) {
  if (paths == 0) {
    throw std::invalid_argument(std::string(where) + ": need at least one path");
  }
  if (batches < 1) {
    throw std::invalid_argument(std::string(where) + ": need at least one batch");
  }
  if (paths % static_cast<std::uint64_t>(batches) != 0) {
    throw std::invalid_argument(std::string(where) +
                                ": path count must be divisible by the batch count");
  }
  if (workers < 1) {
    throw std::invalid_argument(std::string(where) + ": need at least one worker");
  }
}

inline void check_level_ladder(const std::vector<int>& levels_log2,
                               const char* where) {
  if (levels_log2.empty()) {
    throw std::invalid_argument(std::string(where) + ": no resolution levels given");
  }
  for (std::size_t i = 0; i < levels_log2.size(); ++i) {
    if (levels_log2[i] < 0 || levels_log2[i] >= 63) {
      throw std::invalid_argument(std::string(where) +
                                  ": resolution exponent out of range");
    }
    if (i > 0 && levels_log2[i] <= levels_log2[i - 1]) {
      throw std::invalid_argument(std::string(where) +
                                  ": resolution exponents must be strictly increasing");
    }
  }
}

}  // namespace detail

// A coupled strong-error sweep: one shared fine lattice per path, the
// reference solved on it, and the scheme run at every requested coarse
// resolution against that reference.
struct StrongErrorPlan {
  SdeSpec spec;
  std::vector<int> levels_log2;  // coarse resolutions 2^j, strictly increasing
  int reference_level = 0;       // fine lattice level shared by all of them
  int gap = 6;                   // minimum refinement gap for the reference
  std::uint64_t paths = 0;
  int batches = 8;
  double p = 2.0;
  std::uint64_t experiment_seed = 0;
  int workers = 1;
};

inline ErrorTable measure_strong_errors(const StrongErrorPlan& plan) {
  validate_spec(plan.spec);
  detail::check_error_order(plan.p, "measure_strong_errors");
  detail::check_level_ladder(plan.levels_log2, "measure_strong_errors");
  detail::check_batched_paths(plan.paths, plan.batches, plan.workers,
                              "measure_strong_errors");
  const int j_max = plan.levels_log2.back();
  if (plan.reference_level < j_max + plan.gap) {
    throw std::invalid_argument(
        "measure_strong_errors: reference level must exceed the top "
        "resolution by at least the gap");
  }

  const int d = plan.spec.drift.dimension;
  const std::size_t rows = plan.levels_log2.size();
  std::vector<double> powers(rows * plan.paths);
  parallel_for_index(plan.paths, plan.workers, [&](std::uint64_t i) {
    const SeedLineage lin{plan.experiment_seed, i, 0};
    const BrownianLattice lat = generate_lattice(d, plan.reference_level, lin);
    const Trajectory ref = reference_solution(plan.spec, lat, j_max, plan.gap);
    for (std::size_t r = 0; r < rows; ++r) {
      const Trajectory approx =
          em_solve(plan.spec, lat, 1ull << plan.levels_log2[r]);
      powers[r * plan.paths + i] = strong_error(ref, approx, lat, plan.p);
    }
  });

  ErrorTable table;
  table.p = plan.p;
  table.paths = plan.paths;
  table.batches = plan.batches;
  table.levels.reserve(rows);
  for (int j : plan.levels_log2) table.levels.push_back(1ull << j);
  detail::reduce_power_table(powers, rows, table);
  return table;
}

// Least-squares rate fit in log2-log2 coordinates.
struct RateFit {
  double slope = 0.0;        // OLS slope of log2(error) against log2(n)
  double intercept = 0.0;
  double residual_sum = 0.0;  // sum of squared log2-space residuals
  double order = 0.0;         // empirical strong order, -slope
  double ci_halfwidth = std::numeric_limits<double>::quiet_NaN();
  int batches = 0;
  std::vector<double> batch_orders;
};

// Restricts a fit to resolutions n with n_min <= n <= n_max.
struct LevelWindow {
  std::uint64_t n_min = 0;
  std::uint64_t n_max = std::numeric_limits<std::uint64_t>::max();
};

namespace detail {

// Two-sided 95% Student-t quantiles for small degrees of freedom; beyond the
// table the normal quantile is close enough for any realistic batch count.
inline double two_sided_t95(int df) {
  static constexpr double kTable[41] = {
      std::numeric_limits<double>::quiet_NaN(),
      12.706204736432095, 4.3026527296961419, 3.1824463052842629,
      2.7764451051977987, 2.5705818356363141, 2.4469118511449692,
      2.3646242515927844, 2.3060041352041658, 2.2621571628540993,
      2.2281388519649385, 2.2009851600829489, 2.1788128296634177,
      2.1603686564610127, 2.1447866879169273, 2.131449545559323,
      2.1199052992210112, 2.1098155778331806, 2.1009220402409601,
      2.093024054408263,  2.0859634472658364, 2.0796138447276622,
      2.0738730679040147, 2.0686576104190406, 2.0638985616280205,
      2.0595385527532941, 2.0555294386428709, 2.0518305164802833,
      2.0484071417952441, 2.045229642132703,  2.0422724563012373,
      2.0395134463964077, 2.0369333434601011, 2.0345152974493383,
      2.0322445093177182, 2.0301079282503425, 2.0280940009804502,
      2.0261924630291093, 2.0243941639119689, 2.0226909200367604,
      2.0210753903062733};
  if (df < 1) {
    throw std::invalid_argument("two_sided_t95: degrees of freedom must be positive");
  }
  if (df <= 40) return kTable[df];
  return 1.959963984540054;
}

struct OlsLine {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_sum = 0.0;
};

inline OlsLine ols(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t m = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  OlsLine line;
  line.slope = sxy / sxx;
  line.intercept = my - line.slope * mx;
  for (std::size_t i = 0; i < m; ++i) {
    const double res = ys[i] - (line.intercept + line.slope * xs[i]);
    line.residual_sum += res * res;
  }
  return line;
}

inline double checked_log2_error(double e, const char* where) {
  if (!(e > 0.0) || !std::isfinite(e)) {
    throw std::domain_error(
        std::string(where) +
        ": non-positive error in the fit window (an exact match carries no "
        "rate information)");
  }
  return std::log2(e);
}

}  // namespace detail

// Fits order = -slope of log2(error) against log2(n) over the window. When
// the table carries at least two batches, a 95% confidence half-width is
// derived from the spread of per-batch slopes via the Student-t quantile;
// otherwise ci_halfwidth is NaN.
inline RateFit fit_rate(const ErrorTable& table, LevelWindow window = {}) {
  if (table.levels.size() != table.errors.size()) {
    throw std::invalid_argument("fit_rate: malformed table");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < table.levels.size(); ++i) {
    if (table.levels[i] >= window.n_min && table.levels[i] <= window.n_max) {
      idx.push_back(i);
    }
  }
  if (idx.size() < 3) {
    throw std::invalid_argument(
        "fit_rate: need at least three levels inside the window");
  }
  std::vector<double> xs, ys;
  xs.reserve(idx.size());
  ys.reserve(idx.size());
  for (std::size_t i : idx) {
    xs.push_back(std::log2(static_cast<double>(table.levels[i])));
    ys.push_back(detail::checked_log2_error(table.errors[i], "fit_rate"));
  }
  const detail::OlsLine line = detail::ols(xs, ys);

  RateFit fit;
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.residual_sum = line.residual_sum;
  fit.order = -line.slope;

  const std::size_t B = static_cast<std::size_t>(table.batches);
  if (table.batches >= 2 &&
      table.batch_errors.size() == table.levels.size() * B) {
    fit.batches = table.batches;
    fit.batch_orders.reserve(B);
    std::vector<double> yb(idx.size());
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t q = 0; q < idx.size(); ++q) {
        yb[q] = detail::checked_log2_error(
            table.batch_errors[idx[q] * B + b], "fit_rate");
      }
      fit.batch_orders.push_back(-detail::ols(xs, yb).slope);
    }
    double mean = 0.0;
    for (double o : fit.batch_orders) mean += o;
    mean /= static_cast<double>(B);
    double var = 0.0;
    for (double o : fit.batch_orders) var += (o - mean) * (o - mean);
    var /= static_cast<double>(B - 1);
    fit.ci_halfwidth = detail::two_sided_t95(table.batches - 1) *
                       std::sqrt(var / static_cast<double>(B));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Quadrature statistics: left-point Riemann sums of f along a scalar process
// against the same sums anchored at a coarser grid. The difference is the
// occupation-style functional whose decay in the anchor resolution is the
// quantity of interest.

enum class QuadratureProcess { brownian, em_scheme };
enum class QuadratureStatistic { running_sup, terminal };

struct QuadraturePlan {
  DriftSpec integrand;  // scalar integrand, catalogue metadata included
  std::function<double(double)> weight;  // optional left-node multiplier
  QuadratureProcess process = QuadratureProcess::brownian;
  std::optional<SdeSpec> process_spec;  // required when process == em_scheme
  double x0 = 0.0;  // start point of the Brownian process variant
  QuadratureStatistic statistic = QuadratureStatistic::running_sup;
  int fine_level = 15;  // Riemann resolution of the time integral
  std::uint64_t paths = 0;
  int batches = 8;
  double p = 2.0;
  std::uint64_t experiment_seed = 0;
  int workers = 1;
};

struct QuadratureSample {
  std::uint64_t n = 0;  // anchor resolution
  double p = 2.0;
  std::string weight_kind;  // "none" or "weighted"
  std::uint64_t paths = 0;
  int batches = 0;
  std::vector<double> values;  // per-path statistic, path-index order
  double lp_norm = 0.0;
  std::vector<double> batch_lp;
  double batch_stderr = 0.0;
};

namespace detail {

inline void check_quadrature_plan(const QuadraturePlan& plan, const char* where) {
  if (plan.integrand.dimension != 1 || !plan.integrand.evaluator) {
    throw std::invalid_argument(std::string(where) +
                                ": integrand must be a scalar catalogue entry");
  }
  if (!plan.integrand.bounded && !plan.integrand.oracle_only) {
    throw std::invalid_argument(
        std::string(where) +
        ": unbounded integrand; only bounded entries (or closed-form "
        "benchmark integrands) are admissible");
  }
  if (plan.process == QuadratureProcess::em_scheme) {
    if (!plan.process_spec.has_value()) {
      throw std::invalid_argument(std::string(where) +
                                  ": scheme-driven quadrature needs a process spec");
    }
    validate_spec(*plan.process_spec);
    if (plan.process_spec->drift.dimension != 1) {
      throw std::invalid_argument(
          std::string(where) + ": quadrature statistics are scalar; the "
                               "process must be one-dimensional");
    }
  } else if (!std::isfinite(plan.x0)) {
    throw std::invalid_argument(std::string(where) + ": start point must be finite");
  }
  if (plan.fine_level < 1 || plan.fine_level > 24) {
    throw std::invalid_argument(std::string(where) +
                                ": fine level out of the supported range [1, 24]");
  }
  check_error_order(plan.p, where);
  check_batched_paths(plan.paths, plan.batches, plan.workers, where);
}

// Left-point Riemann statistic for one driving path. Walks the fine lattice
// once; the anchor value is refreshed at every coarse node.
inline double quadrature_path_value(const QuadraturePlan& plan, std::uint64_t n,
                                    const std::function<double(double)>& f,
                                    const BrownianLattice& lat) {
  const std::uint64_t R = lat.steps();
  const std::uint64_t per = R / n;
  const double hf = lat.step_size();
  double running = 0.0;
  double peak = 0.0;

  if (plan.process == QuadratureProcess::brownian) {
    double u = plan.x0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const double fa = f(u);
      const std::uint64_t base = k * per;
      for (std::uint64_t o = 0; o < per; ++o) {
        const double w = plan.weight ? plan.weight(u) : 1.0;
        running += w * (f(u) - fa) * hf;
        peak = std::max(peak, std::abs(running));
        u += lat.increments[base + o];
      }
    }
  } else {
    const Trajectory traj = em_solve(*plan.process_spec, lat, n);
    FineCursor cur(traj, lat);
    for (std::uint64_t k = 0; k < n; ++k) {
      const double fa = f(traj.states[k]);
      const std::uint64_t base = k * per;
      for (std::uint64_t o = 0; o < per; ++o) {
        const double u = cur.value()[0];
        const double w = plan.weight ? plan.weight(u) : 1.0;
        running += w * (f(u) - fa) * hf;
        peak = std::max(peak, std::abs(running));
        cur.advance(base + o + 1);
      }
    }
  }
  return plan.statistic == QuadratureStatistic::running_sup ? peak
                                                            : std::abs(running);
}

}  // namespace detail

// Distribution of the quadrature statistic at one anchor resolution n.
inline QuadratureSample quadrature_functional(const QuadraturePlan& plan,
                                              std::uint64_t n) {
  detail::check_quadrature_plan(plan, "quadrature_functional");
  if (n == 0 || !std::has_single_bit(n) || n > (1ull << plan.fine_level)) {
    throw std::invalid_argument(
        "quadrature_functional: anchor resolution must be a power of two no "
        "finer than the quadrature lattice");
  }
  const std::function<double(double)> f = scalar_function(plan.integrand);

  QuadratureSample sample;
  sample.n = n;
  sample.p = plan.p;
  sample.weight_kind = plan.weight ? "weighted" : "none";
  sample.paths = plan.paths;
  sample.batches = plan.batches;
  sample.values.assign(plan.paths, 0.0);

  parallel_for_index(plan.paths, plan.workers, [&](std::uint64_t i) {
    const SeedLineage lin{plan.experiment_seed, i, 0};
    const BrownianLattice lat = generate_lattice(1, plan.fine_level, lin);
    sample.values[i] = detail::quadrature_path_value(plan, n, f, lat);
  });

  ErrorTable reduced;
  reduced.p = plan.p;
  reduced.paths = plan.paths;
  reduced.batches = plan.batches;
  std::vector<double> powers(plan.paths);
  for (std::uint64_t i = 0; i < plan.paths; ++i) {
    powers[i] = std::pow(std::abs(sample.values[i]), plan.p);
  }
  detail::reduce_power_table(powers, 1, reduced);
  sample.lp_norm = reduced.errors[0];
  sample.batch_lp = reduced.batch_errors;
  sample.batch_stderr = reduced.batch_stderr[0];
  return sample;
}

struct QuadratureSweep {
  ErrorTable table;  // levels = anchor resolutions, errors = L_p norms
  RateFit fit;
};

// Runs the statistic across a ladder of anchor resolutions on shared driving
// paths (one lattice per path serves every level) and fits the decay rate.
inline QuadratureSweep quadrature_rate_sweep(const QuadraturePlan& plan,
                                             const std::vector<int>& levels_log2) {
  detail::check_quadrature_plan(plan, "quadrature_rate_sweep");
  detail::check_level_ladder(levels_log2, "quadrature_rate_sweep");
  if (levels_log2.back() > plan.fine_level) {
    throw std::invalid_argument(
        "quadrature_rate_sweep: anchor resolutions exceed the quadrature lattice");
  }
  const std::function<double(double)> f = scalar_function(plan.integrand);
  const std::size_t rows = levels_log2.size();
  std::vector<double> powers(rows * plan.paths);
  parallel_for_index(plan.paths, plan.workers, [&](std::uint64_t i) {
    const SeedLineage lin{plan.experiment_seed, i, 0};
    const BrownianLattice lat = generate_lattice(1, plan.fine_level, lin);
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = detail::quadrature_path_value(
          plan, 1ull << levels_log2[r], f, lat);
      powers[r * plan.paths + i] = std::pow(std::abs(v), plan.p);
    }
  });

  QuadratureSweep sweep;
  sweep.table.p = plan.p;
  sweep.table.paths = plan.paths;
  sweep.table.batches = plan.batches;
  sweep.table.levels.reserve(rows);
  for (int j : levels_log2) sweep.table.levels.push_back(1ull << j);
  detail::reduce_power_table(powers, rows, sweep.table);
  sweep.fit = fit_rate(sweep.table);
  return sweep;
}

// ---------------------------------------------------------------------------
// Density-bound diagnostic: |E G(X^n_t)| against ||G||_p t^{-d/(2p)} on a
// grid of dyadic times. Under bounded drift and elliptic noise the ratio
// stays below a level-independent constant; the table reports it for
// inspection rather than asserting a particular value.

struct BumpFunction {
  std::function<double(std::span<const double>)> evaluator;
  double lp_norm = 1.0;  // L_p norm of the bump over the whole space
  std::string name = "bump";
};

struct DensityDiagnostic {
  double p = 2.0;
  int sim_level = 0;
  std::uint64_t paths = 0;
  std::vector<double> times;
  std::vector<double> means;   // Monte Carlo estimate of E G(X^n_t)
  std::vector<double> ratios;  // |mean| / (||G||_p t^{-d/(2p)})
  double max_ratio = 0.0;
};

inline DensityDiagnostic density_bound_diagnostic(
    const SdeSpec& spec, const BumpFunction& bump, std::vector<double> times,
    double p, int sim_level, std::uint64_t paths,
    std::uint64_t experiment_seed = 0, int workers = 1) {
  validate_spec(spec);
  if (spec.profile == AssumptionProfile::oracle_only) {
    throw std::invalid_argument(
        "density_bound_diagnostic: oracle-only specs make no ellipticity "
        "promise, so there is no density bound to examine");
  }
  if (!bump.evaluator) {
    throw std::invalid_argument("density_bound_diagnostic: bump evaluator missing");
  }
  if (!(bump.lp_norm > 0.0) || !std::isfinite(bump.lp_norm)) {
    throw std::invalid_argument(
        "density_bound_diagnostic: bump norm must be positive and finite");
  }
  if (!(p >= 1.0) || !std::isfinite(p)) {
    throw std::invalid_argument("density_bound_diagnostic: p must be at least 1");
  }
  if (sim_level < 1 || sim_level > 24) {
    throw std::invalid_argument(
        "density_bound_diagnostic: simulation level out of range [1, 24]");
  }
  if (times.empty()) {
    throw std::invalid_argument("density_bound_diagnostic: no times requested");
  }
  if (paths == 0 || workers < 1) {
    throw std::invalid_argument(
        "density_bound_diagnostic: need at least one path and one worker");
  }
  const std::uint64_t steps = 1ull << sim_level;
  std::vector<std::uint64_t> nodes;
  nodes.reserve(times.size());
  for (double t : times) {
    const double scaled = t * static_cast<double>(steps);
    const double rounded = std::nearbyint(scaled);
    if (!(t > 0.0) || t > 1.0 || std::abs(scaled - rounded) > 1e-9 ||
        rounded < 1.0) {
      throw std::invalid_argument(
          "density_bound_diagnostic: times must be dyadic multiples of the "
          "simulation step inside (0, 1]");
    }
    nodes.push_back(static_cast<std::uint64_t>(rounded));
  }

  const int d = spec.drift.dimension;
  const std::size_t rows = times.size();
  std::vector<double> samples(rows * paths);
  parallel_for_index(paths, workers, [&](std::uint64_t i) {
    const SeedLineage lin{experiment_seed, i, 0};
    const BrownianLattice lat = generate_lattice(d, sim_level, lin);
    const Trajectory traj = em_solve(spec, lat, steps);
    for (std::size_t r = 0; r < rows; ++r) {
      samples[r * paths + i] = bump.evaluator(traj.state(nodes[r]));
    }
  });

  DensityDiagnostic diag;
  diag.p = p;
  diag.sim_level = sim_level;
  diag.paths = paths;
  diag.times = std::move(times);
  diag.means.assign(rows, 0.0);
  diag.ratios.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    const double* v = samples.data() + r * paths;
    for (std::uint64_t i = 0; i < paths; ++i) sum += v[i];
    diag.means[r] = sum / static_cast<double>(paths);
    const double bound = bump.lp_norm *
                         std::pow(diag.times[r], -static_cast<double>(d) / (2.0 * p));
    diag.ratios[r] = std::abs(diag.means[r]) / bound;
    diag.max_ratio = std::max(diag.max_ratio, diag.ratios[r]);
  }
  return diag;
}

}  // namespace emlab
