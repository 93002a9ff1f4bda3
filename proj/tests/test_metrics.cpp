#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "emlab/brownian.hpp"
#include "emlab/coefficients.hpp"
#include "emlab/metrics.hpp"
#include "emlab/scheme.hpp"

using namespace emlab;

namespace {

SdeSpec make_spec(DriftSpec b, DiffusionSpec s, std::vector<double> x0,
                  AssumptionProfile profile) {
  SdeSpec spec;
  spec.drift = std::move(b);
  spec.diffusion = std::move(s);
  spec.x0 = std::move(x0);
  spec.profile = profile;
  return spec;
}

SdeSpec ou_spec(double theta = 1.0, double x0 = 0.3) {
  return make_spec(builtin_drift("linear_ou", {{"theta", theta}}),
                   builtin_diffusion("identity"), {x0},
                   AssumptionProfile::oracle_only);
}

SdeSpec rough_multiplicative_spec(double x0 = 0.0) {
  return make_spec(builtin_drift("oscillatory_measurable"),
                   builtin_diffusion("sine_elliptic", {{"c", 0.5}}), {x0},
                   AssumptionProfile::multiplicative_elliptic);
}

DriftSpec linear_integrand() {
  DriftSpec f;
  f.dimension = 1;
  f.evaluator = [](std::span<const double> x, std::span<double> out) {
    out[0] = x[0];
  };
  f.regularity = RegularityClass::smooth;
  f.sup_norm_bound = std::numeric_limits<double>::infinity();
  f.bounded = false;
  f.oracle_only = true;
  f.name = "linear_benchmark";
  return f;
}

ErrorTable power_law_table(const std::vector<int>& js, double c, double order) {
  ErrorTable t;
  t.p = 2.0;
  t.paths = 0;
  t.batches = 0;
  for (int j : js) {
    const double n = std::pow(2.0, j);
    t.levels.push_back(1ull << j);
    t.errors.push_back(c * std::pow(n, -order));
  }
  return t;
}

}  // namespace

TEST_CASE("strong error is a pseudometric on coupled trajectories") {
  const SeedLineage lin{77, 5, 0};
  const auto lat = generate_lattice(1, 8, lin);
  const auto a = em_solve(ou_spec(1.0, 0.3), lat, 1ull << 5);
  const auto b = em_solve(ou_spec(2.0, -0.1), lat, 1ull << 5);
  const auto c = em_solve(ou_spec(0.5, 0.8), lat, 1ull << 5);

  const double dab = strong_error(a, b, 1.0);
  const double dba = strong_error(b, a, 1.0);
  const double dac = strong_error(a, c, 1.0);
  const double dbc = strong_error(b, c, 1.0);

  CHECK(strong_error(a, a, 1.0) == 0.0);
  CHECK(dab == dba);  // |x - y| and |y - x| agree exactly
  CHECK(dab > 0.0);
  CHECK(dac <= dab + dbc + 1e-15);

  // Raising the order just powers the per-path supremum.
  CHECK(strong_error(a, b, 2.0) ==
        Catch::Approx(std::pow(dab, 2.0)).epsilon(1e-14));
  CHECK(strong_error(a, b, 4.0) ==
        Catch::Approx(std::pow(dab, 4.0)).epsilon(1e-14));
}

TEST_CASE("constant-offset trajectories report the offset") {
  const SeedLineage lin{91, 0, 0};
  const auto lat = generate_lattice(2, 7, lin);
  const auto spec = make_spec(builtin_drift("zero", {}, 2),
                              builtin_diffusion("identity", {}, 2), {0.0, 0.0},
                              AssumptionProfile::oracle_only);
  const auto a = em_solve(spec, lat, 1ull << 7);
  Trajectory b = a;
  for (std::size_t k = 0; k <= (1ull << 7); ++k) {
    b.states[2 * k] += 0.3;
    b.states[2 * k + 1] += 0.4;
  }
  CHECK(strong_error(a, b, 1.0) == Catch::Approx(0.5).margin(1e-14));
  CHECK(strong_error(a, b, 2.0) == Catch::Approx(0.25).margin(1e-14));
  // The fused overload sees the same two trajectories at full resolution.
  CHECK(strong_error(a, b, lat, 2.0) ==
        Catch::Approx(0.25).margin(1e-14));
}

TEST_CASE("strong error rejects uncoupled or malformed inputs") {
  const auto lat = generate_lattice(1, 8, {3, 0, 0});
  const auto lat_other = generate_lattice(1, 8, {3, 1, 0});
  const auto a = em_solve(ou_spec(), lat, 1ull << 4);
  const auto b = em_solve(ou_spec(), lat_other, 1ull << 4);
  const auto a_fine = em_solve(ou_spec(), lat, 1ull << 6);

  CHECK_THROWS_AS(strong_error(a, b, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(strong_error(a, a_fine, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(strong_error(a, a, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(strong_error(a, a, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(
      strong_error(a, a, std::numeric_limits<double>::infinity()),
      std::invalid_argument);
  CHECK_THROWS_AS(strong_error(a_fine, b, lat, 2.0), std::invalid_argument);

  // A closed-form reference below the lattice resolution cannot be
  // interpolated: it has no frozen coefficients.
  const auto ref_coarse =
      reference_solution(ou_spec(), coarsen(lat, 6), 0, 4);
  CHECK_THROWS_AS(strong_error(ref_coarse, a_fine, lat, 2.0),
                  std::invalid_argument);
}

TEST_CASE("fused interpolation matches materialized and independent sums") {
  const auto spec = ou_spec(1.3, 0.4);
  const int L = 12;
  const int j = 6;
  const std::uint64_t n = 1ull << j;

  // A handful of paths: the fused loop must agree bitwise with a sup over
  // explicitly materialized fine-node evaluations.
  for (std::uint64_t path : {0ull, 4ull, 9ull}) {
    const auto lat = generate_lattice(1, L, {2024, path, 0});
    const auto ref = reference_solution(spec, lat, j, 6);
    const auto approx = em_solve(spec, lat, n);
    const auto va = evaluate_on_fine_nodes(ref, lat);
    const auto vb = evaluate_on_fine_nodes(approx, lat);
    double sup2 = 0.0;
    for (std::size_t r = 0; r < va.size(); ++r) {
      const double d = va[r] - vb[r];
      sup2 = std::max(sup2, d * d);
    }
    const double materialized = std::pow(std::sqrt(sup2), 2.0);
    CHECK(strong_error(ref, approx, lat, 2.0) == materialized);
  }

  // Monte Carlo aggregate against a start-from-scratch reimplementation:
  // naive prefix sums, per-node anchor lookup, fresh time arithmetic.
  const std::uint64_t M = 10000;
  const std::uint64_t N = 1ull << L;
  const std::uint64_t per = N / n;
  const double hf = std::ldexp(1.0, -L);
  const double hc = std::ldexp(1.0, -j);
  double mean_fused = 0.0;
  double mean_brute = 0.0;
  for (std::uint64_t i = 0; i < M; ++i) {
    const auto lat = generate_lattice(1, L, {2024, i, 0});
    const auto ref = reference_solution(spec, lat, j, 6);
    const auto approx = em_solve(spec, lat, n);
    mean_fused += strong_error(ref, approx, lat, 2.0);

    std::vector<double> W(N + 1, 0.0);
    for (std::uint64_t r = 0; r < N; ++r) W[r + 1] = W[r] + lat.increments[r];
    double sup = 0.0;
    for (std::uint64_t r = 0; r <= N; ++r) {
      const std::uint64_t k = std::min(r / per, n - 1);
      const double t = static_cast<double>(r) * hf;
      const double tk = static_cast<double>(k) * hc;
      const double value = approx.states[k] + approx.frozen_drift[k] * (t - tk) +
                           approx.frozen_diffusion[k] * (W[r] - W[k * per]);
      sup = std::max(sup, std::abs(ref.states[r] - value));
    }
    mean_brute += sup * sup;
  }
  const double fused = std::sqrt(mean_fused / static_cast<double>(M));
  const double brute = std::sqrt(mean_brute / static_cast<double>(M));
  CHECK(fused == Catch::Approx(brute).epsilon(1e-12));
}

TEST_CASE("smooth benchmark error table decreases strictly in resolution") {
  StrongErrorPlan plan;
  plan.spec = ou_spec();
  plan.levels_log2 = {4, 5, 6, 7, 8, 9, 10};
  plan.reference_level = 16;
  plan.paths = 10000;
  plan.batches = 8;
  plan.experiment_seed = 42;
  const ErrorTable table = measure_strong_errors(plan);

  REQUIRE(table.levels.size() == 7);
  CHECK(table.levels.front() == 16);
  CHECK(table.levels.back() == 1024);
  for (std::size_t r = 0; r < table.errors.size(); ++r) {
    REQUIRE(std::isfinite(table.errors[r]));
    CHECK(table.errors[r] > 0.0);
    if (r > 0) CHECK(table.errors[r] < table.errors[r - 1]);
    CHECK(table.batch_stderr[r] > 0.0);
    CHECK(table.batch_stderr[r] < table.errors[r]);
  }
  REQUIRE(table.batch_errors.size() == 7 * 8);
  for (double be : table.batch_errors) CHECK(be > 0.0);

  const RateFit fit = fit_rate(table);
  REQUIRE(std::isfinite(fit.order));
  CHECK(fit.order > 0.85);
  CHECK(fit.order < 1.15);
  REQUIRE(fit.batches == 8);
  REQUIRE(fit.batch_orders.size() == 8);
  REQUIRE(std::isfinite(fit.ci_halfwidth));
  CHECK(fit.ci_halfwidth > 0.0);
  CHECK(fit.ci_halfwidth < 0.3);
}

TEST_CASE("rate fit recovers exact power laws") {
  const std::vector<int> js{4, 5, 6, 7, 8, 9, 10};
  {
    const auto t = power_law_table(js, 3.0, 0.5);
    const RateFit fit = fit_rate(t);
    CHECK(fit.order == Catch::Approx(0.5).margin(1e-10));
    CHECK(fit.residual_sum < 1e-18);
    CHECK(std::isnan(fit.ci_halfwidth));  // no batches supplied
    CHECK(fit.batch_orders.empty());
  }
  {
    const auto t = power_law_table(js, 0.8, 0.75);
    CHECK(fit_rate(t).order == Catch::Approx(0.75).margin(1e-10));
  }
  {
    const auto t = power_law_table(js, 0.9, 0.0);
    CHECK(fit_rate(t).order == Catch::Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("rate fit is scale invariant and honors the window") {
  const std::vector<int> js{4, 5, 6, 7, 8, 9, 10};
  auto t = power_law_table(js, 1.0, 0.5);
  auto scaled = t;
  for (double& e : scaled.errors) e *= 7.3;
  CHECK(std::abs(fit_rate(t).slope - fit_rate(scaled).slope) < 1e-12);

  const RateFit windowed = fit_rate(t, {32, 256});
  CHECK(windowed.order == Catch::Approx(0.5).margin(1e-10));
  CHECK_THROWS_AS(fit_rate(t, {32, 64}), std::invalid_argument);  // two points

  auto degenerate = t;
  degenerate.errors[3] = 0.0;
  CHECK_THROWS_AS(fit_rate(degenerate), std::domain_error);

  ErrorTable tiny;
  tiny.levels = {16, 32};
  tiny.errors = {0.5, 0.25};
  CHECK_THROWS_AS(fit_rate(tiny), std::invalid_argument);
}

TEST_CASE("batch confidence interval follows the frozen t quantile") {
  CHECK(detail::two_sided_t95(7) == 2.3646242515927844);
  CHECK(detail::two_sided_t95(1) == 12.706204736432095);
  CHECK(detail::two_sided_t95(40) == 2.0210753903062733);
  CHECK(detail::two_sided_t95(41) == 1.959963984540054);
  CHECK_THROWS_AS(detail::two_sided_t95(0), std::invalid_argument);

  // Two batches whose per-batch tables are exact power laws with orders 0.4
  // and 0.6: the fit must report their spread through t_{0.975,1}.
  const std::vector<int> js{4, 5, 6, 7, 8};
  ErrorTable t = power_law_table(js, 1.0, 0.5);
  t.batches = 2;
  t.paths = 2;
  for (int j : js) {
    const double n = std::pow(2.0, j);
    t.batch_errors.push_back(std::pow(n, -0.4));
    t.batch_errors.push_back(std::pow(n, -0.6));
  }
  const RateFit fit = fit_rate(t);
  REQUIRE(fit.batch_orders.size() == 2);
  CHECK(fit.batch_orders[0] == Catch::Approx(0.4).margin(1e-12));
  CHECK(fit.batch_orders[1] == Catch::Approx(0.6).margin(1e-12));
  CHECK(fit.ci_halfwidth ==
        Catch::Approx(12.706204736432095 * 0.1).epsilon(1e-12));
}

TEST_CASE("quadrature of a constant integrand vanishes pathwise") {
  QuadraturePlan plan;
  plan.integrand = builtin_drift("constant", {{"value", 0.7}});
  plan.fine_level = 10;
  plan.paths = 48;
  plan.batches = 8;
  plan.experiment_seed = 5;
  const QuadratureSample sample = quadrature_functional(plan, 8);
  REQUIRE(sample.values.size() == 48);
  for (double v : sample.values) CHECK(v == 0.0);
  CHECK(sample.lp_norm == 0.0);
  CHECK(sample.weight_kind == "none");
  CHECK(sample.n == 8);
}

TEST_CASE("quadrature vanishes when the anchors live on the fine grid") {
  QuadraturePlan plan;
  plan.integrand = builtin_drift("indicator_interval");
  plan.fine_level = 8;
  plan.paths = 16;
  plan.batches = 8;
  const auto brownian = quadrature_functional(plan, 1ull << 8);
  for (double v : brownian.values) CHECK(v == 0.0);

  plan.process = QuadratureProcess::em_scheme;
  plan.process_spec = rough_multiplicative_spec(0.1);
  const auto scheme = quadrature_functional(plan, 1ull << 8);
  for (double v : scheme.values) CHECK(v == 0.0);
}

TEST_CASE("terminal linear statistic matches the closed-form benchmark") {
  QuadraturePlan plan;
  plan.integrand = linear_integrand();
  plan.statistic = QuadratureStatistic::terminal;
  plan.fine_level = 15;
  plan.paths = 4000;
  plan.batches = 8;
  plan.experiment_seed = 7;
  for (std::uint64_t n : {16ull, 64ull}) {
    const QuadratureSample s = quadrature_functional(plan, n);
    const double target = 1.0 / (static_cast<double>(n) * std::sqrt(3.0));
    REQUIRE(s.batch_stderr > 0.0);
    CHECK(std::abs(s.lp_norm - target) <= 3.0 * s.batch_stderr);
  }

  // Without the benchmark marker an unbounded integrand is rejected.
  QuadraturePlan rejected = plan;
  rejected.integrand.oracle_only = false;
  CHECK_THROWS_AS(quadrature_functional(rejected, 16), std::invalid_argument);
}

TEST_CASE("running quadrature statistic obeys the sup bound") {
  QuadraturePlan plan;
  plan.integrand = builtin_drift("indicator_interval");
  plan.fine_level = 10;
  plan.paths = 64;
  plan.batches = 8;
  plan.experiment_seed = 11;
  const auto unweighted = quadrature_functional(plan, 8);
  for (double v : unweighted.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 2.0 + 1e-12);  // |f - anchor| <= 2 sup|f| over a unit horizon
  }
  double manual = 0.0;
  for (double v : unweighted.values) manual += v * v;
  manual = std::sqrt(manual / static_cast<double>(plan.paths));
  CHECK(unweighted.lp_norm == Catch::Approx(manual).epsilon(1e-13));

  plan.weight = [](double) { return 0.5; };
  plan.process = QuadratureProcess::em_scheme;
  plan.process_spec = rough_multiplicative_spec(0.1);
  const auto weighted = quadrature_functional(plan, 8);
  CHECK(weighted.weight_kind == "weighted");
  for (double v : weighted.values) CHECK(v <= 1.0 + 1e-12);
}

TEST_CASE("occupation-style sweep decays at the expected rate") {
  QuadraturePlan plan;
  plan.integrand = builtin_drift("indicator_interval");
  plan.fine_level = 14;
  plan.paths = 1000;
  plan.batches = 8;
  plan.experiment_seed = 33;
  const QuadratureSweep sweep =
      quadrature_rate_sweep(plan, {4, 5, 6, 7, 8, 9});
  REQUIRE(sweep.table.errors.size() == 6);
  for (std::size_t r = 1; r < sweep.table.errors.size(); ++r) {
    CHECK(sweep.table.errors[r] < sweep.table.errors[r - 1]);
  }
  CHECK(sweep.fit.order > 0.55);
  CHECK(sweep.fit.order < 0.95);
  REQUIRE(std::isfinite(sweep.fit.ci_halfwidth));
}

TEST_CASE("density diagnostic stays bounded on dyadic times") {
  BumpFunction bump;
  bump.evaluator = [](std::span<const double> x) {
    return (std::abs(x[0]) <= 1.0 / 16.0) ? 1.0 : 0.0;
  };
  bump.lp_norm = std::sqrt(2.0 / 16.0);  // L_2 norm of the box indicator
  bump.name = "box_sixteenth";

  const auto spec = rough_multiplicative_spec(0.0);
  const std::vector<double> times{std::ldexp(1.0, -10), std::ldexp(1.0, -8),
                                  std::ldexp(1.0, -6), std::ldexp(1.0, -4),
                                  std::ldexp(1.0, -2)};
  const DensityDiagnostic diag =
      density_bound_diagnostic(spec, bump, times, 2.0, 10, 4000, 101);
  REQUIRE(diag.means.size() == times.size());
  double expected_max = 0.0;
  for (std::size_t r = 0; r < diag.means.size(); ++r) {
    CHECK(diag.means[r] >= 0.0);
    CHECK(diag.means[r] <= 1.0);
    REQUIRE(std::isfinite(diag.ratios[r]));
    CHECK(diag.ratios[r] > 0.0);
    CHECK(diag.ratios[r] < 1.0);
    expected_max = std::max(expected_max, diag.ratios[r]);
  }
  CHECK(diag.max_ratio == expected_max);
}

TEST_CASE("density diagnostic rejects oracle specs and misaligned times") {
  BumpFunction bump;
  bump.evaluator = [](std::span<const double>) { return 1.0; };
  bump.lp_norm = 1.0;
  const auto good = rough_multiplicative_spec(0.0);
  const auto oracle = ou_spec();
  const std::vector<double> ok{0.25};

  CHECK_THROWS_AS(density_bound_diagnostic(oracle, bump, ok, 2.0, 10, 10, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(density_bound_diagnostic(good, bump, {0.3}, 2.0, 10, 10, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(density_bound_diagnostic(good, bump, {0.0}, 2.0, 10, 10, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(density_bound_diagnostic(good, bump, {2.0}, 2.0, 10, 10, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(density_bound_diagnostic(good, bump, ok, 0.5, 10, 10, 0),
                  std::invalid_argument);
  BumpFunction bad = bump;
  bad.lp_norm = 0.0;
  CHECK_THROWS_AS(density_bound_diagnostic(good, bad, ok, 2.0, 10, 10, 0),
                  std::invalid_argument);
}

TEST_CASE("worker count never changes the numbers") {
  StrongErrorPlan plan;
  plan.spec = ou_spec();
  plan.levels_log2 = {4, 5, 6};
  plan.reference_level = 10;
  plan.gap = 4;
  plan.paths = 96;
  plan.batches = 8;
  plan.experiment_seed = 9;

  plan.workers = 1;
  const ErrorTable serial = measure_strong_errors(plan);
  plan.workers = 3;
  const ErrorTable threaded = measure_strong_errors(plan);
  REQUIRE(serial.errors.size() == threaded.errors.size());
  for (std::size_t r = 0; r < serial.errors.size(); ++r) {
    CHECK(serial.errors[r] == threaded.errors[r]);
    CHECK(serial.batch_stderr[r] == threaded.batch_stderr[r]);
  }
  CHECK(serial.batch_errors == threaded.batch_errors);

  // Rerunning the same plan reproduces the table bit for bit.
  plan.workers = 1;
  const ErrorTable again = measure_strong_errors(plan);
  CHECK(again.errors == serial.errors);

  QuadraturePlan qplan;
  qplan.integrand = builtin_drift("indicator_interval");
  qplan.fine_level = 10;
  qplan.paths = 64;
  qplan.batches = 8;
  qplan.workers = 1;
  const auto qserial = quadrature_functional(qplan, 16);
  qplan.workers = 4;
  const auto qthreaded = quadrature_functional(qplan, 16);
  CHECK(qserial.values == qthreaded.values);
  CHECK(qserial.lp_norm == qthreaded.lp_norm);
  CHECK(qserial.batch_lp == qthreaded.batch_lp);
}

TEST_CASE("measurement plans validate their shape") {
  StrongErrorPlan plan;
  plan.spec = ou_spec();
  plan.levels_log2 = {4, 5, 6};
  plan.reference_level = 12;
  plan.paths = 96;
  plan.batches = 8;

  auto expect_throw = [](StrongErrorPlan p) {
    CHECK_THROWS_AS(measure_strong_errors(p), std::invalid_argument);
  };
  {
    auto p = plan;
    p.paths = 0;
    expect_throw(p);
  }
  {
    auto p = plan;
    p.batches = 0;
    expect_throw(p);
  }
  {
    auto p = plan;
    p.paths = 95;  // not divisible by 8 batches
    expect_throw(p);
  }
  {
    auto p = plan;
    p.workers = 0;
    expect_throw(p);
  }
  {
    auto p = plan;
    p.levels_log2 = {};
    expect_throw(p);
  }
  {
    auto p = plan;
    p.levels_log2 = {5, 5, 6};
    expect_throw(p);
  }
  {
    auto p = plan;
    p.reference_level = 9;  // below 6 + default gap 6
    expect_throw(p);
  }
  {
    auto p = plan;
    p.p = 0.0;
    expect_throw(p);
  }

  QuadraturePlan qplan;
  qplan.integrand = builtin_drift("indicator_interval");
  qplan.paths = 16;
  qplan.batches = 8;
  CHECK_THROWS_AS(quadrature_functional(qplan, 3), std::invalid_argument);
  CHECK_THROWS_AS(quadrature_functional(qplan, 1ull << 20),
                  std::invalid_argument);
  {
    auto q = qplan;
    q.process = QuadratureProcess::em_scheme;  // no process spec supplied
    CHECK_THROWS_AS(quadrature_functional(q, 16), std::invalid_argument);
  }
  {
    auto q = qplan;
    q.integrand = builtin_drift("indicator_interval", {}, 1);
    q.fine_level = 0;
    CHECK_THROWS_AS(quadrature_functional(q, 16), std::invalid_argument);
  }
}
