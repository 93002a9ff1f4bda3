#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "emlab/brownian.hpp"
#include "emlab/rng.hpp"

using namespace emlab;

TEST_CASE("inverse normal CDF matches reference quantiles") {
  CHECK(normal_inv_cdf(0.5) == 0.0);
  CHECK_THAT(normal_inv_cdf(0.975),
             Catch::Matchers::WithinAbs(1.959963984540054, 1e-12));
  CHECK_THAT(normal_inv_cdf(0.841344746068543),
             Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(normal_inv_cdf(1e-17),
             Catch::Matchers::WithinRel(-8.493793224109599, 1e-13));
  CHECK_THAT(normal_inv_cdf(0.9), Catch::Matchers::WithinAbs(1.2815515655446004, 1e-12));
  CHECK_THROWS_AS(normal_inv_cdf(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_inv_cdf(1.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_inv_cdf(-0.25), std::invalid_argument);
}

TEST_CASE("inverse normal CDF is antisymmetric at dyadic arguments") {
  for (double p : {0.25, 0.375, 0.0625, 0.015625, 0.00048828125}) {
    CHECK(normal_inv_cdf(1.0 - p) == -normal_inv_cdf(p));
  }
}

TEST_CASE("draws are pure functions of the full key") {
  const SeedLineage base{42, 7, 0};
  CHECK(uniform_at(base, 11) == uniform_at(base, 11));
  CHECK(gaussian_at(base, 11) == gaussian_at(base, 11));

  SeedLineage other = base;
  other.experiment_seed = 43;
  CHECK(uniform_at(base, 0) != uniform_at(other, 0));
  other = base;
  other.path_index = 8;
  CHECK(uniform_at(base, 0) != uniform_at(other, 0));
  other = base;
  other.stream_tag = 1;
  CHECK(uniform_at(base, 0) != uniform_at(other, 0));
  CHECK(uniform_at(base, 0) != uniform_at(base, 1));
}

TEST_CASE("sequential reader reproduces random access bitwise") {
  const SeedLineage lin{977, 3, 5};
  CounterRng rng(lin);
  for (std::uint64_t i = 0; i < 300; ++i) {
    CHECK(rng.uniform() == uniform_at(lin, i));
  }
  rng.seek(1000003);
  for (std::uint64_t i = 1000003; i < 1000050; ++i) {
    CHECK(rng.uniform() == uniform_at(lin, i));
  }
}

TEST_CASE("uniform and Gaussian outputs have the right desk-scale statistics") {
  const SeedLineage lin{2024, 0, 0};
  CounterRng rng(lin);
  const int n = 100000;
  double usum = 0.0, umin = 1.0, umax = 0.0;
  double gsum = 0.0, gsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    usum += u;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    const double g = gaussian_at(lin, static_cast<std::uint64_t>(i) + (1ull << 32));
    gsum += g;
    gsq += g * g;
  }
  CHECK(umin > 0.0);
  CHECK(umax < 1.0);
  CHECK_THAT(usum / n, Catch::Matchers::WithinAbs(0.5, 0.004));
  const double gmean = gsum / n;
  const double gvar = gsq / n - gmean * gmean;
  CHECK_THAT(gmean, Catch::Matchers::WithinAbs(0.0, 0.013));
  CHECK(gvar > 0.98);
  CHECK(gvar < 1.02);
}

TEST_CASE("lattice generation draws N(0, 2^-level) increments") {
  const SeedLineage lin{5150, 12, 0};
  const auto lat = generate_lattice(2, 5, lin);
  CHECK(lat.steps() == 32);
  CHECK(lat.increments.size() == 64);
  CHECK(lat.step_size() == std::ldexp(1.0, -5));

  // terminal variance over many lineages: Var W_1 = 1 within +-2%
  const int m = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto l0 = generate_lattice(1, 0, SeedLineage{31337, static_cast<std::uint64_t>(i), 0});
    const double w1 = l0.increments[0];
    sum += w1;
    sq += w1 * w1;
  }
  const double mean = sum / m;
  const double var = sq / m - mean * mean;
  CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 0.013));
  CHECK(var > 0.98);
  CHECK(var < 1.02);
}

TEST_CASE("disjoint increments are uncorrelated at desk scale") {
  const int m = 100000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    const auto lat = generate_lattice(1, 4, SeedLineage{888, static_cast<std::uint64_t>(i), 0});
    const double x = lat.increments[2], y = lat.increments[11];
    sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
  }
  const double cov = sxy / m - (sx / m) * (sy / m);
  const double vx = sxx / m - (sx / m) * (sx / m);
  const double vy = syy / m - (sy / m) * (sy / m);
  const double rho = cov / std::sqrt(vx * vy);
  CHECK(std::abs(rho) < 0.01);
}

TEST_CASE("value_at returns ascending prefix sums") {
  const auto lat = lattice_from_increments(1, 2, {1.0, 2.0, 3.0, 4.0}, SeedLineage{});
  CHECK(value_at(lat, 0) == std::vector<double>{0.0});
  CHECK(value_at(lat, 1) == std::vector<double>{1.0});
  CHECK(value_at(lat, 3) == std::vector<double>{6.0});
  CHECK(value_at(lat, 4) == std::vector<double>{10.0});
  CHECK_THROWS_AS(value_at(lat, 5), std::invalid_argument);
}

TEST_CASE("refinement halves cells with bridge statistics") {
  const double w = 0.7;
  const int m = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto base = lattice_from_increments(
        1, 0, {w}, SeedLineage{1234, static_cast<std::uint64_t>(i), 0});
    const auto fine = refine(base);
    REQUIRE(fine.steps() == 2);
    const double mid = fine.increments[0];  // W at t=1/2
    const double dev = mid - w / 2.0;
    sum += dev;
    sq += dev * dev;
  }
  const double mean = sum / m;
  const double var = sq / m - mean * mean;
  CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 0.006));
  CHECK(var > 0.245);
  CHECK(var < 0.255);
}

TEST_CASE("refine then coarsen restores increments bitwise") {
  const auto lat = generate_lattice(2, 6, SeedLineage{99, 4, 2});
  const auto fine = refine(lat);
  REQUIRE(fine.level == 7);
  // pairwise exactness of the split
  const int d = lat.dimension;
  for (std::uint64_t k = 0; k < lat.steps(); ++k) {
    for (int j = 0; j < d; ++j) {
      const double sum = fine.increments[2 * k * d + j] + fine.increments[(2 * k + 1) * d + j];
      CHECK(sum == lat.increments[k * d + j]);
    }
  }
  const auto back = coarsen(fine, 6);
  REQUIRE(back.increments.size() == lat.increments.size());
  for (std::size_t i = 0; i < lat.increments.size(); ++i) {
    CHECK(back.increments[i] == lat.increments[i]);
  }
}

TEST_CASE("refinement is deterministic and level-keyed") {
  const auto lat = generate_lattice(1, 3, SeedLineage{7, 7, 7});
  const auto a = refine(lat);
  const auto b = refine(lat);
  CHECK(a.increments == b.increments);
  const auto aa = refine(a);
  CHECK(aa.level == 5);
  // grandchildren of the first cell still sum to the original increment
  const double total = ((aa.increments[0] + aa.increments[1]) + aa.increments[2]) + aa.increments[3];
  CHECK_THAT(total, Catch::Matchers::WithinRel(lat.increments[0], 1e-15));
}

TEST_CASE("coarsen sums children in ascending order") {
  const auto lat = lattice_from_increments(1, 2, {0.5, -1.25, 2.0, 0.125}, SeedLineage{});
  const auto c1 = coarsen(lat, 1);
  CHECK(c1.increments == std::vector<double>{0.5 + -1.25, 2.0 + 0.125});
  const auto c0 = coarsen(lat, 0);
  CHECK(c0.increments[0] == ((0.5 + -1.25) + 2.0) + 0.125);
  const auto same = coarsen(lat, 2);
  CHECK(same.increments == lat.increments);
  CHECK_THROWS_AS(coarsen(lat, 3), std::invalid_argument);
  CHECK_THROWS_AS(coarsen(lat, -1), std::invalid_argument);
}

TEST_CASE("lattice requests respect the memory budget") {
  CHECK_THROWS_AS(generate_lattice(1, 8, SeedLineage{}, 100), std::runtime_error);
  CHECK_THROWS_AS(generate_lattice(0, 4, SeedLineage{}), std::invalid_argument);
  CHECK_THROWS_AS(generate_lattice(1, -1, SeedLineage{}), std::invalid_argument);
  CHECK_THROWS_AS(refine(generate_lattice(1, 7, SeedLineage{}, 128), 128),
                  std::runtime_error);
}

TEST_CASE("grid maps are pure integer arithmetic") {
  CHECK(GridMap::coarse_cell(37, 3) == 4);
  CHECK(GridMap::first_fine(4, 3) == 32);
  CHECK(GridMap::node_time(3, 2) == 0.75);
  CHECK(GridMap::node_time(1, 10) == std::ldexp(1.0, -10));
}
