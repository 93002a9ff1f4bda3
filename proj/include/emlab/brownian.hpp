// Dyadic Brownian increment lattices on [0, 1]: generation at a fixed level,
// Brownian-bridge midpoint refinement, and exact coarsening. Refinement and
// coarsening are arranged so that coarsening a refined lattice reproduces the
// original increments bitwise: each refined pair is nudged (well below the
// noise scale) until its left-to-right sum equals the parent increment, and
// coarsening always sums children in ascending index order.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "emlab/rng.hpp"

namespace emlab {

// Default cap on lattice payload size, in doubles (2^level * dimension).
inline constexpr std::uint64_t kDefaultLatticeBudget = 1ull << 24;

struct BrownianLattice {
  int dimension = 0;
  int level = 0;  // increments span 2^-level each; 2^level of them
  std::vector<double> increments;  // row k holds the step over [k,k+1]*2^-level
  SeedLineage lineage;

  std::uint64_t steps() const { return 1ull << level; }
  double step_size() const { return std::ldexp(1.0, -level); }
  double increment(std::uint64_t k, int j) const {
    return increments[k * static_cast<std::uint64_t>(dimension) + j];
  }
};

// Pure integer index maps between dyadic resolutions.
struct GridMap {
  // Fine index -> containing coarse cell, dropping level_gap levels.
  static std::uint64_t coarse_cell(std::uint64_t fine_index, int level_gap) {
    return fine_index >> level_gap;
  }
  // Coarse cell -> its first fine index.
  static std::uint64_t first_fine(std::uint64_t coarse_index, int level_gap) {
    return coarse_index << level_gap;
  }
  // Node time of index k at the given level (exact dyadic rational).
  static double node_time(std::uint64_t k, int level) {
    return static_cast<double>(k) * std::ldexp(1.0, -level);
  }
};

namespace detail {

inline void check_lattice_request(int dimension, int level,
                                  std::uint64_t budget_doubles) {
  if (dimension < 1) throw std::invalid_argument("lattice: dimension must be >= 1");
  if (level < 0 || level > 62) throw std::invalid_argument("lattice: level out of range");
  const std::uint64_t doubles =
      (1ull << level) * static_cast<std::uint64_t>(dimension);
  if (doubles > budget_doubles) {
    throw std::runtime_error("lattice: request of " + std::to_string(doubles) +
                             " doubles exceeds budget of " +
                             std::to_string(budget_doubles));
  }
}

}  // namespace detail

// Fresh increments at the requested level: independent N(0, 2^-level) per
// coordinate, draw counter k * dimension + j for step k, coordinate j.
inline BrownianLattice generate_lattice(
    int dimension, int level, const SeedLineage& lineage,
    std::uint64_t budget_doubles = kDefaultLatticeBudget) {
  detail::check_lattice_request(dimension, level, budget_doubles);
  BrownianLattice lat;
  lat.dimension = dimension;
  lat.level = level;
  lat.lineage = lineage;
  const std::uint64_t count =
      (1ull << level) * static_cast<std::uint64_t>(dimension);
  lat.increments.resize(count);
  const double sd = std::sqrt(std::ldexp(1.0, -level));
  CounterRng rng(lineage);
  for (std::uint64_t i = 0; i < count; ++i) lat.increments[i] = sd * rng.gaussian();
  return lat;
}

// Build a lattice from explicit increments (for hand-made driving paths).
inline BrownianLattice lattice_from_increments(int dimension, int level,
                                               std::vector<double> increments,
                                               const SeedLineage& lineage) {
  detail::check_lattice_request(dimension, level, kDefaultLatticeBudget);
  const std::uint64_t count =
      (1ull << level) * static_cast<std::uint64_t>(dimension);
  if (increments.size() != count) {
    throw std::invalid_argument("lattice_from_increments: size mismatch");
  }
  BrownianLattice lat;
  lat.dimension = dimension;
  lat.level = level;
  lat.lineage = lineage;
  lat.increments = std::move(increments);
  return lat;
}

// One Brownian-bridge midpoint refinement: each parent increment xi over a
// cell of width h splits into (xi/2 + eta, xi/2 - eta) with eta drawn
// N(0, h/4) from the bridge stream, then the second child absorbs rounding
// so the pair sums back to xi exactly. Bridge draw counters are keyed by the
// dyadic node id (2^level + cell), which never collides across levels.
inline BrownianLattice refine(const BrownianLattice& lat,
                              std::uint64_t budget_doubles = kDefaultLatticeBudget) {
  detail::check_lattice_request(lat.dimension, lat.level + 1, budget_doubles);
  BrownianLattice out;
  out.dimension = lat.dimension;
  out.level = lat.level + 1;
  out.lineage = lat.lineage;
  out.increments.resize(lat.increments.size() * 2);
  SeedLineage bridge = lat.lineage;
  bridge.stream_tag |= kBridgeStreamBit;
  const int d = lat.dimension;
  const double sd = 0.5 * std::sqrt(std::ldexp(1.0, -lat.level));
  const std::uint64_t cells = lat.steps();
  for (std::uint64_t k = 0; k < cells; ++k) {
    const std::uint64_t node = (1ull << lat.level) + k;
    for (int j = 0; j < d; ++j) {
      const double xi = lat.increments[k * d + j];
      const double eta = sd * gaussian_at(bridge, node * d + j);
      double left = 0.5 * xi + eta;
      double right = xi - left;
      // Push the rounding residue into whichever child is smaller in
      // magnitude; its ulp is fine enough to absorb the correction.
      for (int pass = 0; pass < 8; ++pass) {
        const double diff = xi - (left + right);
        if (diff == 0.0) break;
        if (std::abs(left) <= std::abs(right)) {
          left += diff;
        } else {
          right += diff;
        }
      }
      if (left + right != xi) {  // exact fallback: split in half
        left = 0.5 * xi;
        right = xi - left;
      }
      out.increments[(2 * k) * d + j] = left;
      out.increments[(2 * k + 1) * d + j] = right;
    }
  }
  return out;
}

// Drop to a coarser level by summing each cell's children in ascending index
// order. target_level == lat.level returns a copy.
inline BrownianLattice coarsen(const BrownianLattice& lat, int target_level) {
  if (target_level < 0 || target_level > lat.level) {
    throw std::invalid_argument("coarsen: target level must lie in [0, level]");
  }
  BrownianLattice out;
  out.dimension = lat.dimension;
  out.level = target_level;
  out.lineage = lat.lineage;
  const int gap = lat.level - target_level;
  const std::uint64_t cells = 1ull << target_level;
  const std::uint64_t children = 1ull << gap;
  const int d = lat.dimension;
  out.increments.assign(cells * static_cast<std::uint64_t>(d), 0.0);
  for (std::uint64_t k = 0; k < cells; ++k) {
    for (int j = 0; j < d; ++j) {
      double sum = 0.0;
      const std::uint64_t base = GridMap::first_fine(k, gap);
      for (std::uint64_t c = 0; c < children; ++c) {
        sum += lat.increments[(base + c) * d + j];
      }
      out.increments[k * d + j] = sum;
    }
  }
  return out;
}

// Path value W at node k (ascending prefix sum of the first k increments).
inline std::vector<double> value_at(const BrownianLattice& lat, std::uint64_t k) {
  if (k > lat.steps()) throw std::invalid_argument("value_at: node index out of range");
  std::vector<double> w(lat.dimension, 0.0);
  const int d = lat.dimension;
  for (std::uint64_t i = 0; i < k; ++i) {
    for (int j = 0; j < d; ++j) w[j] += lat.increments[i * d + j];
  }
  return w;
}

}  // namespace emlab
