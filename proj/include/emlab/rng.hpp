// Keyed counter-based random number generation. Every variate is a pure
// function of (experiment_seed, path_index, stream_tag, draw_counter), so any
// draw can be reproduced in isolation regardless of scheduling or worker
// count. Gaussians come from the inverse normal CDF applied to the uniform
// output, keeping the uniform -> normal map strictly monotone per counter.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace emlab {

struct SeedLineage {
  std::uint64_t experiment_seed = 0;
  std::uint64_t path_index = 0;
  std::uint32_t stream_tag = 0;

  friend bool operator==(const SeedLineage&, const SeedLineage&) = default;
};

// High bit of the stream tag marks Brownian-bridge refinement draws; fresh
// increment draws keep it clear. User-chosen tags should stay below 2^31.
inline constexpr std::uint32_t kBridgeStreamBit = 0x80000000u;

namespace detail {

struct Words4 {
  std::uint64_t w[4];
};

inline constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
inline constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
inline constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;
inline constexpr std::uint64_t kDomain = 0x656d6c61622d6272ull;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                    std::uint64_t& lo) {
  unsigned __int128 prod = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(prod >> 64);
  lo = static_cast<std::uint64_t>(prod);
}

inline Words4 philox4x64(std::uint64_t k0, std::uint64_t k1, std::uint64_t c0,
                         std::uint64_t c1, std::uint64_t c2, std::uint64_t c3) {
  std::uint64_t r0 = c0, r1 = c1, r2 = c2, r3 = c3;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, r0, hi0, lo0);
    mulhilo(kPhiloxM1, r2, hi1, lo1);
    std::uint64_t n0 = hi1 ^ r1 ^ k0;
    std::uint64_t n1 = lo1;
    std::uint64_t n2 = hi0 ^ r3 ^ k1;
    std::uint64_t n3 = lo0;
    r0 = n0;
    r1 = n1;
    r2 = n2;
    r3 = n3;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return Words4{{r0, r1, r2, r3}};
}

inline Words4 block_at(const SeedLineage& lin, std::uint64_t block) {
  return philox4x64(lin.experiment_seed, lin.path_index, block,
                    static_cast<std::uint64_t>(lin.stream_tag), kDomain, 0);
}

// Map a 64-bit word to (0, 1), centered so 0 and 1 are unreachable.
inline double word_to_uniform(std::uint64_t w) {
  return static_cast<double>(w >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace detail

// Inverse of the standard normal CDF, accurate to about 1e-15 relative error
// over (0, 1). Rational approximations on three regions (central, moderate
// tail, far tail) in the classical PPND16 arrangement.
inline double normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_inv_cdf: p must lie in (0,1)");
  const double q = p - 0.5;
  if (q >= -0.425 && q <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
              6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
            1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
          1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return q * num / den;
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    v = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    v = num / den;
  }
  return (q < 0.0) ? -v : v;
}

// Random access: the uniform draw at an absolute counter.
inline double uniform_at(const SeedLineage& lin, std::uint64_t counter) {
  const detail::Words4 blk = detail::block_at(lin, counter >> 2);
  return detail::word_to_uniform(blk.w[counter & 3]);
}

// Random access: the Gaussian draw at an absolute counter.
inline double gaussian_at(const SeedLineage& lin, std::uint64_t counter) {
  return normal_inv_cdf(uniform_at(lin, counter));
}

// Sequential reader over the same draw sequence; bitwise identical to the
// random-access functions at equal counters, amortizing one block per four
// draws.
class CounterRng {
 public:
  explicit CounterRng(const SeedLineage& lin, std::uint64_t start = 0)
      : lin_(lin), next_(start) {}

  void seek(std::uint64_t counter) { next_ = counter; }
  std::uint64_t counter() const { return next_; }

  double uniform() {
    const std::uint64_t block = next_ >> 2;
    if (block != cached_block_) {
      blk_ = detail::block_at(lin_, block);
      cached_block_ = block;
    }
    return detail::word_to_uniform(blk_.w[next_++ & 3]);
  }

  double gaussian() { return normal_inv_cdf(uniform()); }

 private:
  SeedLineage lin_;
  std::uint64_t next_ = 0;
  std::uint64_t cached_block_ = ~0ull;
  detail::Words4 blk_{};
};

}  // namespace emlab
