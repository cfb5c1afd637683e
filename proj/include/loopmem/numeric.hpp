#pragma once

// Small numerical toolbox shared by the modules: adaptive integration,
// bounded 1-D minimization, bisection, and a reproducible random stream.

#include <cstdint>
#include <functional>
#include <random>

namespace loopmem::numeric {

// Adaptive Gauss-Kronrod (G7/K15) integration of f over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tolerance = 1e-12);

struct MinimumResult {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Brent minimization on [lo, hi] (Boost.Math), to roughly x_tolerance
// relative to |x|. The end points are compared too, so a minimum on the
// boundary is returned exactly.
MinimumResult minimize_bounded(const std::function<double(double)>& f, double lo, double hi,
                               double x_tolerance = 1e-10, int max_iter = 500);

// Bisection on a sign change of f in [lo, hi]. f(lo) and f(hi) must have
// opposite signs (zero counts as non-negative).
double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double x_tolerance = 1e-10);

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed for item `index` of a run seeded with
// `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// 64-bit Mersenne Twister with a platform-independent mapping to [0, 1).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // 53 random bits scaled into [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace loopmem::numeric
