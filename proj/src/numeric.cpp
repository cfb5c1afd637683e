#include "loopmem/numeric.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace loopmem::numeric {

double integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tolerance) {
  if (a == b) {
    return 0.0;
  }
  // Boost's tolerance is relative; a relative target of 1e-13 plus a deep
  // bisection budget keeps the absolute error well below abs_tolerance for
  // the O(1) integrands used here.
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 30, 1e-13, &error);
  if (error > abs_tolerance && error > 1e-13 * std::abs(value)) {
    throw std::runtime_error("numeric::integrate: requested tolerance not reached");
  }
  return value;
}

MinimumResult minimize_bounded(const std::function<double(double)>& f, double lo, double hi,
                               double x_tolerance, int max_iter) {
  if (!(lo < hi)) {
    throw std::invalid_argument("minimize_bounded: empty interval");
  }
  // Boost takes the tolerance as bits of relative precision.
  const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(x_tolerance))), 8,
                              std::numeric_limits<double>::digits);
  int evals = 0;
  auto counted = [&](double x) {
    ++evals;
    return f(x);
  };
  auto iterations = static_cast<std::uintmax_t>(max_iter);
  const auto [x, fx] = boost::math::tools::brent_find_minima(counted, lo, hi, bits, iterations);
  // The interior search never probes the interval ends themselves.
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  evals += 2;
  MinimumResult best{x, fx, evals};
  if (f_lo < best.value) {
    best = {lo, f_lo, evals};
  }
  if (f_hi < best.value) {
    best = {hi, f_hi, evals};
  }
  return best;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi,
                   double x_tolerance) {
  const bool lo_negative = f(lo) < 0.0;
  if (lo_negative == (f(hi) < 0.0)) {
    throw std::invalid_argument("bisect_root: interval does not bracket a sign change");
  }
  while (hi - lo > x_tolerance) {
    const double mid = 0.5 * (lo + hi);
    if ((f(mid) < 0.0) == lo_negative) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("RandomStream::below: empty range");
  }
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

}  // namespace loopmem::numeric
