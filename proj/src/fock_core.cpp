#include "loopmem/fock_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace loopmem {

void FockBasisConfig::validate() const {
  if (n_max < 2) {
    throw std::invalid_argument("FockBasisConfig: n_max must be >= 2");
  }
  if (!(tail_tolerance > 0.0 && tail_tolerance < 1.0)) {
    throw std::invalid_argument("FockBasisConfig: tail_tolerance must lie in (0, 1)");
  }
}

FockDiagonalState::FockDiagonalState(std::vector<double> populations, FockBasisConfig basis)
    : populations_(std::move(populations)), basis_(basis) {
  basis_.validate();
  const auto dim = static_cast<std::size_t>(basis_.dimension());
  if (populations_.size() > dim) {
    std::ostringstream msg;
    msg << "FockDiagonalState: " << populations_.size()
        << " populations exceed the basis dimension " << dim;
    throw std::invalid_argument(msg.str());
  }
  populations_.resize(dim, 0.0);

  double sum = 0.0;
  for (std::size_t n = 0; n < dim; ++n) {
    const double v = populations_[n];
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream msg;
      msg << "FockDiagonalState: population[" << n << "] = " << v << " outside [0, 1]";
      throw std::invalid_argument(msg.str());
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "FockDiagonalState: populations sum to " << sum << ", expected 1";
    throw std::invalid_argument(msg.str());
  }
  if (populations_.back() > basis_.tail_tolerance) {
    std::ostringstream msg;
    msg << "FockDiagonalState: population at n_max = " << basis_.n_max << " is "
        << populations_.back() << ", above the tail tolerance " << basis_.tail_tolerance;
    throw std::invalid_argument(msg.str());
  }
}

FockDiagonalState FockDiagonalState::fock(int n, FockBasisConfig basis) {
  if (n < 0 || n > basis.n_max) {
    throw std::invalid_argument("FockDiagonalState::fock: photon number outside the basis");
  }
  std::vector<double> p(static_cast<std::size_t>(basis.dimension()), 0.0);
  p[static_cast<std::size_t>(n)] = 1.0;
  return FockDiagonalState(std::move(p), basis);
}

double log_factorial(int n) {
  if (n < 0) {
    throw std::invalid_argument("log_factorial: negative argument");
  }
  double acc = 0.0;
  for (int k = 2; k <= n; ++k) {
    acc += std::log(static_cast<double>(k));
  }
  return acc;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) {
    return 0.0;
  }
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
  }
  return c;
}

double hermite_eval(int n, double x) {
  if (n < 0) {
    throw std::invalid_argument("hermite_eval: n must be >= 0");
  }
  double h_prev = 1.0;
  if (n == 0) {
    return h_prev;
  }
  double h = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double h_next = 2.0 * x * h - 2.0 * k * h_prev;
    h_prev = h;
    h = h_next;
  }
  return h;
}

double laguerre_eval(int n, double y) {
  if (n < 0) {
    throw std::invalid_argument("laguerre_eval: n must be >= 0");
  }
  double l_prev = 1.0;
  if (n == 0) {
    return l_prev;
  }
  double l = 1.0 - y;
  for (int k = 1; k < n; ++k) {
    const double l_next = ((2.0 * k + 1.0 - y) * l - k * l_prev) / (k + 1.0);
    l_prev = l;
    l = l_next;
  }
  return l;
}

double quadrature_pdf(int n, double x) {
  if (n < 0) {
    throw std::invalid_argument("quadrature_pdf: n must be >= 0");
  }
  const double h = hermite_eval(n, x);
  if (h == 0.0) {
    return 0.0;
  }
  // H_n^2 e^{-x^2} / (2^n n! sqrt(pi)), assembled in log space.
  const double log_pdf = 2.0 * std::log(std::abs(h)) - x * x - n * std::numbers::ln2 -
                         log_factorial(n) - 0.5 * std::log(std::numbers::pi);
  return std::exp(log_pdf);
}

void quadrature_pdfs(double x, std::span<double> out) {
  if (out.empty()) {
    return;
  }
  // psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}
  double psi_prev = 0.0;
  double psi = std::exp(-0.5 * x * x) / std::sqrt(std::sqrt(std::numbers::pi));
  out[0] = psi * psi;
  for (std::size_t n = 0; n + 1 < out.size(); ++n) {
    const double k = static_cast<double>(n);
    const double psi_next =
        std::sqrt(2.0 / (k + 1.0)) * x * psi - std::sqrt(k / (k + 1.0)) * psi_prev;
    psi_prev = psi;
    psi = psi_next;
    out[n + 1] = psi * psi;
  }
}

double mixture_pdf(const FockDiagonalState& state, double x) {
  double acc = 0.0;
  const auto pops = state.populations();
  for (std::size_t n = 0; n < pops.size(); ++n) {
    if (pops[n] != 0.0) {
      acc += pops[n] * quadrature_pdf(static_cast<int>(n), x);
    }
  }
  return acc;
}

double wigner_radial(const FockDiagonalState& state, double r) {
  if (!(r >= 0.0)) {
    throw std::invalid_argument("wigner_radial: r must be >= 0");
  }
  const double y = 2.0 * r * r;
  const auto pops = state.populations();
  // Laguerre recurrence carried along the sum.
  double l_prev = 1.0;
  double l = 1.0 - y;
  double acc = pops[0];
  for (std::size_t n = 1; n < pops.size(); ++n) {
    if (n > 1) {
      const double k = static_cast<double>(n - 1);
      const double l_next = ((2.0 * k + 1.0 - y) * l - k * l_prev) / (k + 1.0);
      l_prev = l;
      l = l_next;
    }
    acc += (n % 2 == 0 ? 1.0 : -1.0) * pops[n] * l;
  }
  return std::exp(-r * r) * acc / std::numbers::pi;
}

namespace {

void check_transmission(double t, const char* who) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream msg;
    msg << who << ": transmission " << t << " outside [0, 1]";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

FockDiagonalState apply_loss(const FockDiagonalState& state, double transmission) {
  check_transmission(transmission, "apply_loss");
  const auto in = state.populations();
  const int dim = static_cast<int>(in.size());
  const double t = transmission;
  const double r = 1.0 - t;
  std::vector<double> out(in.size(), 0.0);
  for (int m = 0; m < dim; ++m) {
    if (in[m] == 0.0) {
      continue;
    }
    for (int n = 0; n <= m; ++n) {
      out[n] += binomial(m, n) * std::pow(t, n) * std::pow(r, m - n) * in[m];
    }
  }
  return FockDiagonalState(std::move(out), state.basis());
}

FockDiagonalState invert_loss(const FockDiagonalState& state, double transmission) {
  if (!(transmission > 0.0 && transmission <= 1.0)) {
    throw std::invalid_argument("invert_loss: transmission must lie in (0, 1]");
  }
  const auto in = state.populations();
  const int dim = static_cast<int>(in.size());
  const double t = 1.0 / transmission;
  const double r = 1.0 - t;
  std::vector<double> out(in.size(), 0.0);
  for (int m = 0; m < dim; ++m) {
    for (int n = 0; n <= m; ++n) {
      out[n] += binomial(m, n) * std::pow(t, n) * std::pow(r, m - n) * in[m];
    }
  }
  double sum = 0.0;
  for (double& v : out) {
    v = std::max(v, 0.0);
    sum += v;
  }
  if (!(sum > 0.0)) {
    throw std::domain_error("invert_loss: no physical state remains after clipping");
  }
  for (double& v : out) {
    v /= sum;
  }
  return FockDiagonalState(std::move(out), state.basis());
}

double fidelity(const FockDiagonalState& state, int reference_n) {
  if (reference_n < 0 || reference_n > state.n_max()) {
    throw std::invalid_argument("fidelity: reference photon number outside the basis");
  }
  return state[reference_n];
}

}  // namespace loopmem
