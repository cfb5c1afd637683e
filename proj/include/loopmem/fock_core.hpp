#pragma once

// Fock-basis mathematics for phase-invariant (photon-number diagonal) states.
//
// Quadrature convention: x = (a + a^dagger) / sqrt(2), so the vacuum has
// variance 1/2 and its Wigner function peaks at 1/pi. With this choice a
// single photon has W(0) = -1/pi and a diagonal state has
// W(0) = (1/pi) * sum_n (-1)^n rho_nn.

#include <span>
#include <vector>

namespace loopmem {

struct FockBasisConfig {
  int n_max = 15;
  // Largest admissible population at n = n_max (truncation bias bound).
  double tail_tolerance = 1e-6;

  void validate() const;
  int dimension() const { return n_max + 1; }

  friend bool operator==(const FockBasisConfig&, const FockBasisConfig&) = default;
};

// Truncated vector of photon-number populations rho_nn, n = 0..n_max.
// Construction validates every invariant; invalid populations are rejected,
// never silently renormalized.
class FockDiagonalState {
 public:
  // Shorter inputs are zero-padded up to n_max + 1 entries.
  explicit FockDiagonalState(std::vector<double> populations, FockBasisConfig basis = {});

  static FockDiagonalState fock(int n, FockBasisConfig basis = {});
  static FockDiagonalState vacuum(FockBasisConfig basis = {}) { return fock(0, basis); }

  std::span<const double> populations() const { return populations_; }
  double operator[](int n) const { return populations_.at(static_cast<std::size_t>(n)); }
  const FockBasisConfig& basis() const { return basis_; }
  int n_max() const { return basis_.n_max; }

  friend bool operator==(const FockDiagonalState&, const FockDiagonalState&) = default;

 private:
  std::vector<double> populations_;
  FockBasisConfig basis_;
};

// log(n!) as a running sum of logs.
double log_factorial(int n);
double binomial(int n, int k);

// Physicists' Hermite polynomial H_n(x), upward three-term recurrence.
double hermite_eval(int n, double x);
// Laguerre polynomial L_n(y), upward recurrence.
double laguerre_eval(int n, double y);

// |psi_n(x)|^2 for the number state |n>; integrates to 1 over the real line.
double quadrature_pdf(int n, double x);
// |psi_n(x)|^2 for n = 0..out.size()-1 in one pass, via the normalized
// wavefunction recurrence. Agrees with quadrature_pdf to rounding.
void quadrature_pdfs(double x, std::span<double> out);
// Phase-averaged quadrature density sum_n rho_nn |psi_n(x)|^2.
double mixture_pdf(const FockDiagonalState& state, double x);

// Radial Wigner function W(r) of a phase-invariant state, normalized so that
// 2*pi * int_0^inf W(r) r dr = 1.
double wigner_radial(const FockDiagonalState& state, double r);

// Binomial photon-loss channel with energy transmission T. The truncated map
// is column-stochastic, so the output sums to exactly what the input does.
FockDiagonalState apply_loss(const FockDiagonalState& state, double transmission);

// Formal inverse of apply_loss. Undoing loss amplifies noise and can produce
// negative entries; those are clipped to zero and the result renormalized.
FockDiagonalState invert_loss(const FockDiagonalState& state, double transmission);

// tr(rho |m><m|) for the Fock reference |m>.
double fidelity(const FockDiagonalState& state, int reference_n);

}  // namespace loopmem
