#pragma once

// Downstream analyses of a storage series: loss-per-trip fits, fidelity
// lifetimes, Wigner negativity curves and their zero crossings, and
// detection-efficiency uncertainty bands.

#include <functional>
#include <optional>
#include <vector>

#include "loopmem/fock_core.hpp"
#include "loopmem/homodyne_lab.hpp"
#include "loopmem/memory_model.hpp"

namespace loopmem {

struct Negativity {
  double value = 0.0;  // inf_r W(r), never positive
  double radius = 0.0; // where it is attained; +inf when only approached at r -> inf
};

inline constexpr double kNegativityScanRadius = 5.0;

// Smallest Wigner value over r in [0, r_max]: grid scan (step 0.01) then
// golden-section refinement to 1e-8. May be slightly positive.
Negativity wigner_minimum(const FockDiagonalState& state, double r_max = kNegativityScanRadius);

// Negativity as the infimum of the Wigner function over the whole plane.
// Phase-invariant Wigner functions vanish at infinity, so non-negative
// states report (0, +inf).
Negativity negativity(const FockDiagonalState& state);

struct LossFitOptions {
  bool fix_initial = true;  // rho_0 pinned to the N = 0 state; else co-fitted
  // Per-state, per-population standard deviations used as 1/sigma^2 weights.
  // Empty means unweighted.
  std::vector<std::vector<double>> sigmas;
  double p_max = 0.2;
};

struct LossFitResult {
  double loss_per_trip = 0.0;
  FockDiagonalState initial_state;
  double residual = 0.0;    // weighted RMS over all fitted populations
  double covariance = 0.0;  // variance of the fitted loss
};

// Least-squares fit of the per-trip loss to all populations at all points.
// Throws std::domain_error("loss unidentifiable") when the predictions do not
// depend on the loss, e.g. for a vacuum series.
LossFitResult fit_loss(const StorageSeries& series, const LossFitOptions& options = {});

struct LifetimeFit {
  std::optional<double> tau;  // seconds; empty when the decay does not resolve (diverges)
  double f0 = 0.0;
  int excluded_points = 0;    // non-positive populations left out of the log fit
};

// Weighted log-linear fit of populations[n] against t = N * dt. Weights are
// y^2, the inverse variance of log y for constant absolute noise.
LifetimeFit fit_lifetime(const StorageSeries& series, int n, double dt);

struct ZeroCrossing {
  double round_trips = 0.0;
  double uncertainty = 0.0;
};

// First round-trip count (continuous) at which the stored state stops having
// a negative Wigner function. Empty when the initial state is not negative or
// the cavity is lossless.
std::optional<double> negativity_zero_crossing(const FockDiagonalState& initial,
                                               const MemoryParams& params);

// Re-reads an efficiency-corrected state as if the data had been corrected
// with `new_eta` instead of `eta_used`.
FockDiagonalState recorrect(const FockDiagonalState& corrected, double eta_used, double new_eta);

struct NegativityCurve {
  std::vector<int> round_trips;
  std::vector<double> negativity;
  std::vector<double> band_low;
  std::vector<double> band_high;
  std::optional<ZeroCrossing> zero_crossing;
  std::optional<double> crossing_low;   // band envelope of the crossing
  std::optional<double> crossing_high;
};

// `loss_variance` (variance of the fitted p) feeds the crossing uncertainty
// together with the eta band, summed in quadrature.
NegativityCurve negativity_curve(const FockDiagonalState& initial, const MemoryParams& params,
                                 const DetectionModel& det, const std::vector<int>& trips,
                                 double loss_variance = 0.0);

struct Band {
  std::vector<double> low;
  std::vector<double> mid;
  std::vector<double> high;
};

// Runs `analysis` at eta - sigma, eta, eta + sigma and reports the pointwise
// envelope. `mid` is the nominal run.
Band eta_band(const std::function<std::vector<double>(double eta)>& analysis,
              const DetectionModel& det);

}  // namespace loopmem
