#pragma once

// Loop-memory physics: each round trip through the storage cavity is a
// photon-loss channel with transmission 1 - p, so N trips compose into a
// single loss channel with transmission (1 - p)^N.

#include <string>
#include <vector>

#include "loopmem/fock_core.hpp"

namespace loopmem {

// 1 / (76 MHz): the cavity length is matched to the laser repetition rate.
inline constexpr double kDefaultRoundTripTime = 1.0 / 76e6;

struct MemoryParams {
  double loss_per_trip = 0.01;
  double round_trip_time = kDefaultRoundTripTime;  // seconds
  std::string label;

  void validate() const;
  // Transmission after a (possibly fractional) number of round trips.
  double transmission(double n_trips) const;
};

struct SourceParams {
  double heralding_probability = 200e3 / 76e6;  // per laser pulse
  double pulse_rate = 76e6;                     // Hz

  void validate() const;
  double production_rate() const { return heralding_probability * pulse_rate; }
};

struct StorageSeries {
  std::vector<int> round_trips;
  std::vector<FockDiagonalState> states;

  // Strictly increasing, non-negative trips, one state per trip.
  void validate() const;
  std::size_t size() const { return round_trips.size(); }
};

FockDiagonalState evolve_rounds(const FockDiagonalState& initial, const MemoryParams& params,
                                int n_trips);
// Continuous-N extension used for zero-crossing searches.
FockDiagonalState evolve_continuous(const FockDiagonalState& initial, const MemoryParams& params,
                                    double n_trips);

StorageSeries storage_series(const FockDiagonalState& initial, const MemoryParams& params,
                             const std::vector<int>& trips);

// tau = -dt / ln(1 - p): the time constant of the single-photon population
// decay F(N) = F0 (1 - p)^N. Throws std::domain_error for p = 0, where the
// lifetime is infinite.
double theoretical_lifetime(const MemoryParams& params);

// Probability that a source with per-pulse success p1 fires at least once
// within max_trips pulses: 1 - (1 - p1)^N.
double sync_probability(const SourceParams& source, int max_trips);

struct SyncRate {
  double probability = 0.0;
  double rate = 0.0;         // Hz
  double enhancement = 0.0;  // P / p1
};

SyncRate sync_rate(const SourceParams& source, int max_trips);

}  // namespace loopmem
