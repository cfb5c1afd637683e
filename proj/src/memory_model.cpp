#include "loopmem/memory_model.hpp"

#include <cmath>
#include <stdexcept>

namespace loopmem {

void MemoryParams::validate() const {
  if (!(loss_per_trip >= 0.0 && loss_per_trip < 1.0)) {
    throw std::invalid_argument("MemoryParams: loss_per_trip must lie in [0, 1)");
  }
  if (!(round_trip_time > 0.0)) {
    throw std::invalid_argument("MemoryParams: round_trip_time must be positive");
  }
}

double MemoryParams::transmission(double n_trips) const {
  if (!(n_trips >= 0.0)) {
    throw std::invalid_argument("MemoryParams::transmission: negative round-trip count");
  }
  if (n_trips == 0.0) {
    return 1.0;
  }
  return std::exp(n_trips * std::log1p(-loss_per_trip));
}

void SourceParams::validate() const {
  if (!(heralding_probability >= 0.0 && heralding_probability <= 1.0)) {
    throw std::invalid_argument("SourceParams: heralding_probability must lie in [0, 1]");
  }
  if (!(pulse_rate > 0.0)) {
    throw std::invalid_argument("SourceParams: pulse_rate must be positive");
  }
}

void StorageSeries::validate() const {
  if (round_trips.size() != states.size()) {
    throw std::invalid_argument("StorageSeries: round_trips and states differ in length");
  }
  for (std::size_t i = 0; i < round_trips.size(); ++i) {
    if (round_trips[i] < 0) {
      throw std::invalid_argument("StorageSeries: negative round-trip count");
    }
    if (i > 0 && round_trips[i] <= round_trips[i - 1]) {
      throw std::invalid_argument("StorageSeries: round trips must be strictly increasing");
    }
  }
}

FockDiagonalState evolve_rounds(const FockDiagonalState& initial, const MemoryParams& params,
                                int n_trips) {
  if (n_trips < 0) {
    throw std::invalid_argument("evolve_rounds: n_trips must be >= 0");
  }
  return evolve_continuous(initial, params, static_cast<double>(n_trips));
}

FockDiagonalState evolve_continuous(const FockDiagonalState& initial, const MemoryParams& params,
                                    double n_trips) {
  params.validate();
  if (n_trips == 0.0) {
    return initial;
  }
  return apply_loss(initial, params.transmission(n_trips));
}

StorageSeries storage_series(const FockDiagonalState& initial, const MemoryParams& params,
                             const std::vector<int>& trips) {
  for (std::size_t i = 0; i < trips.size(); ++i) {
    if (trips[i] < 0 || (i > 0 && trips[i] <= trips[i - 1])) {
      throw std::invalid_argument(
          "storage_series: trips must be non-negative and strictly increasing");
    }
  }
  StorageSeries series;
  series.round_trips = trips;
  series.states.reserve(trips.size());
  for (int n : trips) {
    series.states.push_back(evolve_rounds(initial, params, n));
  }
  return series;
}

double theoretical_lifetime(const MemoryParams& params) {
  params.validate();
  if (params.loss_per_trip == 0.0) {
    throw std::domain_error("theoretical_lifetime: lossless cavity has an infinite lifetime");
  }
  return -params.round_trip_time / std::log1p(-params.loss_per_trip);
}

double sync_probability(const SourceParams& source, int max_trips) {
  source.validate();
  if (max_trips < 0) {
    throw std::invalid_argument("sync_probability: max_trips must be >= 0");
  }
  if (max_trips == 0) {
    return 0.0;
  }
  if (source.heralding_probability == 1.0) {
    return 1.0;
  }
  return -std::expm1(max_trips * std::log1p(-source.heralding_probability));
}

SyncRate sync_rate(const SourceParams& source, int max_trips) {
  SyncRate out;
  out.probability = sync_probability(source, max_trips);
  out.rate = source.production_rate() * out.probability;
  out.enhancement = source.heralding_probability > 0.0
                        ? out.probability / source.heralding_probability
                        : static_cast<double>(max_trips);  // limit of P/p1 as p1 -> 0
  return out;
}

}  // namespace loopmem
