#pragma once

// Synthetic phase-averaged homodyne detection.
//
// Finite detection efficiency is a binomial loss channel applied to the state
// before an ideal quadrature measurement, so the recorded density is
//   p(x) = sum_n <n|rho_det|n> |psi_n(x)|^2,  rho_det = apply_loss(rho, eta).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loopmem/fock_core.hpp"

namespace loopmem {

struct DetectionModel {
  double eta_pd = 0.94;             // photodiode quantum efficiency
  double eta_c = 0.77 / 0.94;       // mode matching, contrast squared
  double eta = 0.77;                // eta_pd * eta_c
  double sigma_eta = 0.03;          // 1-sigma uncertainty on eta

  static DetectionModel from_components(double eta_pd, double eta_c, double sigma_eta);
  // Splits a total efficiency into photodiode and mode-matching factors.
  static DetectionModel from_total(double eta, double sigma_eta, double eta_pd = 0.94);
  static DetectionModel ideal() { return from_components(1.0, 1.0, 0.0); }

  void validate() const;
  // Same photodiode efficiency, total efficiency moved to `new_eta`.
  DetectionModel with_eta(double new_eta) const;
};

FockDiagonalState detected_state(const FockDiagonalState& state, const DetectionModel& det);

struct DatasetMetadata {
  std::string source;               // free-text description of the prepared state
  std::vector<double> populations;  // state entering the detector (before eta)
  FockBasisConfig basis;
  DetectionModel detection;
  int round_trips = 0;
  std::uint64_t seed = 0;
};

struct QuadratureDataset {
  std::vector<double> samples;
  DatasetMetadata metadata;

  void validate() const;
};

// Inverse-CDF sampler for the phase-averaged quadrature density of a state.
// The CDF is tabulated on a fixed grid over [-8, 8] and inverted by linear
// (monotone) interpolation.
class QuadratureSampler {
 public:
  static constexpr double kRange = 8.0;
  static constexpr std::size_t kKnots = std::size_t{1} << 14;
  static constexpr double kMaxTailMass = 1e-10;

  // `state` is sampled as-is: apply detection losses beforehand.
  explicit QuadratureSampler(const FockDiagonalState& state);

  double draw(double u) const;
  std::vector<double> sample(std::size_t count, std::uint64_t seed) const;

  // Tabulated CDF (for diagnostics and tests).
  double cdf(double x) const;
  double tail_mass() const { return tail_mass_; }

 private:
  std::vector<double> knots_;
  std::vector<double> cdf_;
  double tail_mass_ = 0.0;
};

QuadratureDataset sample_quadratures(const FockDiagonalState& state, const DetectionModel& det,
                                     std::size_t count, std::uint64_t seed,
                                     std::string source = {}, int round_trips = 0);

// Text format, version 1:
//   optional '#' comment lines
//   `key = value` header lines (format_version, source, n_max, tail_tolerance,
//   populations, eta_pd, eta_c, eta, sigma_eta, round_trips, seed, count)
//   one sample per line, 17 significant digits
// Reading throws ParseError naming the offending line.
inline constexpr int kDatasetFormatVersion = 1;

void write_dataset(const QuadratureDataset& ds, std::ostream& out);
QuadratureDataset read_dataset(std::istream& in, const std::string& name = {});
// Writes through a temporary file and renames it into place.
void save_dataset(const QuadratureDataset& ds, const std::filesystem::path& path);
QuadratureDataset load_dataset(const std::filesystem::path& path);

}  // namespace loopmem
