#pragma once

// Maximum-likelihood reconstruction of photon-number populations from
// phase-averaged homodyne data.
//
// Detection losses are folded into the measurement model (the response
// matrix), so the estimate is the pre-detection, efficiency-corrected state
// and stays physical by construction. The estimator is the diagonal form of
// the R rho R iteration, which for Fock-diagonal states is an EM update on
// the populations.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopmem/fock_core.hpp"
#include "loopmem/homodyne_lab.hpp"

namespace loopmem {

// Bins are left-closed, [edges[j], edges[j+1]). Samples below edges.front()
// go to underflow, samples at or above edges.back() to overflow.
struct BinnedHistogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;

  std::uint64_t total() const;
  // Likelihood cells: bins first, then underflow, then overflow.
  std::vector<double> cell_frequencies() const;
};

// Uniform edges covering [-half_range, half_range] in steps of `width`.
std::vector<double> uniform_edges(double half_range = 6.0, double width = 0.1);

BinnedHistogram bin_dataset(std::span<const double> samples, const std::vector<double>& edges);
BinnedHistogram bin_dataset(const QuadratureDataset& ds, const std::vector<double>& edges);

// M[j][n]: probability that a state with n photons before detection lands in
// cell j, i.e. sum_k C(n,k) eta^k (1-eta)^(n-k) * int_cell |psi_k|^2.
// Row layout follows BinnedHistogram::cell_frequencies().
struct ResponseMatrix {
  std::vector<double> edges;
  FockBasisConfig basis;
  double eta = 1.0;
  std::vector<std::vector<double>> cells;  // [cell][n]

  std::size_t cell_count() const { return cells.size(); }
  // Probability of each cell for the pre-detection populations q.
  std::vector<double> predict(std::span<const double> q) const;
};

ResponseMatrix build_response(const FockBasisConfig& basis, const DetectionModel& det,
                              const std::vector<double>& edges);

enum class EfficiencyCorrection {
  // Losses inside the likelihood (default).
  povm_folding,
  // Reconstruct the detected state, then undo the losses algebraically.
  inverse_map,
};

struct ReconstructionOptions {
  int max_iterations = 5000;
  double tolerance = 1e-10;  // relative log-likelihood change
  double floor = 1e-12;      // populations below this are zeroed at output
  EfficiencyCorrection correction = EfficiencyCorrection::povm_folding;
};

struct ReconstructionResult {
  FockDiagonalState state;      // efficiency corrected
  FockDiagonalState raw_state;  // as detected, eta folded in
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<double> bootstrap_sigmas;  // empty unless bootstrap was run
  double eta = 1.0;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

// One EM update of the populations q for cell frequencies f.
std::vector<double> em_update(std::span<const double> frequencies, const ResponseMatrix& response,
                              std::span<const double> q);
double log_likelihood(std::span<const double> frequencies, const ResponseMatrix& response,
                      std::span<const double> q);

ReconstructionResult mle_reconstruct(const BinnedHistogram& hist, const ResponseMatrix& response,
                                     const ReconstructionOptions& options = {});

// Standard deviation of each corrected population over reconstructions of
// resampled datasets (drawn with replacement). One seed per resample.
std::vector<double> bootstrap_errors(const QuadratureDataset& ds, const ResponseMatrix& response,
                                     const ReconstructionOptions& options,
                                     std::span<const std::uint64_t> resample_seeds);
std::vector<double> bootstrap_errors(const QuadratureDataset& ds, const ResponseMatrix& response,
                                     const ReconstructionOptions& options, int n_resamples,
                                     std::uint64_t seed);

// Key-value reconstruction report, format version 1:
//   format_version, round_trips, source_file, eta, n_max, tail_tolerance,
//   iterations, converged, loglik, then population.<n>, raw.<n>, sigma.<n>.
struct ReconstructionReport {
  int round_trips = 0;
  std::string source_file;
  ReconstructionResult result;
};

void write_report(const ReconstructionReport& report, std::ostream& out);
ReconstructionReport read_report(std::istream& in, const std::string& name = {});

}  // namespace loopmem
