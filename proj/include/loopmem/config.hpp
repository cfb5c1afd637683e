#pragma once

// Run configuration: one `key = value` text file with dotted section names.
// Every key is optional; the defaults describe the single-photon storage run
// (diag(0.09, 0.91), 1% loss per trip, eta = 0.77, 50,000 samples per point).
// Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "loopmem/fock_core.hpp"
#include "loopmem/homodyne_lab.hpp"
#include "loopmem/memory_model.hpp"
#include "loopmem/tomography.hpp"

namespace loopmem {

struct ExperimentConfig {
  std::vector<double> initial_state = {0.09, 0.91};
  std::vector<int> trips = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  // 0 picks 50,000 samples, or 10,000 when the state is mostly two-photon.
  std::size_t samples = 0;
  std::uint64_t seed = 20150101;

  std::size_t samples_per_point() const;
};

struct TomographyConfig {
  double half_range = 6.0;
  double bin_width = 0.1;
  ReconstructionOptions options;
  int bootstrap = 0;  // resamples per point; 0 skips error bars
};

struct FitConfig {
  bool fix_initial = true;
  bool weighted = false;  // needs tomography.bootstrap >= 2
  double p_max = 0.2;
};

struct SyncConfig {
  std::vector<int> trips = {0, 10, 20, 30, 40, 50, 57};
  double improvement_factor = 3.0;
};

struct RunConfig {
  FockBasisConfig basis;
  MemoryParams memory;
  DetectionModel detection;
  SourceParams source;
  ExperimentConfig experiment;
  TomographyConfig tomography;
  FitConfig fit;
  SyncConfig sync;
  std::filesystem::path output_dir = "loopmem-out";

  void validate() const;
  FockDiagonalState initial_state() const;
  // Canonical text form with every key spelled out; parse_config reads it
  // back to an identical configuration.
  std::string canonical() const;
  std::uint64_t hash() const;
};

RunConfig parse_config(std::istream& in, const std::string& name = {});
RunConfig load_config(const std::filesystem::path& path);

// Path named by LOOPMEM_CONFIG, if set and non-empty.
std::optional<std::filesystem::path> config_path_from_env();

}  // namespace loopmem
