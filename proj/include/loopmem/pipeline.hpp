#pragma once

// simulate -> reconstruct -> fit -> sync. Each stage reads the previous
// stage's files from the output directory and writes tab-separated tables
// headed by a '#' provenance comment (toolkit version, config hash, seed).
//
// Output directory layout:
//   manifest.tsv               round_trips, file, seed, count
//   datasets/N<trips>.dat      quadrature datasets
//   reports/N<trips>.txt       reconstruction reports
//   summary.tsv                corrected populations against N
//   loss_fit.tsv, lifetime.tsv, negativity.tsv, crossing.tsv
//   sync.tsv
//
// Every stage returns 0 on success and 1 if any item failed or a
// reconstruction did not converge; failures of single items are reported and
// the remaining items are still processed.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "loopmem/config.hpp"
#include "loopmem/memory_model.hpp"
#include "loopmem/text_io.hpp"

namespace loopmem {

struct RunContext {
  RunConfig config;
  int jobs = 1;
  bool quiet = false;
  std::ostream* log = nullptr;  // progress; silenced by `quiet`
  std::ostream* err = nullptr;  // errors, never silenced
};

std::string provenance(const RunConfig& config);

int cmd_simulate(const RunContext& ctx);
// `manifest` defaults to <output_dir>/manifest.tsv.
int cmd_reconstruct(const RunContext& ctx, std::optional<std::filesystem::path> manifest = {});
// `summary` defaults to <output_dir>/summary.tsv.
int cmd_fit(const RunContext& ctx, std::optional<std::filesystem::path> summary = {});
// Adds a row at the fitted crossing (rounded down) when one is given.
int cmd_sync(const RunContext& ctx, std::optional<double> crossing = {});
// fit, then sync at the fitted crossing.
int cmd_report(const RunContext& ctx, std::optional<std::filesystem::path> summary = {});

// Populations per round trip from a summary table.
StorageSeries series_from_summary(const Table& summary, const FockBasisConfig& basis);

}  // namespace loopmem
