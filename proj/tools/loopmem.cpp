// loopmem: command-line driver for the loop-memory simulation pipeline.
//
//   loopmem simulate    [--config F] [--seed S] [--out DIR] [--jobs J]
//   loopmem reconstruct [--manifest F]
//   loopmem fit         [--summary F]
//   loopmem sync        [--crossing N]
//   loopmem report      [--summary F]
//
// The config file defaults to $LOOPMEM_CONFIG; without either, built-in
// defaults apply. Exit status: 0 ok, 1 a stage failed or did not converge,
// 2 bad usage or configuration.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "loopmem/config.hpp"
#include "loopmem/errors.hpp"
#include "loopmem/pipeline.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<long long> seed;
  std::string out;
  int jobs = 1;
  bool quiet = false;
};

loopmem::RunContext make_context(const GlobalFlags& flags) {
  loopmem::RunConfig cfg;
  if (!flags.config.empty()) {
    cfg = loopmem::load_config(flags.config);
  } else if (auto env = loopmem::config_path_from_env()) {
    cfg = loopmem::load_config(*env);
  }
  if (flags.seed) {
    if (*flags.seed < 0) {
      throw std::invalid_argument("--seed must be >= 0");
    }
    cfg.experiment.seed = static_cast<std::uint64_t>(*flags.seed);
  }
  if (!flags.out.empty()) {
    cfg.output_dir = flags.out;
  }
  cfg.validate();
  loopmem::RunContext ctx;
  ctx.config = std::move(cfg);
  ctx.jobs = flags.jobs;
  ctx.quiet = flags.quiet;
  ctx.log = &std::cout;
  ctx.err = &std::cerr;
  return ctx;
}

void add_global_flags(CLI::App* app, GlobalFlags& flags) {
  app->add_option("--config", flags.config, "run configuration file (default $LOOPMEM_CONFIG)");
  app->add_option("--seed", flags.seed, "master seed, overrides experiment.seed");
  app->add_option("--out", flags.out, "output directory, overrides output.dir");
  app->add_option("--jobs", flags.jobs, "worker threads for per-point work")
      ->check(CLI::PositiveNumber);
  app->add_flag("--quiet", flags.quiet, "only report errors");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop quantum memory simulation and tomography pipeline"};
  app.set_version_flag("--version", std::string("loopmem ") + LOOPMEM_VERSION);
  app.require_subcommand(1);

  GlobalFlags flags;
  std::string manifest;
  std::string summary;
  std::optional<double> crossing;

  auto* simulate = app.add_subcommand("simulate", "sample quadrature datasets per round trip");
  auto* reconstruct = app.add_subcommand("reconstruct", "maximum-likelihood reconstruction");
  reconstruct->add_option("--manifest", manifest, "manifest (default <out>/manifest.tsv)");
  auto* fit = app.add_subcommand("fit", "loss fit, lifetimes and negativity curve");
  fit->add_option("--summary", summary, "summary table (default <out>/summary.tsv)");
  auto* sync = app.add_subcommand("sync", "two-photon synchronization rates");
  sync->add_option("--crossing", crossing, "extra row at this round-trip count");
  auto* report = app.add_subcommand("report", "fit followed by sync at the fitted crossing");
  report->add_option("--summary", summary, "summary table (default <out>/summary.tsv)");
  for (auto* sub : {simulate, reconstruct, fit, sync, report}) {
    add_global_flags(sub, flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  loopmem::RunContext ctx;
  try {
    ctx = make_context(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  auto path_or_default = [](const std::string& p) -> std::optional<std::filesystem::path> {
    if (p.empty()) {
      return std::nullopt;
    }
    return std::filesystem::path(p);
  };

  if (simulate->parsed()) {
    return loopmem::cmd_simulate(ctx);
  }
  if (reconstruct->parsed()) {
    return loopmem::cmd_reconstruct(ctx, path_or_default(manifest));
  }
  if (fit->parsed()) {
    return loopmem::cmd_fit(ctx, path_or_default(summary));
  }
  if (sync->parsed()) {
    return loopmem::cmd_sync(ctx, crossing);
  }
  return loopmem::cmd_report(ctx, path_or_default(summary));
}
