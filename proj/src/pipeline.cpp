#include "loopmem/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "loopmem/analysis_fit.hpp"
#include "loopmem/homodyne_lab.hpp"
#include "loopmem/numeric.hpp"
#include "loopmem/tomography.hpp"

namespace fs = std::filesystem;

namespace loopmem {

namespace {

std::mutex log_mutex;

void say(const RunContext& ctx, const std::string& msg) {
  if (ctx.quiet || ctx.log == nullptr) {
    return;
  }
  std::lock_guard lock(log_mutex);
  *ctx.log << msg << '\n';
}

void complain(const RunContext& ctx, const std::string& msg) {
  if (ctx.err == nullptr) {
    return;
  }
  std::lock_guard lock(log_mutex);
  *ctx.err << "error: " << msg << '\n';
}

// Runs body(i) for i in [0, count) on up to `jobs` threads. Items are
// independent; results land in caller-owned slots indexed by i.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        body(i);
      }
    });
  }
  for (auto& t : pool) {
    t.join();
  }
}

std::string point_name(int round_trips, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "N%03d%s", round_trips, ext);
  return buf;
}

std::string number_cell(double v) { return format_double(v); }

Table make_table(const RunConfig& config, std::vector<std::string> columns) {
  Table t;
  t.comments.push_back(provenance(config));
  t.columns = std::move(columns);
  return t;
}

struct FitOutcome {
  int status = 0;
  std::optional<double> crossing;
};

FitOutcome run_fit(const RunContext& ctx, const fs::path& summary_path) {
  const auto& cfg = ctx.config;
  const auto out = cfg.output_dir;
  FitOutcome outcome;

  Table summary;
  StorageSeries series;
  try {
    summary = load_table(summary_path);
    series = series_from_summary(summary, cfg.basis);
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    outcome.status = 1;
    return outcome;
  }

  // Lifetimes do not depend on the loss fit, so they are written even when
  // the fit fails.
  const auto& first = series.states.front();
  Table lifetimes = make_table(cfg, {"n", "tau_s", "f0", "excluded_points"});
  for (int n = 1; n <= first.n_max(); ++n) {
    if (first[n] < 0.05) {
      continue;
    }
    try {
      const auto lf = fit_lifetime(series, n, cfg.memory.round_trip_time);
      lifetimes.add_row({std::to_string(n),
                         number_cell(lf.tau.value_or(std::numeric_limits<double>::infinity())),
                         number_cell(lf.f0), std::to_string(lf.excluded_points)});
      if (lf.excluded_points > 0) {
        say(ctx, "fit: lifetime n=" + std::to_string(n) + " left out " +
                     std::to_string(lf.excluded_points) + " empty points");
      }
    } catch (const std::exception& e) {
      complain(ctx, "lifetime n=" + std::to_string(n) + ": " + e.what());
      outcome.status = 1;
    }
  }

  LossFitOptions options;
  options.fix_initial = cfg.fit.fix_initial;
  options.p_max = cfg.fit.p_max;
  if (cfg.fit.weighted) {
    try {
      for (std::size_t row = 0; row < summary.rows.size(); ++row) {
        std::vector<double> s;
        for (int n = 0; n <= cfg.basis.n_max; ++n) {
          s.push_back(summary.number(row, "sigma_" + std::to_string(n)));
        }
        options.sigmas.push_back(std::move(s));
      }
    } catch (const std::exception& e) {
      complain(ctx, std::string("weighted fit needs bootstrap sigmas: ") + e.what());
      outcome.status = 1;
      save_table(lifetimes, out / "lifetime.tsv");
      return outcome;
    }
  }

  std::optional<LossFitResult> fit;
  try {
    fit = fit_loss(series, options);
  } catch (const std::exception& e) {
    complain(ctx, std::string("loss fit: ") + e.what());
    outcome.status = 1;
  }
  save_table(lifetimes, out / "lifetime.tsv");
  if (!fit) {
    return outcome;
  }

  Table loss = make_table(cfg, {"loss_per_trip", "sigma", "residual", "points", "fix_initial"});
  loss.add_row({number_cell(fit->loss_per_trip), number_cell(std::sqrt(fit->covariance)),
                number_cell(fit->residual), std::to_string(series.size()),
                cfg.fit.fix_initial ? "true" : "false"});
  save_table(loss, out / "loss_fit.tsv");
  say(ctx, "fit: loss per trip " + number_cell(fit->loss_per_trip));

  MemoryParams fitted = cfg.memory;
  fitted.loss_per_trip = fit->loss_per_trip;
  const auto curve = negativity_curve(fit->initial_state, fitted, cfg.detection, series.round_trips,
                                      fit->covariance);
  Table neg = make_table(cfg, {"round_trips", "measured", "model", "band_low", "band_high"});
  for (std::size_t i = 0; i < series.size(); ++i) {
    neg.add_row({std::to_string(series.round_trips[i]),
                 number_cell(negativity(series.states[i]).value), number_cell(curve.negativity[i]),
                 number_cell(curve.band_low[i]), number_cell(curve.band_high[i])});
  }
  save_table(neg, out / "negativity.tsv");

  // No crossing: either the start is not negative (0) or nothing is lost (inf).
  Table crossing = make_table(cfg, {"crossing", "uncertainty", "low", "high"});
  if (curve.zero_crossing) {
    crossing.add_row({number_cell(curve.zero_crossing->round_trips),
                      number_cell(curve.zero_crossing->uncertainty),
                      number_cell(*curve.crossing_low), number_cell(*curve.crossing_high)});
    outcome.crossing = curve.zero_crossing->round_trips;
    say(ctx, "fit: negativity lost after " + number_cell(*outcome.crossing) + " round trips");
  } else {
    const double c = negativity(fit->initial_state).value < 0.0
                         ? std::numeric_limits<double>::infinity()
                         : 0.0;
    crossing.add_row({number_cell(c), "0", number_cell(c), number_cell(c)});
  }
  save_table(crossing, out / "crossing.tsv");
  return outcome;
}

}  // namespace

std::string provenance(const RunConfig& config) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.hash()));
  return std::string("loopmem ") + LOOPMEM_VERSION + " config=" + hash +
         " seed=" + std::to_string(config.experiment.seed);
}

int cmd_simulate(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const auto out = cfg.output_dir;
  const auto manifest_path = out / "manifest.tsv";
  try {
    cfg.validate();
    fs::create_directories(out / "datasets");
    // A stale manifest must never outlive a failed rerun.
    fs::remove(manifest_path);
  } catch (const std::exception& e) {
    complain(ctx, "cannot prepare output directory " + out.string() + ": " + e.what());
    return 1;
  }

  const auto initial = cfg.initial_state();
  const auto count = cfg.experiment.samples_per_point();
  const auto& trips = cfg.experiment.trips;
  std::vector<std::uint64_t> seeds(trips.size());
  std::vector<char> ok(trips.size(), 0);
  parallel_for(trips.size(), ctx.jobs, [&](std::size_t i) {
    const int n = trips[i];
    seeds[i] = numeric::derive_seed(cfg.experiment.seed, static_cast<std::uint64_t>(n));
    const auto file = out / "datasets" / point_name(n, ".dat");
    try {
      const auto state = evolve_rounds(initial, cfg.memory, n);
      const auto ds = sample_quadratures(state, cfg.detection, count, seeds[i],
                                         "diag(" + format_doubles(cfg.experiment.initial_state, ',') +
                                             ") after " + std::to_string(n) + " round trips",
                                         n);
      save_dataset(ds, file);
      ok[i] = 1;
      say(ctx, "simulate: " + file.string() + " (" + std::to_string(count) + " samples)");
    } catch (const std::exception& e) {
      complain(ctx, file.string() + ": " + e.what());
    }
  });
  if (std::find(ok.begin(), ok.end(), 0) != ok.end()) {
    complain(ctx, "simulation incomplete, no manifest written");
    return 1;
  }

  Table manifest = make_table(cfg, {"round_trips", "file", "seed", "count"});
  for (std::size_t i = 0; i < trips.size(); ++i) {
    manifest.add_row({std::to_string(trips[i]), "datasets/" + point_name(trips[i], ".dat"),
                      std::to_string(seeds[i]), std::to_string(count)});
  }
  try {
    save_table(manifest, manifest_path);
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    return 1;
  }
  say(ctx, "simulate: manifest " + manifest_path.string());
  return 0;
}

int cmd_reconstruct(const RunContext& ctx, std::optional<fs::path> manifest_path) {
  const auto& cfg = ctx.config;
  const auto out = cfg.output_dir;
  const auto path = manifest_path.value_or(out / "manifest.tsv");
  Table manifest;
  try {
    manifest = load_table(path);
    manifest.column("round_trips");
    manifest.column("file");
    fs::create_directories(out / "reports");
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    return 1;
  }

  const auto edges = uniform_edges(cfg.tomography.half_range, cfg.tomography.bin_width);
  const auto response = build_response(cfg.basis, cfg.detection, edges);
  const auto base = path.parent_path();
  const auto rows = manifest.rows.size();
  std::vector<std::optional<ReconstructionReport>> reports(rows);
  parallel_for(rows, ctx.jobs, [&](std::size_t i) {
    const auto file = base / manifest.cell(i, "file");
    try {
      const auto n = parse_integer(manifest.cell(i, "round_trips"));
      if (!n) {
        throw std::runtime_error("manifest row " + std::to_string(i + 1) +
                                 ": round_trips is not an integer");
      }
      if (!fs::exists(file)) {
        throw std::runtime_error("dataset " + file.string() + " does not exist");
      }
      const auto ds = load_dataset(file);
      auto result = mle_reconstruct(bin_dataset(ds, edges), response, cfg.tomography.options);
      if (cfg.tomography.bootstrap >= 2) {
        result.bootstrap_sigmas =
            bootstrap_errors(ds, response, cfg.tomography.options, cfg.tomography.bootstrap,
                             numeric::derive_seed(ds.metadata.seed, 1));
      }
      ReconstructionReport report{static_cast<int>(*n), manifest.cell(i, "file"),
                                  std::move(result)};
      std::ostringstream text;
      text << "# " << provenance(cfg) << '\n';
      write_report(report, text);
      write_file_atomic(out / "reports" / point_name(report.round_trips, ".txt"), text.str());
      if (!report.result.converged) {
        complain(ctx, file.string() + ": reconstruction did not converge in " +
                          std::to_string(report.result.iterations) + " iterations");
      }
      say(ctx, "reconstruct: " + file.string());
      reports[i] = std::move(report);
    } catch (const std::exception& e) {
      complain(ctx, file.string() + ": " + e.what());
    }
  });

  int status = 0;
  const bool with_sigmas = cfg.tomography.bootstrap >= 2;
  std::vector<std::string> columns = {"round_trips", "converged", "iterations", "loglik"};
  for (int n = 0; n <= cfg.basis.n_max; ++n) {
    columns.push_back("rho_" + std::to_string(n));
  }
  if (with_sigmas) {
    for (int n = 0; n <= cfg.basis.n_max; ++n) {
      columns.push_back("sigma_" + std::to_string(n));
    }
  }
  Table summary = make_table(cfg, columns);
  for (const auto& report : reports) {
    if (!report) {
      status = 1;
      continue;
    }
    const auto& r = report->result;
    if (!r.converged) {
      status = 1;
    }
    std::vector<std::string> row = {std::to_string(report->round_trips),
                                    r.converged ? "true" : "false", std::to_string(r.iterations),
                                    number_cell(r.loglik())};
    for (double p : r.state.populations()) {
      row.push_back(number_cell(p));
    }
    if (with_sigmas) {
      for (double s : r.bootstrap_sigmas) {
        row.push_back(number_cell(s));
      }
    }
    summary.add_row(std::move(row));
  }
  try {
    save_table(summary, out / "summary.tsv");
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    return 1;
  }
  say(ctx, "reconstruct: summary " + (out / "summary.tsv").string());
  return status;
}

int cmd_fit(const RunContext& ctx, std::optional<fs::path> summary) {
  try {
    fs::create_directories(ctx.config.output_dir);
    return run_fit(ctx, summary.value_or(ctx.config.output_dir / "summary.tsv")).status;
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    return 1;
  }
}

int cmd_sync(const RunContext& ctx, std::optional<double> crossing) {
  const auto& cfg = ctx.config;
  std::vector<int> trips = cfg.sync.trips;
  if (crossing && std::isfinite(*crossing) && *crossing >= 0.0) {
    trips.push_back(static_cast<int>(std::floor(*crossing)));
  }
  std::sort(trips.begin(), trips.end());
  trips.erase(std::unique(trips.begin(), trips.end()), trips.end());

  SourceParams improved = cfg.source;
  improved.heralding_probability *= cfg.sync.improvement_factor;
  Table table = make_table(cfg, {"scenario", "heralding_probability", "max_trips", "probability",
                                 "rate_hz", "enhancement"});
  const std::string improved_name = "factor_" + number_cell(cfg.sync.improvement_factor);
  try {
    for (const auto& [name, source] :
         {std::pair{std::string("baseline"), cfg.source}, std::pair{improved_name, improved}}) {
      for (int n : trips) {
        const auto s = sync_rate(source, n);
        table.add_row({name, number_cell(source.heralding_probability), std::to_string(n),
                       number_cell(s.probability), number_cell(s.rate),
                       number_cell(s.enhancement)});
      }
    }
    fs::create_directories(cfg.output_dir);
    save_table(table, cfg.output_dir / "sync.tsv");
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    return 1;
  }
  say(ctx, "sync: " + (cfg.output_dir / "sync.tsv").string());
  return 0;
}

int cmd_report(const RunContext& ctx, std::optional<fs::path> summary) {
  FitOutcome fit;
  try {
    fs::create_directories(ctx.config.output_dir);
    fit = run_fit(ctx, summary.value_or(ctx.config.output_dir / "summary.tsv"));
  } catch (const std::exception& e) {
    complain(ctx, e.what());
    fit.status = 1;
  }
  const int sync = cmd_sync(ctx, fit.crossing);
  return fit.status != 0 || sync != 0 ? 1 : 0;
}

StorageSeries series_from_summary(const Table& summary, const FockBasisConfig& basis) {
  StorageSeries series;
  for (std::size_t row = 0; row < summary.rows.size(); ++row) {
    const auto n = parse_integer(summary.cell(row, "round_trips"));
    if (!n) {
      throw std::runtime_error("summary row " + std::to_string(row + 1) +
                               ": round_trips is not an integer");
    }
    std::vector<double> pops;
    for (int k = 0; k <= basis.n_max; ++k) {
      pops.push_back(summary.number(row, "rho_" + std::to_string(k)));
    }
    series.round_trips.push_back(static_cast<int>(*n));
    series.states.emplace_back(std::move(pops), basis);
  }
  series.validate();
  if (series.size() < 3) {
    throw std::invalid_argument("summary has fewer than three round-trip points");
  }
  return series;
}

}  // namespace loopmem
