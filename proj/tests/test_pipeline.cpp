#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "loopmem/config.hpp"
#include "loopmem/analysis_fit.hpp"
#include "loopmem/errors.hpp"
#include "loopmem/pipeline.hpp"
#include "loopmem/text_io.hpp"

using namespace loopmem;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("loopmem_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunContext context(RunConfig cfg, std::ostream& err) {
  RunContext ctx;
  ctx.config = std::move(cfg);
  ctx.quiet = true;
  ctx.err = &err;
  return ctx;
}

RunConfig small_run(const fs::path& dir) {
  auto cfg = parse("experiment.samples = 2000\nexperiment.trips = 0, 20, 40, 60\n");
  cfg.output_dir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("config defaults describe the single-photon run") {
  const auto cfg = parse("");
  CHECK(cfg.basis.n_max == 15);
  CHECK(cfg.basis.tail_tolerance == 1e-6);
  CHECK(cfg.memory.loss_per_trip == 0.01);
  CHECK(cfg.memory.round_trip_time == doctest::Approx(13.158e-9).epsilon(1e-4));
  CHECK(cfg.detection.eta == 0.77);
  CHECK(cfg.detection.sigma_eta == 0.03);
  CHECK(cfg.source.heralding_probability == doctest::Approx(0.00263).epsilon(1e-2));
  CHECK(cfg.experiment.initial_state == std::vector<double>{0.09, 0.91});
  CHECK(cfg.experiment.samples_per_point() == 50000);
  CHECK(cfg.tomography.options.max_iterations == 5000);
  CHECK(cfg.fit.fix_initial);

  const auto two = parse("experiment.initial_state = 0.06 0.09 0.85\n");
  CHECK(two.experiment.samples_per_point() == 10000);
}

TEST_CASE("config parsing") {
  const auto cfg = parse(R"(# comment
basis.n_max = 12
memory.loss_per_trip = 0.013
detection.eta_pd = 0.94
detection.eta_c = 0.81
experiment.trips = 0,10,20
experiment.seed = 7
tomography.correction = inverse_map
fit.fix_initial = false
sync.improvement_factor = 2
output.dir = out dir
)");
  CHECK(cfg.basis.n_max == 12);
  CHECK(cfg.memory.loss_per_trip == 0.013);
  CHECK(cfg.detection.eta == doctest::Approx(0.7614));
  CHECK(cfg.experiment.trips == std::vector<int>{0, 10, 20});
  CHECK(cfg.experiment.seed == 7);
  CHECK(cfg.tomography.options.correction == EfficiencyCorrection::inverse_map);
  CHECK_FALSE(cfg.fit.fix_initial);
  CHECK(cfg.output_dir == fs::path("out dir"));

  const auto total = parse("detection.eta = 0.8\n");
  CHECK(total.detection.eta == 0.8);
  CHECK(total.detection.eta_pd * total.detection.eta_c == doctest::Approx(0.8));
}

TEST_CASE("config errors carry the line") {
  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("basis.n_max = 15\nbasis.colour = red\n") == 2);
  CHECK(line_of("memory.loss_per_trip = lots\n") == 1);
  CHECK(line_of("\n\nbasis.n_max = 15\nbasis.n_max = 16\n") == 4);
  CHECK(line_of("just words\n") == 1);
  CHECK(line_of("fit.weighted = maybe\n") == 1);
  CHECK(line_of("experiment.trips = 0, 1.5\n") == 1);
  // Cross-key invariants are checked after the whole file is read.
  CHECK_THROWS_AS(parse("memory.loss_per_trip = 1.5\n"), ParseError);
  CHECK_THROWS_AS(parse("experiment.trips = 10, 0\n"), ParseError);
  CHECK_THROWS_AS(parse("experiment.initial_state = 0.5 0.6\n"), ParseError);
  CHECK_THROWS_AS(parse("detection.eta_c = 0.81\ndetection.eta = 0.9\n"), ParseError);
  CHECK_THROWS_AS(parse("fit.weighted = true\n"), ParseError);
  CHECK_THROWS_AS(parse("tomography.bootstrap = 1\n"), ParseError);
  CHECK_THROWS_AS(load_config("/nonexistent/loopmem.cfg"), std::runtime_error);
}

TEST_CASE("canonical config round trip") {
  const auto cfg = parse("memory.label = loop A\nexperiment.trips = 0 5 9\nexperiment.seed = 99\n"
                         "detection.eta = 0.74\ntomography.bootstrap = 4\nfit.weighted = true\n");
  const auto again = parse(cfg.canonical());
  CHECK(again.canonical() == cfg.canonical());
  CHECK(again.hash() == cfg.hash());
  CHECK(parse("experiment.seed = 100\n").hash() != parse("experiment.seed = 101\n").hash());
}

TEST_CASE("config path from the environment") {
  ::setenv("LOOPMEM_CONFIG", "/tmp/some.cfg", 1);
  CHECK(config_path_from_env() == fs::path("/tmp/some.cfg"));
  ::setenv("LOOPMEM_CONFIG", "", 1);
  CHECK_FALSE(config_path_from_env());
  ::unsetenv("LOOPMEM_CONFIG");
  CHECK_FALSE(config_path_from_env());
}

TEST_CASE("tables round trip") {
  Table t;
  t.comments = {"loopmem test"};
  t.columns = {"a", "b"};
  t.add_row({"1", format_double(0.1)});
  t.add_row({"2", format_double(-1e-300)});
  std::ostringstream out;
  write_table(t, out);
  std::istringstream in(out.str());
  const auto back = read_table(in);
  CHECK(back.comments == t.comments);
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK(back.number(0, "b") == 0.1);
  CHECK_THROWS_AS(t.add_row({"only one"}), std::invalid_argument);
  std::istringstream ragged("a\tb\n1\n");
  CHECK_THROWS_AS(read_table(ragged, "ragged.tsv"), ParseError);
}

TEST_CASE("sync report") {
  const auto dir = scratch("sync");
  std::ostringstream err;
  auto cfg = parse("");
  cfg.output_dir = dir;
  REQUIRE(cmd_sync(context(cfg, err), 58.4) == 0);
  const auto t = load_table(dir / "sync.tsv");
  bool saw_baseline = false, saw_factor = false, saw_crossing = false;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto n = t.number(r, "max_trips");
    if (n == 0) {
      CHECK(t.number(r, "probability") == 0.0);
    }
    if (n == 58) {
      saw_crossing = true;
    }
    if (n == 57 && t.cell(r, "scenario") == "baseline") {
      saw_baseline = true;
      CHECK(t.number(r, "probability") == doctest::Approx(0.14).epsilon(0.08));
      CHECK(std::abs(t.number(r, "rate_hz") - 28e3) < 2e3);
      CHECK(std::abs(t.number(r, "enhancement") - 53.0) < 4.0);
    }
    if (n == 57 && t.cell(r, "scenario") == "factor_3") {
      saw_factor = true;
      CHECK(t.number(r, "probability") == doctest::Approx(0.36).epsilon(0.06));
      CHECK(std::abs(t.number(r, "rate_hz") - 200e3) < 30e3);
    }
  }
  CHECK(saw_baseline);
  CHECK(saw_factor);
  CHECK(saw_crossing);
  CHECK(t.comments.at(0).find("config=") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("simulate writes datasets and a manifest") {
  const auto dir = scratch("simulate");
  std::ostringstream err;
  auto cfg = small_run(dir);
  cfg.experiment.trips = {0};
  cfg.experiment.samples = 10;
  REQUIRE(cmd_simulate(context(cfg, err)) == 0);
  const auto manifest = load_table(dir / "manifest.tsv");
  REQUIRE(manifest.rows.size() == 1);
  const auto ds = load_dataset(dir / manifest.cell(0, "file"));
  CHECK(ds.samples.size() == 10);
  CHECK(std::to_string(ds.metadata.seed) == manifest.cell(0, "seed"));
  fs::remove_all(dir);
}

TEST_CASE("simulate is byte-for-byte deterministic") {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  std::ostringstream err;
  auto cfg = small_run(a);
  REQUIRE(cmd_simulate(context(cfg, err)) == 0);
  const auto first = read_file(a / "datasets" / "N040.dat");
  auto ctx = context(cfg, err);
  ctx.jobs = 3;
  REQUIRE(cmd_simulate(ctx) == 0);
  CHECK(read_file(a / "datasets" / "N040.dat") == first);

  cfg.output_dir = b;
  cfg.experiment.seed += 1;
  REQUIRE(cmd_simulate(context(cfg, err)) == 0);
  CHECK(read_file(b / "datasets" / "N040.dat") != first);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("unwritable output leaves no manifest") {
  const auto dir = scratch("blocked");
  fs::create_directories(dir);
  std::ofstream(dir / "datasets") << "not a directory";
  std::ostringstream err;
  auto cfg = small_run(dir);
  CHECK(cmd_simulate(context(cfg, err)) == 1);
  CHECK_FALSE(fs::exists(dir / "manifest.tsv"));
  CHECK(err.str().find("error:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("full pipeline") {
  const auto dir = scratch("full");
  std::ostringstream err;
  auto cfg = small_run(dir);
  cfg.experiment.samples = 20000;
  cfg.experiment.trips = {0, 10, 20, 30, 40, 50, 60};
  auto ctx = context(cfg, err);
  REQUIRE(cmd_simulate(ctx) == 0);
  REQUIRE(cmd_reconstruct(ctx) == 0);
  REQUIRE(cmd_report(ctx) == 0);
  CHECK(err.str().empty());

  const auto summary = load_table(dir / "summary.tsv");
  CHECK(summary.rows.size() == 7);
  const auto series = series_from_summary(summary, cfg.basis);
  CHECK(std::abs(series.states[0][1] - 0.91) < 0.03);
  const auto report = [&] {
    std::ifstream in(dir / "reports" / "N030.txt");
    return read_report(in, "N030.txt");
  }();
  CHECK(report.round_trips == 30);

  const auto loss = load_table(dir / "loss_fit.tsv");
  CHECK(std::abs(loss.number(0, "loss_per_trip") - 0.01) < 0.002);
  const auto crossing = load_table(dir / "crossing.tsv");
  CHECK(crossing.number(0, "low") <= crossing.number(0, "crossing"));
  CHECK(crossing.number(0, "crossing") <= crossing.number(0, "high"));
  const auto neg = load_table(dir / "negativity.tsv");
  CHECK(neg.rows.size() == 7);
  for (std::size_t r = 0; r < neg.rows.size(); ++r) {
    CHECK(neg.number(r, "band_low") <= neg.number(r, "model"));
    CHECK(neg.number(r, "model") <= neg.number(r, "band_high"));
  }
  const auto life = load_table(dir / "lifetime.tsv");
  CHECK(life.number(0, "n") == 1);
  CHECK(life.number(0, "tau_s") > 0.0);
  CHECK(fs::exists(dir / "sync.tsv"));

  // Rerunning every stage reproduces every table exactly.
  std::map<std::string, std::string> before;
  for (const auto* name : {"summary.tsv", "loss_fit.tsv", "negativity.tsv", "crossing.tsv",
                           "lifetime.tsv", "sync.tsv", "manifest.tsv"}) {
    before[name] = read_file(dir / name);
  }
  REQUIRE(cmd_simulate(ctx) == 0);
  REQUIRE(cmd_reconstruct(ctx) == 0);
  REQUIRE(cmd_report(ctx) == 0);
  for (const auto& [name, text] : before) {
    CAPTURE(name);
    CHECK(read_file(dir / name) == text);
  }
  fs::remove_all(dir);
}

TEST_CASE("reconstruct keeps going past a bad dataset") {
  const auto dir = scratch("corrupt");
  std::ostringstream err;
  auto cfg = small_run(dir);
  auto ctx = context(cfg, err);
  REQUIRE(cmd_simulate(ctx) == 0);
  {
    std::ofstream bad(dir / "datasets" / "N020.dat", std::ios::app);
    bad << "garbage\n";
  }
  fs::remove(dir / "datasets" / "N040.dat");
  CHECK(cmd_reconstruct(ctx) == 1);
  CHECK(err.str().find("N020.dat") != std::string::npos);
  CHECK(err.str().find("N040.dat") != std::string::npos);
  const auto summary = load_table(dir / "summary.tsv");
  CHECK(summary.rows.size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("vacuum pipeline") {
  const auto dir = scratch("vacuum");
  std::ostringstream err;
  auto cfg = small_run(dir);
  cfg.experiment.initial_state = {1.0};
  cfg.experiment.samples = 10000;
  auto ctx = context(cfg, err);
  REQUIRE(cmd_simulate(ctx) == 0);
  REQUIRE(cmd_reconstruct(ctx) == 0);
  const auto summary = load_table(dir / "summary.tsv");
  for (std::size_t r = 0; r < summary.rows.size(); ++r) {
    CHECK(summary.number(r, "rho_0") > 0.97);
  }
  // Nothing to fit: the loss does not change an exact vacuum series.
  Table exact = summary;
  for (auto& row : exact.rows) {
    for (int n = 0; n <= 15; ++n) {
      row[exact.column("rho_" + std::to_string(n))] = n == 0 ? "1" : "0";
    }
  }
  save_table(exact, dir / "exact.tsv");
  CHECK(cmd_fit(ctx, dir / "exact.tsv") == 1);
  CHECK(err.str().find("loss unidentifiable") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("lossless pipeline reports an infinite lifetime") {
  const auto dir = scratch("lossless");
  std::ostringstream err;
  auto cfg = small_run(dir);
  cfg.memory.loss_per_trip = 0.0;
  cfg.experiment.initial_state = {0.0, 1.0};
  auto ctx = context(cfg, err);
  REQUIRE(cmd_simulate(ctx) == 0);
  REQUIRE(cmd_reconstruct(ctx) == 0);
  // Hand the fit a noiseless lossless series: flat populations.
  Table summary = load_table(dir / "summary.tsv");
  for (auto& row : summary.rows) {
    for (int n = 0; n <= 15; ++n) {
      row[summary.column("rho_" + std::to_string(n))] = n == 1 ? "1" : "0";
    }
  }
  save_table(summary, dir / "flat.tsv");
  REQUIRE(cmd_fit(ctx, dir / "flat.tsv") == 0);
  const auto life = load_table(dir / "lifetime.tsv");
  CHECK(std::isinf(life.number(0, "tau_s")));
  const auto loss = load_table(dir / "loss_fit.tsv");
  CHECK(loss.number(0, "loss_per_trip") < 1e-9);
  const auto crossing = load_table(dir / "crossing.tsv");
  CHECK(std::isinf(crossing.number(0, "crossing")));
  fs::remove_all(dir);
}

TEST_CASE("two-photon pipeline crossing matches the direct analysis") {
  const auto dir = scratch("two_photon");
  std::ostringstream err;
  auto cfg = parse("experiment.initial_state = 0.06 0.09 0.85\nmemory.loss_per_trip = 0.013\n"
                   "experiment.trips = 0, 10, 20, 30, 40, 50, 60\n");
  cfg.output_dir = dir;
  CHECK(cfg.experiment.samples_per_point() == 10000);
  auto ctx = context(cfg, err);
  REQUIRE(cmd_simulate(ctx) == 0);
  REQUIRE(cmd_reconstruct(ctx) == 0);
  REQUIRE(cmd_fit(ctx) == 0);

  const auto series = series_from_summary(load_table(dir / "summary.tsv"), cfg.basis);
  MemoryParams fitted = cfg.memory;
  fitted.loss_per_trip = load_table(dir / "loss_fit.tsv").number(0, "loss_per_trip");
  CHECK(std::abs(fitted.loss_per_trip - 0.013) < 0.002);
  const auto direct = negativity_zero_crossing(series.states[0], fitted);
  REQUIRE(direct);
  const auto crossing = load_table(dir / "crossing.tsv");
  CHECK(std::abs(crossing.number(0, "crossing") - *direct) < 0.5);
  // The reconstructed start sits in the declared two-photon family, whose
  // crossing stays below 34 round trips for every admixture up to 0.10.
  CHECK(crossing.number(0, "crossing") > 20.0);
  CHECK(crossing.number(0, "crossing") < 40.0);
  fs::remove_all(dir);
}
