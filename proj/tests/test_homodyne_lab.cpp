#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "loopmem/errors.hpp"
#include "loopmem/homodyne_lab.hpp"

using namespace loopmem;

namespace {

// CDF of a Fock-diagonal mixture: closed forms for n = 0 and 1, cumulative
// Simpson integration of the density for the rest.
class ReferenceCdf {
 public:
  explicit ReferenceCdf(const FockDiagonalState& s) : state_(s) {
    for (int n = 2; n <= s.n_max(); ++n) {
      if (s[n] > 0.0) {
        has_higher_ = true;
      }
    }
    if (!has_higher_) {
      return;
    }
    const int cells = static_cast<int>((hi_ - lo_) / h_);
    table_.assign(static_cast<std::size_t>(cells) + 1, 0.0);
    auto higher = [&](double x) {
      double acc = 0.0;
      for (int n = 2; n <= s.n_max(); ++n) {
        acc += s[n] * quadrature_pdf(n, x);
      }
      return acc;
    };
    for (int i = 1; i <= cells; ++i) {
      const double a = lo_ + (i - 1) * h_;
      const double b = a + h_;
      table_[static_cast<std::size_t>(i)] =
          table_[static_cast<std::size_t>(i - 1)] +
          h_ / 6.0 * (higher(a) + 4.0 * higher(0.5 * (a + b)) + higher(b));
    }
  }

  double operator()(double x) const {
    const double gauss = 0.5 * (1.0 + std::erf(x));
    const double single = gauss - x * std::exp(-x * x) / std::sqrt(std::numbers::pi);
    double out = state_[0] * gauss + state_[1] * single;
    if (has_higher_) {
      if (x >= hi_) {
        out += table_.back();
      } else if (x > lo_) {
        const double pos = (x - lo_) / h_;
        const auto i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        out += table_[i] + frac * (table_[i + 1] - table_[i]);
      }
    }
    return out;
  }

 private:
  FockDiagonalState state_;
  bool has_higher_ = false;
  double lo_ = -10.0, hi_ = 10.0, h_ = 5e-4;
  std::vector<double> table_;
};

double ks_statistic(std::vector<double> xs, const ReferenceCdf& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

double variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) {
    mean += x;
  }
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) {
    acc += (x - mean) * (x - mean);
  }
  return acc / static_cast<double>(xs.size() - 1);
}

QuadratureDataset small_dataset() {
  auto ds = sample_quadratures(FockDiagonalState({0.09, 0.91}), DetectionModel{}, 3, 42,
                               "diag(0.09,0.91)", 20);
  return ds;
}

}  // namespace

TEST_CASE("detection model") {
  const DetectionModel det;
  CHECK(det.eta == 0.77);
  CHECK(det.eta_pd == 0.94);
  CHECK(det.eta_pd * det.eta_c == doctest::Approx(0.77).epsilon(1e-12));
  CHECK_NOTHROW(det.validate());
  const auto parts = DetectionModel::from_components(0.94, 0.81, 0.03);
  CHECK(parts.eta == doctest::Approx(0.7614));
  auto broken = det;
  broken.eta = 0.8;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  CHECK_THROWS_AS(DetectionModel::from_components(0.0, 0.8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(DetectionModel::from_components(0.9, 1.2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(DetectionModel::from_components(0.9, 0.8, -0.1), std::invalid_argument);
  CHECK(det.with_eta(0.74).eta == 0.74);
  CHECK(det.with_eta(0.96).eta == 0.96);
  CHECK_NOTHROW(det.with_eta(0.96).validate());
}

TEST_CASE("detected state") {
  const DetectionModel det;
  const auto one = detected_state(FockDiagonalState::fock(1), det);
  CHECK(one[0] == doctest::Approx(0.23));
  CHECK(one[1] == doctest::Approx(0.77));
  CHECK(detected_state(FockDiagonalState::vacuum(), det) == FockDiagonalState::vacuum());
  const auto two = detected_state(FockDiagonalState::fock(2), det);
  CHECK(two[0] == doctest::Approx(0.0529).epsilon(1e-4));
  CHECK(two[1] == doctest::Approx(0.3542).epsilon(1e-4));
  CHECK(two[2] == doctest::Approx(0.5929).epsilon(1e-4));
}

TEST_CASE("sampler table") {
  const QuadratureSampler sampler(FockDiagonalState::fock(14));
  CHECK(sampler.tail_mass() < QuadratureSampler::kMaxTailMass);
  const ReferenceCdf ref(FockDiagonalState::fock(14));
  for (double x : {-5.0, -2.0, 0.0, 0.5, 3.3}) {
    CHECK(sampler.cdf(x) == doctest::Approx(ref(x)).epsilon(1e-7).scale(1.0));
  }
  CHECK(sampler.draw(0.0) == -QuadratureSampler::kRange);
  CHECK(sampler.draw(1.0) == QuadratureSampler::kRange);
  double previous = -1e9;
  for (int i = 0; i <= 1000; ++i) {
    const double x = sampler.draw(i / 1000.0);
    CHECK(x >= previous);
    previous = x;
  }
}

TEST_CASE("sample variances") {
  const auto ideal = DetectionModel::ideal();
  const auto vac = sample_quadratures(FockDiagonalState::vacuum(), ideal, 1'000'000, 1);
  CHECK(std::abs(variance(vac.samples) - 0.5) < 0.002);
  const auto one = sample_quadratures(FockDiagonalState::fock(1), ideal, 1'000'000, 2);
  CHECK(std::abs(variance(one.samples) - 1.5) < 0.005);
  const auto lossy = sample_quadratures(FockDiagonalState::fock(1), DetectionModel{}, 1'000'000, 3);
  CHECK(std::abs(variance(lossy.samples) - 1.27) < 0.005);
}

TEST_CASE("moments match the density") {
  const FockDiagonalState s({0.06, 0.09, 0.85});
  const DetectionModel det;
  const auto detected = detected_state(s, det);
  const auto ds = sample_quadratures(s, det, 1'000'000, 77);
  const double n = static_cast<double>(ds.samples.size());
  for (int k = 1; k <= 6; ++k) {
    // Reference moments by Simpson integration of the detected density.
    auto moment = [&](int order) {
      const int cells = 20000;
      const double a = -12.0, h = 24.0 / cells;
      double acc = 0.0;
      for (int i = 0; i <= cells; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == cells) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * std::pow(x, order) * mixture_pdf(detected, x);
      }
      return acc * h / 3.0;
    };
    const double expected = moment(k);
    const double spread = std::sqrt((moment(2 * k) - expected * expected) / n);
    double sample = 0.0;
    for (double x : ds.samples) {
      sample += std::pow(x, k);
    }
    sample /= n;
    CAPTURE(k);
    CHECK(std::abs(sample - expected) < 5.0 * spread);
    if (k % 2 == 1) {
      CHECK(std::abs(expected) < 1e-12);
    }
  }
}

TEST_CASE("kolmogorov-smirnov across seeds") {
  const double critical = 1.62762 / std::sqrt(1e5);  // 1% level
  for (const auto& state : {FockDiagonalState({0.09, 0.91}), FockDiagonalState({0.06, 0.09, 0.85}),
                            FockDiagonalState({0.3, 0.0, 0.2, 0.0, 0.1, 0.0, 0.0, 0.4})}) {
    const QuadratureSampler sampler(state);
    const ReferenceCdf ref(state);
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      if (ks_statistic(sampler.sample(100'000, seed), ref) > critical) {
        ++failures;
      }
    }
    CAPTURE(failures);
    CHECK(failures <= 3);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const FockDiagonalState s({0.09, 0.91});
  const auto a = sample_quadratures(s, DetectionModel{}, 1000, 9);
  const auto b = sample_quadratures(s, DetectionModel{}, 1000, 9);
  const auto c = sample_quadratures(s, DetectionModel{}, 1000, 10);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.metadata.seed == 9);
  CHECK_THROWS_AS(sample_quadratures(s, DetectionModel{}, 0, 1), std::invalid_argument);
}

TEST_CASE("dataset round trip") {
  const auto ds = small_dataset();
  const auto path = std::filesystem::temp_directory_path() / "loopmem_roundtrip.dat";
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  std::filesystem::remove(path);
  REQUIRE(back.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::memcmp(&back.samples[i], &ds.samples[i], sizeof(double)) == 0);
  }
  CHECK(back.metadata.source == ds.metadata.source);
  CHECK(back.metadata.populations == ds.metadata.populations);
  CHECK(back.metadata.basis == ds.metadata.basis);
  CHECK(back.metadata.detection.eta == ds.metadata.detection.eta);
  CHECK(back.metadata.detection.eta_c == ds.metadata.detection.eta_c);
  CHECK(back.metadata.detection.sigma_eta == ds.metadata.detection.sigma_eta);
  CHECK(back.metadata.round_trips == 20);
  CHECK(back.metadata.seed == 42);
}

TEST_CASE("dataset parse errors") {
  std::ostringstream text;
  write_dataset(small_dataset(), text);
  const std::string good = text.str();

  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return read_dataset(in, "mem.dat");
  };
  CHECK_NOTHROW(parse(good));

  SUBCASE("non-numeric sample names its line") {
    auto bad = good;
    const auto last = bad.rfind('\n', bad.size() - 2);
    bad = bad.substr(0, last + 1) + "abc\n";
    int lines = static_cast<int>(std::count(bad.begin(), bad.end(), '\n'));
    try {
      parse(bad);
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.line() == lines);
      CHECK(e.file() == "mem.dat");
      CHECK(std::string(e.what()).find("abc") != std::string::npos);
    }
  }
  SUBCASE("no samples") {
    const auto header_end = good.find("count = 3\n") + 10;
    auto bad = good.substr(0, header_end);
    bad.replace(bad.find("count = 3"), 9, "count = 0");
    CHECK_THROWS_AS(parse(bad), ParseError);
  }
  SUBCASE("version mismatch") {
    auto bad = good;
    bad.replace(bad.find("format_version = 1"), 18, "format_version = 2");
    CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("format_version"), ParseError);
  }
  SUBCASE("unknown and duplicate keys") {
    auto unknown = good;
    unknown.insert(unknown.find("count"), "colour = red\n");
    CHECK_THROWS_WITH_AS(parse(unknown), doctest::Contains("unknown"), ParseError);
    auto dup = good;
    dup.insert(dup.find("count"), "seed = 1\n");
    CHECK_THROWS_WITH_AS(parse(dup), doctest::Contains("duplicate"), ParseError);
  }
  SUBCASE("count mismatch") {
    auto bad = good;
    bad.replace(bad.find("count = 3"), 9, "count = 4");
    CHECK_THROWS_AS(parse(bad), ParseError);
  }
  SUBCASE("invalid state") {
    auto bad = good;
    const auto at = bad.find("populations = ");
    const auto end = bad.find('\n', at);
    bad.replace(at, end - at, "populations = 0.5 0.6");
    CHECK_THROWS_AS(parse(bad), ParseError);
  }
  CHECK_THROWS_AS(load_dataset("/nonexistent/loopmem.dat"), std::runtime_error);
}
