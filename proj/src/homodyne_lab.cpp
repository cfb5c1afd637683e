#include "loopmem/homodyne_lab.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "loopmem/errors.hpp"
#include "loopmem/numeric.hpp"
#include "loopmem/text_io.hpp"

namespace loopmem {

DetectionModel DetectionModel::from_components(double eta_pd, double eta_c, double sigma_eta) {
  DetectionModel det;
  det.eta_pd = eta_pd;
  det.eta_c = eta_c;
  det.eta = eta_pd * eta_c;
  det.sigma_eta = sigma_eta;
  det.validate();
  return det;
}

DetectionModel DetectionModel::from_total(double eta, double sigma_eta, double eta_pd) {
  if (!(eta_pd > 0.0) || eta > eta_pd) {
    throw std::invalid_argument("DetectionModel::from_total: eta must not exceed eta_pd");
  }
  DetectionModel det;
  det.eta_pd = eta_pd;
  det.eta_c = eta / eta_pd;
  det.eta = eta;
  det.sigma_eta = sigma_eta;
  det.validate();
  return det;
}

void DetectionModel::validate() const {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(eta_pd) || !in_unit(eta_c) || !in_unit(eta)) {
    throw std::invalid_argument("DetectionModel: efficiencies must lie in (0, 1]");
  }
  if (std::abs(eta - eta_pd * eta_c) > 1e-9) {
    throw std::invalid_argument("DetectionModel: eta must equal eta_pd * eta_c");
  }
  if (!(sigma_eta >= 0.0)) {
    throw std::invalid_argument("DetectionModel: sigma_eta must be >= 0");
  }
}

DetectionModel DetectionModel::with_eta(double new_eta) const {
  return from_total(new_eta, sigma_eta, std::max(eta_pd, new_eta));
}

FockDiagonalState detected_state(const FockDiagonalState& state, const DetectionModel& det) {
  det.validate();
  return apply_loss(state, det.eta);
}

void QuadratureDataset::validate() const {
  if (samples.empty()) {
    throw std::invalid_argument("QuadratureDataset: no samples");
  }
  metadata.basis.validate();
  metadata.detection.validate();
}

QuadratureSampler::QuadratureSampler(const FockDiagonalState& state) {
  // Three-point Gauss-Legendre per grid interval; exact to degree 5, so the
  // per-interval error is far below the 1e-10 tail budget.
  static constexpr std::array<double, 3> nodes = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr std::array<double, 3> weights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

  const auto pops = state.populations();
  std::vector<double> dens(pops.size());
  auto pdf = [&](double x) {
    quadrature_pdfs(x, dens);
    double acc = 0.0;
    for (std::size_t n = 0; n < pops.size(); ++n) {
      acc += pops[n] * dens[n];
    }
    return acc;
  };

  knots_.resize(kKnots);
  cdf_.resize(kKnots);
  const double h = 2.0 * kRange / static_cast<double>(kKnots - 1);
  for (std::size_t i = 0; i < kKnots; ++i) {
    knots_[i] = -kRange + h * static_cast<double>(i);
  }
  knots_.back() = kRange;
  cdf_[0] = 0.0;
  for (std::size_t i = 1; i < kKnots; ++i) {
    const double mid = 0.5 * (knots_[i - 1] + knots_[i]);
    double piece = 0.0;
    for (std::size_t q = 0; q < 3; ++q) {
      piece += weights[q] * pdf(mid + 0.5 * h * nodes[q]);
    }
    cdf_[i] = cdf_[i - 1] + 0.5 * h * piece;
  }

  // Mass outside the table, integrated directly rather than as 1 - inside.
  tail_mass_ =
      numeric::integrate([&](double x) { return pdf(x) + pdf(-x); }, kRange, kRange + 12.0);
  if (tail_mass_ >= kMaxTailMass) {
    std::ostringstream msg;
    msg << "QuadratureSampler: " << tail_mass_ << " of the probability lies outside [-"
        << kRange << ", " << kRange << "]";
    throw std::domain_error(msg.str());
  }
  const double inside = cdf_.back();
  for (double& c : cdf_) {
    c /= inside;
  }
  cdf_.back() = 1.0;
}

double QuadratureSampler::draw(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.begin()) {
    return knots_.front();
  }
  if (it == cdf_.end()) {
    return knots_.back();
  }
  const auto i = static_cast<std::size_t>(it - cdf_.begin());
  const double c0 = cdf_[i - 1];
  const double c1 = cdf_[i];
  const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
  return knots_[i - 1] + frac * (knots_[i] - knots_[i - 1]);
}

std::vector<double> QuadratureSampler::sample(std::size_t count, std::uint64_t seed) const {
  numeric::RandomStream rng(seed);
  std::vector<double> out(count);
  for (double& x : out) {
    x = draw(rng.uniform());
  }
  return out;
}

double QuadratureSampler::cdf(double x) const {
  if (x <= knots_.front()) {
    return 0.0;
  }
  if (x >= knots_.back()) {
    return 1.0;
  }
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  const auto i = static_cast<std::size_t>(it - knots_.begin());
  const double frac = (x - knots_[i - 1]) / (knots_[i] - knots_[i - 1]);
  return cdf_[i - 1] + frac * (cdf_[i] - cdf_[i - 1]);
}

QuadratureDataset sample_quadratures(const FockDiagonalState& state, const DetectionModel& det,
                                     std::size_t count, std::uint64_t seed, std::string source,
                                     int round_trips) {
  if (count == 0) {
    throw std::invalid_argument("sample_quadratures: count must be > 0");
  }
  const QuadratureSampler sampler(detected_state(state, det));
  QuadratureDataset ds;
  ds.samples = sampler.sample(count, seed);
  ds.metadata.source = std::move(source);
  const auto pops = state.populations();
  ds.metadata.populations.assign(pops.begin(), pops.end());
  ds.metadata.basis = state.basis();
  ds.metadata.detection = det;
  ds.metadata.round_trips = round_trips;
  ds.metadata.seed = seed;
  return ds;
}

void write_dataset(const QuadratureDataset& ds, std::ostream& out) {
  ds.validate();
  const auto& m = ds.metadata;
  out << "# loopmem quadrature dataset\n";
  out << "format_version = " << kDatasetFormatVersion << '\n';
  out << "source = " << m.source << '\n';
  out << "n_max = " << m.basis.n_max << '\n';
  out << "tail_tolerance = " << format_double(m.basis.tail_tolerance) << '\n';
  out << "populations = " << format_doubles(m.populations) << '\n';
  out << "eta_pd = " << format_double(m.detection.eta_pd) << '\n';
  out << "eta_c = " << format_double(m.detection.eta_c) << '\n';
  out << "eta = " << format_double(m.detection.eta) << '\n';
  out << "sigma_eta = " << format_double(m.detection.sigma_eta) << '\n';
  out << "round_trips = " << m.round_trips << '\n';
  out << "seed = " << m.seed << '\n';
  out << "count = " << ds.samples.size() << '\n';
  for (double x : ds.samples) {
    out << format_double(x) << '\n';
  }
}

QuadratureDataset read_dataset(std::istream& in, const std::string& name) {
  std::map<std::string, std::pair<std::string, int>> header;
  QuadratureDataset ds;
  std::string line;
  int line_no = 0;
  bool in_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (!in_data) {
      if (text.empty() || text.front() == '#') {
        continue;
      }
      if (auto kv = split_key_value(text)) {
        if (header.contains(kv->first)) {
          throw ParseError(name, line_no, "duplicate header key '" + kv->first + "'");
        }
        header[kv->first] = {kv->second, line_no};
        continue;
      }
      in_data = true;
    }
    if (text.empty()) {
      continue;
    }
    const auto v = parse_double(text);
    if (!v || !std::isfinite(*v)) {
      throw ParseError(name, line_no, "sample '" + std::string(text) + "' is not a finite number");
    }
    ds.samples.push_back(*v);
  }

  auto take = [&](const std::string& key) -> std::pair<std::string, int> {
    const auto it = header.find(key);
    if (it == header.end()) {
      throw ParseError(name, 0, "missing header key '" + key + "'");
    }
    auto out = it->second;
    header.erase(it);
    return out;
  };
  auto take_double = [&](const std::string& key) {
    const auto [text, at] = take(key);
    const auto v = parse_double(text);
    if (!v) {
      throw ParseError(name, at, "'" + key + "' is not a number");
    }
    return *v;
  };
  auto take_integer = [&](const std::string& key) {
    const auto [text, at] = take(key);
    const auto v = parse_integer(text);
    if (!v) {
      throw ParseError(name, at, "'" + key + "' is not an integer");
    }
    return *v;
  };

  {
    const auto [text, at] = take("format_version");
    const auto version = parse_integer(text);
    if (!version || *version != kDatasetFormatVersion) {
      throw ParseError(name, at,
                       "unsupported format_version '" + text + "' (expected " +
                           std::to_string(kDatasetFormatVersion) + ")");
    }
  }
  auto& m = ds.metadata;
  m.source = take("source").first;
  m.basis.n_max = static_cast<int>(take_integer("n_max"));
  m.basis.tail_tolerance = take_double("tail_tolerance");
  {
    const auto [text, at] = take("populations");
    const auto pops = parse_double_list(text);
    if (!pops) {
      throw ParseError(name, at, "'populations' is not a list of numbers");
    }
    m.populations = *pops;
  }
  m.detection.eta_pd = take_double("eta_pd");
  m.detection.eta_c = take_double("eta_c");
  m.detection.eta = take_double("eta");
  m.detection.sigma_eta = take_double("sigma_eta");
  m.round_trips = static_cast<int>(take_integer("round_trips"));
  {
    const auto [text, at] = take("seed");
    std::uint64_t seed = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), seed);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw ParseError(name, at, "'seed' is not an unsigned integer");
    }
    m.seed = seed;
  }
  const auto count = take_integer("count");
  if (!header.empty()) {
    const auto& [key, value] = *header.begin();
    throw ParseError(name, value.second, "unknown header key '" + key + "'");
  }
  if (ds.samples.empty()) {
    throw ParseError(name, 0, "dataset contains no samples");
  }
  if (count != static_cast<long long>(ds.samples.size())) {
    throw ParseError(name, 0,
                     "header count " + std::to_string(count) + " does not match " +
                         std::to_string(ds.samples.size()) + " samples");
  }
  try {
    ds.validate();
    FockDiagonalState(m.populations, m.basis);
  } catch (const std::invalid_argument& e) {
    throw ParseError(name, 0, e.what());
  }
  return ds;
}

void save_dataset(const QuadratureDataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  write_dataset(ds, out);
  write_file_atomic(path, out.str());
}

QuadratureDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset " + path.string());
  }
  return read_dataset(in, path.string());
}

}  // namespace loopmem
