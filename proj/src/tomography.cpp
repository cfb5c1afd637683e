#include "loopmem/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "loopmem/errors.hpp"
#include "loopmem/numeric.hpp"
#include "loopmem/text_io.hpp"

namespace loopmem {

std::uint64_t BinnedHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), underflow + overflow);
}

std::vector<double> BinnedHistogram::cell_frequencies() const {
  std::vector<double> f(counts.begin(), counts.end());
  f.push_back(static_cast<double>(underflow));
  f.push_back(static_cast<double>(overflow));
  return f;
}

std::vector<double> uniform_edges(double half_range, double width) {
  if (!(half_range > 0.0 && width > 0.0)) {
    throw std::invalid_argument("uniform_edges: range and width must be positive");
  }
  const auto bins = static_cast<int>(std::llround(2.0 * half_range / width));
  if (bins < 1) {
    throw std::invalid_argument("uniform_edges: width exceeds the range");
  }
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) {
    edges[static_cast<std::size_t>(i)] = -half_range + 2.0 * half_range * i / bins;
  }
  return edges;
}

namespace {

void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) {
    throw std::invalid_argument("histogram edges need at least two entries");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw std::invalid_argument("histogram edges must be strictly increasing");
    }
  }
}

}  // namespace

BinnedHistogram bin_dataset(std::span<const double> samples, const std::vector<double>& edges) {
  check_edges(edges);
  BinnedHistogram h;
  h.edges = edges;
  h.counts.assign(edges.size() - 1, 0);
  for (double x : samples) {
    if (x < edges.front()) {
      ++h.underflow;
    } else if (x >= edges.back()) {
      ++h.overflow;
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), x);
      ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

BinnedHistogram bin_dataset(const QuadratureDataset& ds, const std::vector<double>& edges) {
  return bin_dataset(std::span<const double>(ds.samples), edges);
}

std::vector<double> ResponseMatrix::predict(std::span<const double> q) const {
  std::vector<double> p(cells.size(), 0.0);
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const auto& row = cells[j];
    double acc = 0.0;
    for (std::size_t n = 0; n < q.size(); ++n) {
      acc += row[n] * q[n];
    }
    p[j] = acc;
  }
  return p;
}

ResponseMatrix build_response(const FockBasisConfig& basis, const DetectionModel& det,
                              const std::vector<double>& edges) {
  basis.validate();
  det.validate();
  check_edges(edges);
  const int dim = basis.dimension();
  const std::size_t bins = edges.size() - 1;
  // Beyond this distance every |psi_k|^2 with k <= n_max is below 1e-30.
  const double reach = std::sqrt(2.0 * basis.n_max + 1.0) + 12.0;

  // ideal[j][k]: integral of |psi_k|^2 over cell j.
  std::vector<std::vector<double>> ideal(bins + 2, std::vector<double>(dim, 0.0));
  for (int k = 0; k < dim; ++k) {
    auto pdf = [k](double x) { return quadrature_pdf(k, x); };
    for (std::size_t j = 0; j < bins; ++j) {
      ideal[j][k] = numeric::integrate(pdf, edges[j], edges[j + 1], 1e-10);
    }
    const double lo = std::min(edges.front(), -reach);
    const double hi = std::max(edges.back(), reach);
    ideal[bins][k] = numeric::integrate(pdf, lo - reach, edges.front(), 1e-10);
    ideal[bins + 1][k] = numeric::integrate(pdf, edges.back(), hi + reach, 1e-10);
  }

  ResponseMatrix m;
  m.edges = edges;
  m.basis = basis;
  m.eta = det.eta;
  m.cells.assign(bins + 2, std::vector<double>(dim, 0.0));
  // Binomial survival weights C(n,k) eta^k (1-eta)^(n-k).
  for (int n = 0; n < dim; ++n) {
    for (int k = 0; k <= n; ++k) {
      const double w = binomial(n, k) * std::pow(det.eta, k) * std::pow(1.0 - det.eta, n - k);
      if (w == 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < bins + 2; ++j) {
        m.cells[j][n] += w * ideal[j][k];
      }
    }
  }
  return m;
}

double log_likelihood(std::span<const double> frequencies, const ResponseMatrix& response,
                      std::span<const double> q) {
  const auto p = response.predict(q);
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (frequencies[j] > 0.0) {
      acc += frequencies[j] * std::log(std::max(p[j], 1e-300));
    }
  }
  return acc;
}

namespace {

// EM step given the cell probabilities p already computed for q.
std::vector<double> em_step(std::span<const double> f, const ResponseMatrix& response,
                            std::span<const double> q, std::span<const double> p,
                            double total) {
  std::vector<double> ratio(p.size(), 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (f[j] > 0.0) {
      ratio[j] = f[j] / std::max(p[j], 1e-300);
    }
  }
  std::vector<double> next(q.size(), 0.0);
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (ratio[j] == 0.0) {
      continue;
    }
    const auto& row = response.cells[j];
    for (std::size_t n = 0; n < q.size(); ++n) {
      next[n] += ratio[j] * row[n];
    }
  }
  for (std::size_t n = 0; n < q.size(); ++n) {
    next[n] *= q[n] / total;
  }
  return next;
}

struct EmOutcome {
  std::vector<double> q;
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

EmOutcome run_em(std::span<const double> f, const ResponseMatrix& response,
                 const ReconstructionOptions& options) {
  const double total = std::accumulate(f.begin(), f.end(), 0.0);
  if (!(total > 0.0)) {
    throw std::invalid_argument("mle_reconstruct: histogram has no counts");
  }
  if (f.size() != response.cell_count()) {
    throw std::invalid_argument("mle_reconstruct: histogram and response cell counts differ");
  }
  const std::size_t dim = static_cast<std::size_t>(response.basis.dimension());
  EmOutcome out;
  out.q.assign(dim, 1.0 / static_cast<double>(dim));
  for (int it = 0;; ++it) {
    const auto p = response.predict(out.q);
    double loglik = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (f[j] > 0.0) {
        loglik += f[j] * std::log(std::max(p[j], 1e-300));
      }
    }
    out.trace.push_back(loglik);
    if (it > 0) {
      const double prev = out.trace[out.trace.size() - 2];
      if (std::abs(loglik - prev) < options.tolerance * std::abs(loglik)) {
        out.converged = true;
        break;
      }
    }
    if (it == options.max_iterations) {
      break;
    }
    out.q = em_step(f, response, out.q, p, total);
    out.iterations = it + 1;
  }
  return out;
}

std::vector<double> floor_and_normalize(std::vector<double> q, double floor) {
  double sum = 0.0;
  for (double& v : q) {
    if (v < floor) {
      v = 0.0;
    }
    sum += v;
  }
  for (double& v : q) {
    v /= sum;
  }
  return q;
}

// An estimate that still puts weight on the cutoff photon number is not
// resolved by the truncation. It is returned flagged as not converged, with
// the tolerance widened to what was found.
FockBasisConfig truncation_basis(FockBasisConfig basis, double tail) {
  basis.tail_tolerance = std::max(basis.tail_tolerance, std::min(tail, 0.999));
  return basis;
}

}  // namespace

std::vector<double> em_update(std::span<const double> frequencies, const ResponseMatrix& response,
                              std::span<const double> q) {
  const double total = std::accumulate(frequencies.begin(), frequencies.end(), 0.0);
  const auto p = response.predict(q);
  return em_step(frequencies, response, q, p, total);
}

ReconstructionResult mle_reconstruct(const BinnedHistogram& hist, const ResponseMatrix& response,
                                     const ReconstructionOptions& options) {
  if (hist.edges != response.edges) {
    throw std::invalid_argument("mle_reconstruct: histogram and response use different edges");
  }
  const auto f = hist.cell_frequencies();
  const auto basis = response.basis;

  if (options.correction == EfficiencyCorrection::inverse_map) {
    const auto detected_response = response.eta == 1.0
                                       ? response
                                       : build_response(basis, DetectionModel::ideal(),
                                                        response.edges);
    auto em = run_em(f, detected_response, options);
    auto q = floor_and_normalize(std::move(em.q), options.floor);
    const double tail = q.back();
    FockDiagonalState raw(std::move(q), truncation_basis(basis, tail));
    auto corrected = invert_loss(raw, response.eta);
    return ReconstructionResult{std::move(corrected), std::move(raw), std::move(em.trace),
                                em.iterations, em.converged && tail <= basis.tail_tolerance, {},
                                response.eta};
  }

  auto em = run_em(f, response, options);
  auto q = floor_and_normalize(std::move(em.q), options.floor);
  const double tail = q.back();
  FockDiagonalState state(std::move(q), truncation_basis(basis, tail));
  auto raw = apply_loss(state, response.eta);
  return ReconstructionResult{std::move(state), std::move(raw), std::move(em.trace),
                              em.iterations, em.converged && tail <= basis.tail_tolerance, {},
                              response.eta};
}

std::vector<double> bootstrap_errors(const QuadratureDataset& ds, const ResponseMatrix& response,
                                     const ReconstructionOptions& options,
                                     std::span<const std::uint64_t> resample_seeds) {
  if (resample_seeds.size() < 2) {
    throw std::invalid_argument("bootstrap_errors: need at least two resamples");
  }
  ds.validate();
  const std::size_t dim = static_cast<std::size_t>(response.basis.dimension());
  const std::size_t count = ds.samples.size();
  std::vector<double> mean(dim, 0.0);
  std::vector<double> m2(dim, 0.0);
  std::vector<double> resample(count);
  std::size_t k = 0;
  for (const auto seed : resample_seeds) {
    numeric::RandomStream rng(seed);
    for (auto& x : resample) {
      x = ds.samples[rng.below(count)];
    }
    const auto result = mle_reconstruct(bin_dataset(resample, response.edges), response, options);
    // Welford running variance.
    ++k;
    const auto pops = result.state.populations();
    for (std::size_t n = 0; n < dim; ++n) {
      const double delta = pops[n] - mean[n];
      mean[n] += delta / static_cast<double>(k);
      m2[n] += delta * (pops[n] - mean[n]);
    }
  }
  std::vector<double> sigma(dim);
  for (std::size_t n = 0; n < dim; ++n) {
    sigma[n] = std::sqrt(std::max(m2[n], 0.0) / static_cast<double>(k - 1));
  }
  return sigma;
}

std::vector<double> bootstrap_errors(const QuadratureDataset& ds, const ResponseMatrix& response,
                                     const ReconstructionOptions& options, int n_resamples,
                                     std::uint64_t seed) {
  if (n_resamples < 2) {
    throw std::invalid_argument("bootstrap_errors: need at least two resamples");
  }
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_resamples));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seeds[i] = numeric::derive_seed(seed, i);
  }
  return bootstrap_errors(ds, response, options, seeds);
}

void write_report(const ReconstructionReport& report, std::ostream& out) {
  const auto& r = report.result;
  out << "# loopmem reconstruction report\n";
  out << "format_version = 1\n";
  out << "round_trips = " << report.round_trips << '\n';
  out << "source_file = " << report.source_file << '\n';
  out << "eta = " << format_double(r.eta) << '\n';
  out << "n_max = " << r.state.n_max() << '\n';
  out << "tail_tolerance = " << format_double(r.state.basis().tail_tolerance) << '\n';
  out << "iterations = " << r.iterations << '\n';
  out << "converged = " << (r.converged ? "true" : "false") << '\n';
  out << "loglik = " << format_double(r.loglik()) << '\n';
  const auto pops = r.state.populations();
  const auto raw = r.raw_state.populations();
  for (std::size_t n = 0; n < pops.size(); ++n) {
    out << "population." << n << " = " << format_double(pops[n]) << '\n';
  }
  for (std::size_t n = 0; n < raw.size(); ++n) {
    out << "raw." << n << " = " << format_double(raw[n]) << '\n';
  }
  for (std::size_t n = 0; n < r.bootstrap_sigmas.size(); ++n) {
    out << "sigma." << n << " = " << format_double(r.bootstrap_sigmas[n]) << '\n';
  }
}

ReconstructionReport read_report(std::istream& in, const std::string& name) {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') {
      continue;
    }
    auto pair = split_key_value(text);
    if (!pair) {
      throw ParseError(name, line_no, "expected 'key = value'");
    }
    kv[pair->first] = {pair->second, line_no};
  }
  auto get = [&](const std::string& key) -> const std::pair<std::string, int>& {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      throw ParseError(name, 0, "missing key '" + key + "'");
    }
    return it->second;
  };
  auto number = [&](const std::string& key) {
    const auto& [text, at] = get(key);
    const auto v = parse_double(text);
    if (!v) {
      throw ParseError(name, at, "'" + key + "' is not a number");
    }
    return *v;
  };
  auto integer = [&](const std::string& key) {
    const auto& [text, at] = get(key);
    const auto v = parse_integer(text);
    if (!v) {
      throw ParseError(name, at, "'" + key + "' is not an integer");
    }
    return static_cast<int>(*v);
  };
  if (integer("format_version") != 1) {
    throw ParseError(name, get("format_version").second, "unsupported report format_version");
  }
  FockBasisConfig basis;
  basis.n_max = integer("n_max");
  basis.tail_tolerance = number("tail_tolerance");
  const auto dim = static_cast<std::size_t>(basis.dimension());
  auto vec = [&](const std::string& prefix, bool required) {
    std::vector<double> v;
    for (std::size_t n = 0; n < dim; ++n) {
      const auto key = prefix + "." + std::to_string(n);
      if (!required && !kv.contains(key)) {
        if (n == 0) {
          return v;
        }
        throw ParseError(name, 0, "incomplete '" + prefix + "' entries");
      }
      v.push_back(number(key));
    }
    return v;
  };
  const auto converged = parse_bool(get("converged").first);
  if (!converged) {
    throw ParseError(name, get("converged").second, "'converged' is not a boolean");
  }
  try {
    ReconstructionReport report{
        integer("round_trips"), get("source_file").first,
        ReconstructionResult{FockDiagonalState(vec("population", true), basis),
                             FockDiagonalState(vec("raw", true), basis),
                             {number("loglik")},
                             integer("iterations"),
                             *converged,
                             vec("sigma", false),
                             number("eta")}};
    return report;
  } catch (const std::invalid_argument& e) {
    throw ParseError(name, 0, e.what());
  }
}

}  // namespace loopmem
