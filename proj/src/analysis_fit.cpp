#include "loopmem/analysis_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "loopmem/numeric.hpp"

namespace loopmem {

Negativity wigner_minimum(const FockDiagonalState& state, double r_max) {
  constexpr double step = 0.01;
  const auto points = static_cast<int>(std::ceil(r_max / step));
  int best_i = 0;
  double best = wigner_radial(state, 0.0);
  for (int i = 1; i <= points; ++i) {
    const double w = wigner_radial(state, std::min(i * step, r_max));
    if (w < best) {
      best = w;
      best_i = i;
    }
  }
  const double lo = std::max(0.0, (best_i - 1) * step);
  const double hi = std::min(r_max, (best_i + 1) * step);
  const auto refined =
      numeric::minimize_bounded([&](double r) { return wigner_radial(state, r); }, lo, hi, 1e-9);
  if (refined.value < best) {
    return {refined.value, refined.x};
  }
  return {best, std::min(best_i * step, r_max)};
}

Negativity negativity(const FockDiagonalState& state) {
  const auto m = wigner_minimum(state);
  if (m.value < 0.0) {
    return m;
  }
  return {0.0, std::numeric_limits<double>::infinity()};
}

namespace {

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> v) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) {
      theta = t;
    }
  }
  for (double& x : v) {
    x = std::max(x - theta, 0.0);
  }
  return v;
}

// Column-stochastic matrix of the loss channel, [out][in].
std::vector<std::vector<double>> loss_matrix(int dim, double t) {
  std::vector<std::vector<double>> m(dim, std::vector<double>(dim, 0.0));
  for (int in = 0; in < dim; ++in) {
    for (int out = 0; out <= in; ++out) {
      m[out][in] = binomial(in, out) * std::pow(t, out) * std::pow(1.0 - t, in - out);
    }
  }
  return m;
}

class LossObjective {
 public:
  LossObjective(const StorageSeries& series, const LossFitOptions& options)
      : series_(series), options_(options) {
    dim_ = series.states.front().basis().dimension();
    if (!options.sigmas.empty()) {
      if (options.sigmas.size() != series.size()) {
        throw std::invalid_argument("fit_loss: one sigma vector per series point required");
      }
      for (const auto& s : options.sigmas) {
        if (static_cast<int>(s.size()) != dim_) {
          throw std::invalid_argument("fit_loss: sigma vector length differs from the basis");
        }
      }
    }
  }

  double weight(std::size_t point, int n) const {
    if (options_.sigmas.empty()) {
      return 1.0;
    }
    // Floor keeps exactly determined populations from dominating.
    const double s = std::max(options_.sigmas[point][static_cast<std::size_t>(n)], 1e-4);
    return 1.0 / (s * s);
  }

  // Objective for a fixed initial state.
  double operator()(double p, std::span<const double> rho0) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < series_.size(); ++i) {
      const double t = std::pow(1.0 - p, series_.round_trips[i]);
      const auto obs = series_.states[i].populations();
      for (int out = 0; out < dim_; ++out) {
        double pred = 0.0;
        for (int in = out; in < dim_; ++in) {
          pred += binomial(in, out) * std::pow(t, out) * std::pow(1.0 - t, in - out) * rho0[in];
        }
        const double r = obs[out] - pred;
        acc += weight(i, out) * r * r;
      }
    }
    return acc;
  }

  // Best initial state on the simplex for a given loss, by accelerated
  // projected gradient on the quadratic objective.
  std::vector<double> best_initial(double p) const {
    const auto n = static_cast<std::size_t>(dim_);
    std::vector<std::vector<double>> hessian(n, std::vector<double>(n, 0.0));
    std::vector<double> linear(n, 0.0);
    for (std::size_t i = 0; i < series_.size(); ++i) {
      const auto m = loss_matrix(dim_, std::pow(1.0 - p, series_.round_trips[i]));
      const auto obs = series_.states[i].populations();
      for (std::size_t out = 0; out < n; ++out) {
        const double w = weight(i, static_cast<int>(out));
        for (std::size_t a = 0; a < n; ++a) {
          linear[a] += 2.0 * w * m[out][a] * obs[out];
          for (std::size_t b = 0; b < n; ++b) {
            hessian[a][b] += 2.0 * w * m[out][a] * m[out][b];
          }
        }
      }
    }
    // Largest eigenvalue by power iteration sets the step size.
    std::vector<double> v(n, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
      std::vector<double> hv(n, 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          hv[a] += hessian[a][b] * v[b];
        }
      }
      double norm = 0.0;
      for (double x : hv) {
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        break;
      }
      lambda = norm;
      for (std::size_t a = 0; a < n; ++a) {
        v[a] = hv[a] / norm;
      }
    }
    const double step = 1.0 / (lambda * 1.01 + 1e-300);

    const auto start = series_.states.front().populations();
    std::vector<double> x(start.begin(), start.end());
    std::vector<double> y = x;
    double momentum = 1.0;
    for (int it = 0; it < 5000; ++it) {
      std::vector<double> grad(n, 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          grad[a] += hessian[a][b] * y[b];
        }
        grad[a] -= linear[a];
      }
      std::vector<double> trial(n);
      for (std::size_t a = 0; a < n; ++a) {
        trial[a] = y[a] - step * grad[a];
      }
      // The cutoff population is held at zero so the result stays a valid
      // truncated state.
      trial.pop_back();
      auto next = project_to_simplex(std::move(trial));
      next.push_back(0.0);
      const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      double change = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        y[a] = next[a] + (momentum - 1.0) / next_momentum * (next[a] - x[a]);
        change = std::max(change, std::abs(next[a] - x[a]));
      }
      x = std::move(next);
      momentum = next_momentum;
      if (change < 1e-14) {
        break;
      }
    }
    return x;
  }

  std::size_t residual_count() const {
    const std::size_t points = options_.fix_initial ? series_.size() - 1 : series_.size();
    return points * static_cast<std::size_t>(dim_);
  }

 private:
  const StorageSeries& series_;
  const LossFitOptions& options_;
  int dim_ = 0;
};

}  // namespace

LossFitResult fit_loss(const StorageSeries& series, const LossFitOptions& options) {
  series.validate();
  if (series.size() < 3 || series.round_trips.front() != 0) {
    throw std::invalid_argument("fit_loss: need at least three points, starting at N = 0");
  }
  if (!(options.p_max > 0.0 && options.p_max < 1.0)) {
    throw std::invalid_argument("fit_loss: p_max must lie in (0, 1)");
  }
  const LossObjective objective(series, options);
  const auto& rho0_measured = series.states.front();

  // The fit is identifiable only if the loss changes the predicted series.
  {
    const auto last = series.round_trips.back();
    const auto lossless = rho0_measured.populations();
    const auto lossy = apply_loss(rho0_measured, std::pow(1.0 - options.p_max, last));
    double spread = 0.0;
    for (std::size_t n = 0; n < lossless.size(); ++n) {
      spread = std::max(spread, std::abs(lossless[n] - lossy[n]));
    }
    if (spread < 1e-12) {
      throw std::domain_error("loss unidentifiable");
    }
  }

  std::function<double(double)> profile;
  if (options.fix_initial) {
    profile = [&](double p) { return objective(p, rho0_measured.populations()); };
  } else {
    profile = [&](double p) { return objective(p, objective.best_initial(p)); };
  }
  const auto best = numeric::minimize_bounded(profile, 0.0, options.p_max, 1e-12);
  const double p_hat = best.x;

  // Curvature of the objective at the optimum (one-sided at the p = 0 edge).
  const double h = 1e-4 * std::max(p_hat, 1e-2);
  double curvature = 0.0;
  if (p_hat - h < 0.0) {
    curvature = (profile(p_hat + 2 * h) - 2.0 * profile(p_hat + h) + best.value) / (h * h);
  } else {
    curvature = (profile(p_hat + h) - 2.0 * best.value + profile(p_hat - h)) / (h * h);
  }
  const auto m = static_cast<double>(objective.residual_count());
  const double reduced_chi2 = m > 1.0 ? best.value / (m - 1.0) : 0.0;

  LossFitResult result{
      p_hat,
      options.fix_initial ? rho0_measured
                          : FockDiagonalState(objective.best_initial(p_hat), rho0_measured.basis()),
      std::sqrt(std::max(best.value, 0.0) / m),
      curvature > 0.0 ? 2.0 * reduced_chi2 / curvature : std::numeric_limits<double>::infinity()};
  return result;
}

LifetimeFit fit_lifetime(const StorageSeries& series, int n, double dt) {
  series.validate();
  if (series.size() == 0 || n < 0 || n > series.states.front().n_max()) {
    throw std::invalid_argument("fit_lifetime: empty series or photon number outside the basis");
  }
  if (!(series.states.front()[n] > 0.0)) {
    throw std::invalid_argument("fit_lifetime: population must be positive at the first point");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("fit_lifetime: dt must be positive");
  }
  LifetimeFit fit;
  double sw = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = series.states[i][n];
    if (!(y > 0.0)) {
      ++fit.excluded_points;
      continue;
    }
    const double t = series.round_trips[i] * dt;
    const double w = y * y;
    const double ly = std::log(y);
    sw += w;
    st += w * t;
    sy += w * ly;
    stt += w * t * t;
    sty += w * t * ly;
    ++used;
  }
  if (used < 2) {
    throw std::invalid_argument("fit_lifetime: fewer than two usable points");
  }
  const double denom = sw * stt - st * st;
  if (!(denom > 0.0)) {
    throw std::invalid_argument("fit_lifetime: points do not span a time interval");
  }
  const double slope = (sw * sty - st * sy) / denom;
  const double intercept = (sy - slope * st) / sw;
  fit.f0 = std::exp(intercept);
  const double t_span = series.round_trips.back() * dt;
  // A decay too slow to resolve over the observed span counts as divergent.
  if (slope < 0.0 && -slope * t_span > 1e-12) {
    fit.tau = -1.0 / slope;
  }
  return fit;
}

std::optional<double> negativity_zero_crossing(const FockDiagonalState& initial,
                                               const MemoryParams& params) {
  params.validate();
  if (params.loss_per_trip == 0.0 || negativity(initial).value >= 0.0) {
    return std::nullopt;
  }
  auto minimum_after = [&](double n_trips) {
    return wigner_minimum(evolve_continuous(initial, params, n_trips)).value;
  };
  // Bracket in transmission steps of 0.002 down to T = 1e-6.
  const double per_trip = -std::log1p(-params.loss_per_trip);
  double lo = 0.0;
  for (int k = 1;; ++k) {
    const double t = std::max(1.0 - 0.002 * k, 1e-6);
    const double hi = -std::log(t) / per_trip;
    if (minimum_after(hi) >= 0.0) {
      return numeric::bisect_root(minimum_after, lo, hi, 1e-9);
    }
    if (t <= 1e-6) {
      return std::nullopt;
    }
    lo = hi;
  }
}

FockDiagonalState recorrect(const FockDiagonalState& corrected, double eta_used, double new_eta) {
  if (eta_used == new_eta) {
    return corrected;
  }
  return invert_loss(apply_loss(corrected, eta_used), new_eta);
}

NegativityCurve negativity_curve(const FockDiagonalState& initial, const MemoryParams& params,
                                 const DetectionModel& det, const std::vector<int>& trips,
                                 double loss_variance) {
  det.validate();
  const auto band = eta_band(
      [&](double eta) {
        const auto start = recorrect(initial, det.eta, eta);
        std::vector<double> out;
        out.reserve(trips.size());
        for (int n : trips) {
          out.push_back(negativity(evolve_rounds(start, params, n)).value);
        }
        return out;
      },
      det);

  NegativityCurve curve;
  curve.round_trips = trips;
  curve.negativity = band.mid;
  curve.band_low = band.low;
  curve.band_high = band.high;

  const auto central = negativity_zero_crossing(initial, params);
  if (!central) {
    return curve;
  }
  // A start that is not negative under the shifted eta loses negativity at
  // once, hence crossing 0.
  const auto crossing_band = eta_band(
      [&](double eta) {
        const auto c = negativity_zero_crossing(recorrect(initial, det.eta, eta), params);
        return std::vector<double>{c.value_or(0.0)};
      },
      det);
  curve.crossing_low = crossing_band.low[0];
  curve.crossing_high = crossing_band.high[0];
  const double band_half_width = 0.5 * (*curve.crossing_high - *curve.crossing_low);

  double fit_part = 0.0;
  if (loss_variance > 0.0) {
    const double p = params.loss_per_trip;
    const double h = 1e-3 * p;
    MemoryParams up = params;
    MemoryParams down = params;
    up.loss_per_trip = p + h;
    down.loss_per_trip = std::max(p - h, 0.0);
    const auto c_up = negativity_zero_crossing(initial, up);
    const auto c_down = negativity_zero_crossing(initial, down);
    if (c_up && c_down) {
      const double slope = (*c_up - *c_down) / (up.loss_per_trip - down.loss_per_trip);
      fit_part = std::abs(slope) * std::sqrt(loss_variance);
    }
  }
  curve.zero_crossing =
      ZeroCrossing{*central, std::sqrt(band_half_width * band_half_width + fit_part * fit_part)};
  return curve;
}

Band eta_band(const std::function<std::vector<double>(double eta)>& analysis,
              const DetectionModel& det) {
  det.validate();
  const double lo_eta = std::max(det.eta - det.sigma_eta, 1e-6);
  const double hi_eta = std::min(det.eta + det.sigma_eta, 1.0);
  Band band;
  band.mid = analysis(det.eta);
  const auto a = analysis(lo_eta);
  const auto b = analysis(hi_eta);
  if (a.size() != band.mid.size() || b.size() != band.mid.size()) {
    throw std::logic_error("eta_band: analysis output length depends on eta");
  }
  band.low.resize(band.mid.size());
  band.high.resize(band.mid.size());
  for (std::size_t i = 0; i < band.mid.size(); ++i) {
    band.low[i] = std::min({a[i], band.mid[i], b[i]});
    band.high[i] = std::max({a[i], band.mid[i], b[i]});
  }
  return band;
}

}  // namespace loopmem
