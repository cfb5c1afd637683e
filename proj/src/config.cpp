#include "loopmem/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "loopmem/errors.hpp"
#include "loopmem/text_io.hpp"

namespace loopmem {

std::size_t ExperimentConfig::samples_per_point() const {
  if (samples > 0) {
    return samples;
  }
  const auto dominant = std::max_element(initial_state.begin(), initial_state.end());
  return dominant - initial_state.begin() >= 2 ? 10000 : 50000;
}

void RunConfig::validate() const {
  basis.validate();
  memory.validate();
  detection.validate();
  source.validate();
  initial_state();
  if (experiment.trips.empty()) {
    throw std::invalid_argument("experiment.trips must not be empty");
  }
  for (std::size_t i = 0; i < experiment.trips.size(); ++i) {
    if (experiment.trips[i] < 0 || (i > 0 && experiment.trips[i] <= experiment.trips[i - 1])) {
      throw std::invalid_argument("experiment.trips must be non-negative and strictly increasing");
    }
  }
  if (!(tomography.half_range > 0.0) || !(tomography.bin_width > 0.0) ||
      tomography.bin_width > tomography.half_range) {
    throw std::invalid_argument("tomography bins must satisfy 0 < bin_width <= half_range");
  }
  if (tomography.options.max_iterations < 1 || !(tomography.options.tolerance > 0.0) ||
      !(tomography.options.floor >= 0.0)) {
    throw std::invalid_argument("tomography: max_iterations >= 1, tolerance > 0, floor >= 0");
  }
  if (tomography.bootstrap == 1 || tomography.bootstrap < 0) {
    throw std::invalid_argument("tomography.bootstrap must be 0 or at least 2");
  }
  if (fit.weighted && tomography.bootstrap < 2) {
    throw std::invalid_argument("fit.weighted needs tomography.bootstrap >= 2");
  }
  if (!(fit.p_max > 0.0 && fit.p_max < 1.0)) {
    throw std::invalid_argument("fit.p_max must lie in (0, 1)");
  }
  for (int n : sync.trips) {
    if (n < 0) {
      throw std::invalid_argument("sync.trips must be non-negative");
    }
  }
  if (!(sync.improvement_factor > 0.0) ||
      source.heralding_probability * sync.improvement_factor > 1.0) {
    throw std::invalid_argument("sync.improvement_factor must keep p1 within (0, 1]");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output.dir must not be empty");
  }
}

FockDiagonalState RunConfig::initial_state() const {
  return FockDiagonalState(experiment.initial_state, basis);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? " " : "") + std::to_string(v[i]);
  }
  return out;
}

const char* correction_name(EfficiencyCorrection c) {
  return c == EfficiencyCorrection::povm_folding ? "povm_folding" : "inverse_map";
}

}  // namespace

std::string RunConfig::canonical() const {
  std::ostringstream out;
  auto put = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  put("basis.n_max", std::to_string(basis.n_max));
  put("basis.tail_tolerance", format_double(basis.tail_tolerance));
  put("memory.loss_per_trip", format_double(memory.loss_per_trip));
  put("memory.round_trip_time", format_double(memory.round_trip_time));
  put("memory.label", memory.label);
  put("detection.eta_pd", format_double(detection.eta_pd));
  put("detection.eta", format_double(detection.eta));
  put("detection.sigma_eta", format_double(detection.sigma_eta));
  put("source.heralding_probability", format_double(source.heralding_probability));
  put("source.pulse_rate", format_double(source.pulse_rate));
  put("experiment.initial_state", format_doubles(experiment.initial_state));
  put("experiment.trips", join_ints(experiment.trips));
  put("experiment.samples", std::to_string(experiment.samples));
  put("experiment.seed", std::to_string(experiment.seed));
  put("tomography.half_range", format_double(tomography.half_range));
  put("tomography.bin_width", format_double(tomography.bin_width));
  put("tomography.max_iterations", std::to_string(tomography.options.max_iterations));
  put("tomography.tolerance", format_double(tomography.options.tolerance));
  put("tomography.floor", format_double(tomography.options.floor));
  put("tomography.correction", correction_name(tomography.options.correction));
  put("tomography.bootstrap", std::to_string(tomography.bootstrap));
  put("fit.fix_initial", fit.fix_initial ? "true" : "false");
  put("fit.weighted", fit.weighted ? "true" : "false");
  put("fit.p_max", format_double(fit.p_max));
  put("sync.trips", join_ints(sync.trips));
  put("sync.improvement_factor", format_double(sync.improvement_factor));
  put("output.dir", output_dir.string());
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

RunConfig parse_config(std::istream& in, const std::string& name) {
  RunConfig cfg;
  std::optional<double> eta_pd, eta_c, eta, sigma_eta;
  int line_no = 0;

  auto fail = [&](const std::string& what) -> void { throw ParseError(name, line_no, what); };
  auto real = [&](std::string_view v, const std::string& key) {
    const auto x = parse_double(v);
    if (!x) {
      fail("'" + key + "' is not a number");
    }
    return *x;
  };
  auto integer = [&](std::string_view v, const std::string& key) {
    const auto x = parse_integer(v);
    if (!x) {
      fail("'" + key + "' is not an integer");
    }
    return *x;
  };
  auto flag = [&](std::string_view v, const std::string& key) {
    const auto x = parse_bool(v);
    if (!x) {
      fail("'" + key + "' is not true/false");
    }
    return *x;
  };
  auto int_list = [&](std::string_view v, const std::string& key) {
    const auto xs = parse_double_list(v);
    std::vector<int> out;
    if (!xs) {
      fail("'" + key + "' is not a list of integers");
    }
    for (double x : *xs) {
      if (x != static_cast<double>(static_cast<int>(x))) {
        fail("'" + key + "' is not a list of integers");
      }
      out.push_back(static_cast<int>(x));
    }
    return out;
  };

  using Setter = std::function<void(std::string_view, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"basis.n_max", [&](auto v, auto& k) { cfg.basis.n_max = static_cast<int>(integer(v, k)); }},
      {"basis.tail_tolerance", [&](auto v, auto& k) { cfg.basis.tail_tolerance = real(v, k); }},
      {"memory.loss_per_trip", [&](auto v, auto& k) { cfg.memory.loss_per_trip = real(v, k); }},
      {"memory.round_trip_time", [&](auto v, auto& k) { cfg.memory.round_trip_time = real(v, k); }},
      {"memory.label", [&](auto v, auto&) { cfg.memory.label = std::string(v); }},
      {"detection.eta_pd", [&](auto v, auto& k) { eta_pd = real(v, k); }},
      {"detection.eta_c", [&](auto v, auto& k) { eta_c = real(v, k); }},
      {"detection.eta", [&](auto v, auto& k) { eta = real(v, k); }},
      {"detection.sigma_eta", [&](auto v, auto& k) { sigma_eta = real(v, k); }},
      {"source.heralding_probability",
       [&](auto v, auto& k) { cfg.source.heralding_probability = real(v, k); }},
      {"source.pulse_rate", [&](auto v, auto& k) { cfg.source.pulse_rate = real(v, k); }},
      {"experiment.initial_state",
       [&](auto v, auto& k) {
         const auto xs = parse_double_list(v);
         if (!xs || xs->empty()) {
           fail("'" + k + "' is not a list of populations");
         }
         cfg.experiment.initial_state = *xs;
       }},
      {"experiment.trips", [&](auto v, auto& k) { cfg.experiment.trips = int_list(v, k); }},
      {"experiment.samples",
       [&](auto v, auto& k) {
         const auto n = integer(v, k);
         if (n < 0) {
           fail("'" + k + "' must be >= 0");
         }
         cfg.experiment.samples = static_cast<std::size_t>(n);
       }},
      {"experiment.seed",
       [&](auto v, auto& k) {
         const auto n = integer(v, k);
         if (n < 0) {
           fail("'" + k + "' must be >= 0");
         }
         cfg.experiment.seed = static_cast<std::uint64_t>(n);
       }},
      {"tomography.half_range", [&](auto v, auto& k) { cfg.tomography.half_range = real(v, k); }},
      {"tomography.bin_width", [&](auto v, auto& k) { cfg.tomography.bin_width = real(v, k); }},
      {"tomography.max_iterations",
       [&](auto v, auto& k) {
         cfg.tomography.options.max_iterations = static_cast<int>(integer(v, k));
       }},
      {"tomography.tolerance",
       [&](auto v, auto& k) { cfg.tomography.options.tolerance = real(v, k); }},
      {"tomography.floor", [&](auto v, auto& k) { cfg.tomography.options.floor = real(v, k); }},
      {"tomography.correction",
       [&](auto v, auto& k) {
         if (v == "povm_folding") {
           cfg.tomography.options.correction = EfficiencyCorrection::povm_folding;
         } else if (v == "inverse_map") {
           cfg.tomography.options.correction = EfficiencyCorrection::inverse_map;
         } else {
           fail("'" + k + "' must be povm_folding or inverse_map");
         }
       }},
      {"tomography.bootstrap",
       [&](auto v, auto& k) { cfg.tomography.bootstrap = static_cast<int>(integer(v, k)); }},
      {"fit.fix_initial", [&](auto v, auto& k) { cfg.fit.fix_initial = flag(v, k); }},
      {"fit.weighted", [&](auto v, auto& k) { cfg.fit.weighted = flag(v, k); }},
      {"fit.p_max", [&](auto v, auto& k) { cfg.fit.p_max = real(v, k); }},
      {"sync.trips", [&](auto v, auto& k) { cfg.sync.trips = int_list(v, k); }},
      {"sync.improvement_factor",
       [&](auto v, auto& k) { cfg.sync.improvement_factor = real(v, k); }},
      {"output.dir", [&](auto v, auto&) { cfg.output_dir = std::string(v); }},
  };

  std::map<std::string, int> seen;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') {
      continue;
    }
    const auto kv = split_key_value(text);
    if (!kv) {
      fail("expected 'key = value'");
    }
    const auto it = setters.find(kv->first);
    if (it == setters.end()) {
      fail("unknown key '" + kv->first + "'");
    }
    if (seen.contains(kv->first)) {
      fail("duplicate key '" + kv->first + "' (first set on line " +
           std::to_string(seen[kv->first]) + ")");
    }
    seen[kv->first] = line_no;
    it->second(kv->second, kv->first);
  }
  line_no = 0;

  try {
    const DetectionModel defaults;
    const double pd = eta_pd.value_or(defaults.eta_pd);
    const double sigma = sigma_eta.value_or(defaults.sigma_eta);
    if (eta_c && eta) {
      cfg.detection = DetectionModel::from_components(pd, *eta_c, sigma);
      if (std::abs(cfg.detection.eta - *eta) > 1e-9) {
        fail("detection.eta differs from detection.eta_pd * detection.eta_c");
      }
    } else if (eta_c) {
      cfg.detection = DetectionModel::from_components(pd, *eta_c, sigma);
    } else {
      cfg.detection = DetectionModel::from_total(eta.value_or(defaults.eta), sigma, pd);
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config " + path.string());
  }
  return parse_config(in, path.string());
}

std::optional<std::filesystem::path> config_path_from_env() {
  const char* value = std::getenv("LOOPMEM_CONFIG");
  if (value == nullptr || *value == '\0') {
    return std::nullopt;
  }
  return std::filesystem::path(value);
}

}  // namespace loopmem
