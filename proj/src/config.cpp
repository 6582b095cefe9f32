#include "macstab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace macstab {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

const json& require(const json& obj, const std::string& key,
                    const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key), "missing required field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  throw ConfigError(path, "expected an integer");
}

std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], index(path, i)));
  return out;
}

std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

template <typename F>
auto checked(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
}

SystemParams parse_system(const json& sys) {
  const std::string p = "system";
  if (!sys.is_object()) throw ConfigError(p, "expected an object");
  const double rho = number(require(sys, "rho", p), "system.rho");
  const double w = sys.contains("bandwidth_hz")
                       ? number(sys["bandwidth_hz"], "system.bandwidth_hz")
                       : 1.0;
  const double n0 = sys.contains("noise_psd_w_per_hz")
                        ? number(sys["noise_psd_w_per_hz"], "system.noise_psd_w_per_hz")
                        : 1.0;
  const auto k = integer(require(sys, "k_max", p), "system.k_max");
  if (k < 1 || k > 1000000) throw ConfigError("system.k_max", "must be in [1, 1e6]");

  const auto& classes_json = require(sys, "service_classes", p);
  if (!classes_json.is_array() || classes_json.empty())
    throw ConfigError("system.service_classes", "expected a nonempty array");
  std::vector<ServiceClass> classes;
  for (std::size_t i = 0; i < classes_json.size(); ++i) {
    const auto cp = index("system.service_classes", i);
    const auto& c = classes_json[i];
    const double pe = number(require(c, "error_prob", cp), join(cp, "error_prob"));
    if (!(pe > 0.0 && pe < 1.0))
      throw ConfigError(join(cp, "error_prob"), "must be in (0, 1)");
    double log_m = 0.0;
    if (c.contains("log_alphabet_size")) {
      log_m = number(c["log_alphabet_size"], join(cp, "log_alphabet_size"));
    } else {
      const double m = number(require(c, "alphabet_size", cp), join(cp, "alphabet_size"));
      if (!(m >= 2.0)) throw ConfigError(join(cp, "alphabet_size"), "must be >= 2");
      log_m = std::log(m);
    }
    if (!(log_m >= std::log(2.0) * (1.0 - 1e-15)) || !std::isfinite(log_m))
      throw ConfigError(cp, "alphabet size must be >= 2");
    classes.push_back({pe, log_m});
  }

  if (sys.contains("snr") == sys.contains("powers_w"))
    throw ConfigError("system", "give exactly one of snr or powers_w");
  const bool by_snr = sys.contains("snr");
  const std::string key = by_snr ? "snr" : "powers_w";
  const auto values = numbers(sys[key], join(p, key));
  if (values.empty()) throw ConfigError(join(p, key), "expected at least one entry");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!(values[i] > 0.0) || !std::isfinite(values[i]))
      throw ConfigError(index(join(p, key), i), "must be positive and finite");

  return checked(p, [&] {
    return by_snr ? SystemParams::from_snr(rho, w, n0, static_cast<int>(k), values,
                                           classes)
                  : SystemParams(rho, w, n0, static_cast<int>(k), values, classes);
  });
}

ArrivalSpec parse_arrival_spec(const json& c, const std::string& path) {
  const auto kind = text(require(c, "kind", path), join(path, "kind"));
  ArrivalSpec spec;
  if (kind == "bernoulli") {
    spec = ArrivalSpec::bernoulli(number(require(c, "mean", path), join(path, "mean")));
  } else if (kind == "poisson") {
    spec = ArrivalSpec::poisson(number(require(c, "mean", path), join(path, "mean")));
  } else if (kind == "deterministic_batch") {
    spec = ArrivalSpec::deterministic(
        static_cast<int>(integer(require(c, "batch", path), join(path, "batch"))),
        static_cast<int>(integer(require(c, "period", path), join(path, "period"))));
  } else if (kind == "empirical") {
    spec = ArrivalSpec::empirical(numbers(require(c, "pmf", path), join(path, "pmf")));
  } else {
    throw ConfigError(join(path, "kind"), "unknown arrival kind '" + kind + "'");
  }
  checked(path, [&] { spec.validate(); });
  return spec;
}

ArrivalModel parse_arrivals(const json& a, const SystemParams& params) {
  const std::string p = "arrivals";
  ArrivalModel model;
  if (a.is_object() && a.contains("classes")) {
    const auto& cls = a["classes"];
    if (!cls.is_array()) throw ConfigError("arrivals.classes", "expected an array");
    for (std::size_t i = 0; i < cls.size(); ++i)
      model.classes.push_back(parse_arrival_spec(cls[i], index("arrivals.classes", i)));
  } else {
    const auto kind = text(require(a, "kind", p), "arrivals.kind");
    const auto means = numbers(require(a, "mean", p), "arrivals.mean");
    for (std::size_t i = 0; i < means.size(); ++i) {
      json c = {{"kind", kind}, {"mean", means[i]}};
      model.classes.push_back(parse_arrival_spec(c, index("arrivals.mean", i)));
    }
  }
  if (model.classes.size() != params.num_classes())
    throw ConfigError(p, "expected " + std::to_string(params.num_classes()) +
                             " classes (L*J), got " +
                             std::to_string(model.classes.size()));
  return model;
}

Schedule parse_schedule(const json& v, const std::string& path,
                        const SystemParams& params) {
  Schedule s;
  if (!v.is_array() || v.size() != params.num_classes())
    throw ConfigError(path, "expected an array of L*J counts");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto c = integer(v[i], index(path, i));
    if (c < 0) throw ConfigError(index(path, i), "counts must be non-negative");
    s.counts.push_back(static_cast<int>(c));
  }
  if (s.total() > params.k_max())
    throw ConfigError(path, "schedule exceeds k_max transmissions");
  return s;
}

PolicySpec parse_policy(const json& pol, const SystemParams& params) {
  const std::string p = "policy";
  const auto kind = text(require(pol, "kind", p), "policy.kind");
  if (kind == "non_idling") {
    NonIdlingPolicy ni;
    if (pol.contains("selection")) {
      const auto sel = text(pol["selection"], "policy.selection");
      if (sel == "fcfs")
        ni.selection = Selection::fcfs;
      else if (sel == "random_uniform")
        ni.selection = Selection::random_uniform;
      else
        throw ConfigError("policy.selection", "expected fcfs or random_uniform");
    }
    return ni;
  }
  if (kind != "state_independent")
    throw ConfigError("policy.kind", "expected non_idling or state_independent");

  StateIndependentPolicy si;
  const auto& measure = require(pol, "measure", p);
  if (!measure.is_array() || measure.empty())
    throw ConfigError("policy.measure", "expected a nonempty array");
  for (std::size_t i = 0; i < measure.size(); ++i) {
    const auto ap = index("policy.measure", i);
    si.measure.atoms.push_back(
        {parse_schedule(require(measure[i], "schedule", ap), join(ap, "schedule"), params),
         number(require(measure[i], "prob", ap), join(ap, "prob"))});
  }
  if (pol.contains("assignment")) {
    const auto& rows = pol["assignment"];
    if (!rows.is_array()) throw ConfigError("policy.assignment", "expected an array");
    for (std::size_t i = 0; i < rows.size(); ++i)
      si.assignment.push_back(numbers(rows[i], index("policy.assignment", i)));
  }
  checked("policy", [&] { si.validate(params); });
  return si;
}

std::vector<double> optional_numbers(const json& doc, const std::string& section,
                                     const std::string& key,
                                     std::vector<double> fallback) {
  if (!doc.contains(section)) return fallback;
  const auto& s = doc[section];
  if (!s.is_object()) throw ConfigError(section, "expected an object");
  if (!s.contains(key)) return fallback;
  return numbers(s[key], join(section, key));
}

}  // namespace

RateVector ExperimentConfig::target_rate() const {
  return rate ? *rate : arrivals.rates();
}

SimConfig ExperimentConfig::sim_config() const {
  SimConfig c{params};
  c.arrivals = arrivals;
  c.policy = policy;
  c.horizon = horizon;
  c.seed = seed;
  c.quantum_mode = quantum_mode;
  return c;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("$", "config must be a JSON object");
  static const char* sections[] = {"system",   "arrivals",     "rate",     "policy",
                                   "simulation", "verdict",    "figure_equal",
                                   "validate", "sweep",        "capacity", "schedule_cap"};
  for (const auto& [key, value] : doc.items())
    if (!key.starts_with("_") &&
        std::find(std::begin(sections), std::end(sections), key) == std::end(sections))
      throw ConfigError(key, "unknown top-level field");
  ExperimentConfig cfg{parse_system(require(doc, "system", ""))};
  const auto& params = cfg.params;

  if (doc.contains("schedule_cap")) {
    cfg.schedule_cap = number(doc["schedule_cap"], "schedule_cap");
    if (!(cfg.schedule_cap >= 1.0)) throw ConfigError("schedule_cap", "must be >= 1");
  }

  if (doc.contains("arrivals")) {
    cfg.arrivals = parse_arrivals(doc["arrivals"], params);
  } else {
    for (std::size_t f = 0; f < params.num_classes(); ++f)
      cfg.arrivals.classes.push_back(ArrivalSpec::bernoulli(0.0));
  }

  if (doc.contains("rate")) {
    RateVector r{numbers(doc["rate"], "rate"), {}};
    checked("rate", [&] { r.validate(params); });
    cfg.rate = std::move(r);
  }

  if (doc.contains("policy")) cfg.policy = parse_policy(doc["policy"], params);

  if (doc.contains("simulation")) {
    const auto& s = doc["simulation"];
    const std::string p = "simulation";
    if (!s.is_object()) throw ConfigError(p, "expected an object");
    if (s.contains("horizon")) cfg.horizon = integer(s["horizon"], "simulation.horizon");
    if (s.contains("replications")) {
      const auto r = integer(s["replications"], "simulation.replications");
      if (r < 1) throw ConfigError("simulation.replications", "must be >= 1");
      cfg.replications = static_cast<std::size_t>(r);
    }
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !s["seed"].is_number_integer())
        throw ConfigError("simulation.seed", "expected a non-negative integer");
      cfg.seed = s["seed"].get<std::uint64_t>();
    }
    if (s.contains("threads")) {
      const auto t = integer(s["threads"], "simulation.threads");
      if (t < 0) throw ConfigError("simulation.threads", "must be >= 0");
      cfg.threads = static_cast<std::size_t>(t);
    }
    if (s.contains("quantum_mode")) {
      const auto m = text(s["quantum_mode"], "simulation.quantum_mode");
      if (m == "actual")
        cfg.quantum_mode = QuantumMode::actual;
      else if (m == "nominal")
        cfg.quantum_mode = QuantumMode::nominal;
      else
        throw ConfigError("simulation.quantum_mode", "expected actual or nominal");
    }
    if (s.contains("trace")) {
      const auto t = text(s["trace"], "simulation.trace");
      if (t == "none")
        cfg.trace_output = TraceOutput::none;
      else if (t == "first")
        cfg.trace_output = TraceOutput::first;
      else if (t == "all")
        cfg.trace_output = TraceOutput::all;
      else
        throw ConfigError("simulation.trace", "expected none, first or all");
    }
    if (s.contains("drift")) {
      const auto& d = s["drift"];
      if (!d.is_array()) throw ConfigError("simulation.drift", "expected an array");
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto dp = index("simulation.drift", i);
        DriftRequest req;
        if (d[i].is_string()) {
          req.functional = d[i].get<std::string>();
        } else {
          req.functional = text(require(d[i], "functional", dp), join(dp, "functional"));
          if (d[i].contains("min_value"))
            req.filter.min_value = number(d[i]["min_value"], join(dp, "min_value"));
          if (d[i].contains("burn_in")) {
            const auto b = integer(d[i]["burn_in"], join(dp, "burn_in"));
            if (b < 0) throw ConfigError(join(dp, "burn_in"), "must be >= 0");
            req.filter.burn_in = static_cast<std::size_t>(b);
          }
        }
        static const char* known[] = {"n",      "c_lemma1", "c_lemma2",
                                      "lemma1", "lemma2",   "omega_k_subclass"};
        if (std::find(std::begin(known), std::end(known), req.functional) ==
            std::end(known))
          throw ConfigError(join(dp, "functional"),
                            "unknown functional '" + req.functional + "'");
        cfg.drift.push_back(std::move(req));
      }
    }
  }
  if (cfg.horizon < 1) throw ConfigError("simulation.horizon", "must be >= 1");

  if (doc.contains("verdict")) {
    const auto& v = doc["verdict"];
    if (!v.is_object()) throw ConfigError("verdict", "expected an object");
    auto& o = cfg.verdict;
    if (v.contains("epsilon")) o.epsilon = number(v["epsilon"], "verdict.epsilon");
    if (v.contains("confidence")) {
      o.confidence = number(v["confidence"], "verdict.confidence");
      if (!(o.confidence > 0.0 && o.confidence < 1.0))
        throw ConfigError("verdict.confidence", "must be in (0, 1)");
    }
    if (v.contains("window_fraction")) {
      o.window_fraction = number(v["window_fraction"], "verdict.window_fraction");
      if (!(o.window_fraction > 0.0 && o.window_fraction <= 1.0))
        throw ConfigError("verdict.window_fraction", "must be in (0, 1]");
    }
    if (v.contains("batches")) {
      const auto b = integer(v["batches"], "verdict.batches");
      if (b < 2) throw ConfigError("verdict.batches", "must be >= 2");
      o.batches = static_cast<std::size_t>(b);
    }
    if (v.contains("max_backlog")) o.max_backlog = number(v["max_backlog"], "verdict.max_backlog");
    if (v.contains("min_length")) {
      const auto m = integer(v["min_length"], "verdict.min_length");
      if (m < 2) throw ConfigError("verdict.min_length", "must be >= 2");
      o.min_length = static_cast<std::size_t>(m);
    }
  }

  cfg.figure_gammas = optional_numbers(doc, "figure_equal", "gammas", cfg.figure_gammas);
  for (std::size_t i = 0; i < cfg.figure_gammas.size(); ++i)
    if (!(cfg.figure_gammas[i] > 0.0))
      throw ConfigError(index("figure_equal.gammas", i), "must be positive");
  for (double k : optional_numbers(doc, "figure_equal", "k_values", {})) {
    if (!(k >= 1.0) || std::floor(k) != k)
      throw ConfigError("figure_equal.k_values", "entries must be integers >= 1");
    cfg.figure_k.push_back(static_cast<int>(k));
  }
  if (cfg.figure_k.empty())
    for (int k = 1; k <= 50; ++k) cfg.figure_k.push_back(k);

  cfg.validate_multipliers =
      optional_numbers(doc, "validate", "multipliers", cfg.validate_multipliers);
  cfg.sweep_multipliers = optional_numbers(doc, "sweep", "multipliers", {});
  if (cfg.sweep_multipliers.empty())
    for (int i = 0; i <= 20; ++i) cfg.sweep_multipliers.push_back(i / 10.0);
  for (double m : cfg.validate_multipliers)
    if (!(m >= 0.0)) throw ConfigError("validate.multipliers", "must be >= 0");
  for (double m : cfg.sweep_multipliers)
    if (!(m >= 0.0)) throw ConfigError("sweep.multipliers", "must be >= 0");
  cfg.capacity_log_alphabets =
      optional_numbers(doc, "capacity", "log_alphabet_sizes", {});

  checked("arrivals", [&] { cfg.sim_config().validate(); });
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace macstab
