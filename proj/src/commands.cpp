#include "macstab/commands.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "macstab/errors.hpp"

namespace macstab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& doc) {
  write_file(path, doc.dump(2) + "\n");
}

json schedule_json(const Schedule& s) { return s.counts; }

json measure_json(const ScheduleMeasure& m) {
  json atoms = json::array();
  for (const auto& a : m.atoms)
    atoms.push_back({{"schedule", schedule_json(a.schedule)}, {"prob", a.prob}});
  return atoms;
}

const char* to_string(Membership::Position p) {
  switch (p) {
    case Membership::Position::interior:
      return "interior";
    case Membership::Position::boundary:
      return "boundary";
    case Membership::Position::exterior:
      return "exterior";
  }
  return "boundary";
}

json system_json(const SystemParams& p) {
  json classes = json::array();
  for (std::size_t l = 0; l < p.num_service_classes(); ++l) {
    const auto& c = p.service_class(l);
    classes.push_back({{"error_prob", c.error_prob},
                       {"log_alphabet_size", c.log_alphabet},
                       {"requirement_nats", p.requirement(l)}});
  }
  json snrs = json::array();
  for (std::size_t j = 0; j < p.num_power_classes(); ++j) snrs.push_back(p.snr(j));
  return {{"rho", p.rho()},
          {"bandwidth_hz", p.bandwidth()},
          {"noise_psd_w_per_hz", p.noise_psd()},
          {"k_max", p.k_max()},
          {"powers_w", p.powers()},
          {"snr", snrs},
          {"service_classes", classes}};
}

json inner_json(const InnerCheck& c) {
  json j = {{"rule", c.rule},
            {"pr3_lhs", c.pr3_lhs},
            {"pr3_rhs", c.pr3_rhs},
            {"pr3_holds", c.pr3_holds}};
  if (c.pr4_lhs) {
    j["pr4_lhs"] = *c.pr4_lhs;
    j["pr4_rhs"] = c.pr4_rhs;
    j["pr4_holds"] = c.pr4_holds;
  }
  return j;
}

json outer_json(const OuterCheck& c) {
  json subset = json::array();
  for (auto b : c.subset) subset.push_back(b + 1);
  return {{"transient", c.transient},
          {"rule", c.rule},
          {"subset", subset},
          {"lhs", c.lhs},
          {"rhs", c.rhs},
          {"best_margin", c.best_margin},
          {"subsets_checked", c.subsets_checked}};
}

std::string csv_field(const std::string& s) {
  return s.find(',') == std::string::npos ? s : "\"" + s + "\"";
}

const StateIndependentPolicy* state_independent(const ExperimentConfig& cfg) {
  return std::get_if<StateIndependentPolicy>(&cfg.policy);
}

// Theory label for a rate under the configured policy: stable, unstable or
// indeterminate. For state-independent policies each subclass is a queue
// of its own, stable below its bound and unstable above it.
std::string theory_label(const ExperimentConfig& cfg, const RateVector& rate,
                         const PhiExtrema& extrema) {
  if (const auto* si = state_independent(cfg)) {
    const auto bounds = si->subclass_bounds(cfg.params);
    const auto rates = si->subclass_rates(cfg.params, rate);
    bool all_below = true, some_above = false;
    for (std::size_t f = 0; f < bounds.size(); ++f)
      for (std::size_t a = 0; a < bounds[f].size(); ++a) {
        if (rates[f][a] >= bounds[f][a] && rates[f][a] > 0.0) all_below = false;
        if (rates[f][a] > bounds[f][a]) some_above = true;
      }
    if (all_below) return "stable";
    if (some_above) return "unstable";
    return "indeterminate";
  }
  const auto v = classify_nonidling(cfg.params, rate, extrema, cfg.schedule_cap);
  switch (v.classification) {
    case Classification::inner_stable:
      return "stable";
    case Classification::outer_transient:
      return "unstable";
    case Classification::indeterminate:
      break;
  }
  return "indeterminate";
}

double threshold_multiplier_for(const ExperimentConfig& cfg,
                                const RateVector& base,
                                const PhiExtrema& extrema) {
  const double inf = std::numeric_limits<double>::infinity();
  if (const auto* si = state_independent(cfg)) {
    const auto bounds = si->subclass_bounds(cfg.params);
    const auto rates = si->subclass_rates(cfg.params, base);
    double t = inf;
    for (std::size_t f = 0; f < bounds.size(); ++f)
      for (std::size_t a = 0; a < bounds[f].size(); ++a)
        if (rates[f][a] > 0.0) t = std::min(t, bounds[f][a] / rates[f][a]);
    return t;
  }
  const auto inner = check_inner_nonidling(cfg.params, base, extrema);
  return inner.pr3_lhs > 0.0 ? inner.pr3_rhs / inner.pr3_lhs : inf;
}

json verdict_json(const StabilityVerdict& v) {
  return {{"verdict", to_string(v.verdict)},
          {"slope", v.slope},
          {"ci_low", v.ci_low},
          {"ci_high", v.ci_high},
          {"slope_threshold", v.slope_threshold},
          {"window_max_backlog", v.window_max_backlog},
          {"window", v.window},
          {"reason", v.reason}};
}

json drift_json(const DriftReport& d) {
  return {{"functional", d.functional},
          {"mean_drift", d.mean_drift},
          {"standard_error", d.standard_error},
          {"samples", d.samples},
          {"condition", d.condition},
          {"conclusive", d.conclusive()}};
}

// Functional of the state for a drift request other than "n".
std::function<double(const SystemState&)> functional_for(
    const std::shared_ptr<const LyapunovEvaluator>& eval, const std::string& name) {
  if (name == "c_lemma1")
    return [eval](const SystemState& s) { return eval->c_lemma1(s); };
  if (name == "c_lemma2")
    return [eval](const SystemState& s) { return eval->c_lemma2(s); };
  LyapunovKind kind;
  if (name == "lemma1")
    kind = Lemma1{};
  else if (name == "lemma2")
    kind = Lemma2{};
  else
    kind = OmegaKSubclass{};
  return [eval, kind](const SystemState& s) { return eval->value(s, kind); };
}

struct Replicated {
  std::vector<RunResult> runs;
  std::vector<StabilityVerdict> verdicts;
  std::vector<std::vector<DriftReport>> drift;  // [replication][request]
  std::size_t stable = 0, unstable = 0, inconclusive = 0;

  std::string majority() const {
    const std::size_t n = runs.size();
    if (2 * stable > n) return "stable";
    if (2 * unstable > n) return "unstable";
    return "inconclusive";
  }
};

Replicated replicate(const ExperimentConfig& cfg, const ArrivalModel& arrivals,
                     bool with_drift) {
  SimConfig base = cfg.sim_config();
  base.arrivals = arrivals;
  const RateVector rate = arrivals.rates();

  std::vector<std::function<double(const SystemState&)>> fns;
  std::vector<std::size_t> fn_request;
  if (with_drift) {
    std::shared_ptr<const LyapunovEvaluator> eval;
    const auto* si = state_independent(cfg);
    for (std::size_t i = 0; i < cfg.drift.size(); ++i) {
      const auto& name = cfg.drift[i].functional;
      if (name == "n") continue;
      if (!eval)
        eval = std::make_shared<const LyapunovEvaluator>(
            cfg.params, rate, si ? std::optional(*si) : std::nullopt);
      auto f = functional_for(eval, name);
      f(SystemState{});  // surfaces undefined functionals before any run
      fns.push_back(std::move(f));
      fn_request.push_back(i);
    }
  }

  std::vector<std::vector<std::vector<double>>> series(
      cfg.replications, std::vector<std::vector<double>>(fns.size()));
  ObserverFactory factory;
  if (!fns.empty()) {
    factory = [&](std::size_t r) -> SlotObserver {
      return [&, r](const SystemState& s) {
        for (std::size_t i = 0; i < fns.size(); ++i) series[r][i].push_back(fns[i](s));
      };
    };
  }

  Replicated out;
  out.runs = run_replications(base, cfg.replications, cfg.threads, factory);
  for (std::size_t r = 0; r < out.runs.size(); ++r) {
    auto v = stability_verdict(out.runs[r].trace, rate, cfg.verdict);
    switch (v.verdict) {
      case Verdict::stable:
        ++out.stable;
        break;
      case Verdict::unstable:
        ++out.unstable;
        break;
      case Verdict::inconclusive:
        ++out.inconclusive;
        break;
    }
    out.verdicts.push_back(std::move(v));

    std::vector<DriftReport> reports;
    if (with_drift) {
      std::size_t next_fn = 0;
      for (std::size_t i = 0; i < cfg.drift.size(); ++i) {
        if (cfg.drift[i].functional == "n") {
          reports.push_back(empirical_drift(out.runs[r].trace, cfg.drift[i].filter));
        } else {
          reports.push_back(empirical_drift(series[r][next_fn], cfg.drift[i].filter,
                                            cfg.drift[i].functional));
          series[r][next_fn].clear();
          series[r][next_fn].shrink_to_fit();
          ++next_fn;
        }
      }
    }
    out.drift.push_back(std::move(reports));
  }
  return out;
}

std::string rep_trace_name(std::size_t r) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "trace_rep%03zu.csv", r);
  return buf;
}

}  // namespace

double threshold_multiplier(const ExperimentConfig& cfg) {
  const auto extrema = phi_extrema(cfg.params, cfg.schedule_cap);
  return threshold_multiplier_for(cfg, cfg.arrivals.rates(), extrema);
}

json cmd_regions(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto& p = cfg.params;
  const auto extrema = phi_extrema(p, cfg.schedule_cap);
  const RateVector rate = cfg.target_rate();

  json doc;
  doc["command"] = "regions";
  doc["system"] = system_json(p);
  doc["phi"] = {{"min_per_power_nats", extrema.min_per_power},
                {"max_per_power_nats", extrema.max_per_power},
                {"min_total_nats", extrema.min_total}};
  doc["rate"] = {{"msgs_per_slot", rate.mean},
                 {"msgs_per_sec", rate.per_second(p.bandwidth())},
                 {"nats_per_sec", nat_region_scale(p, rate.mean, true)}};

  const auto v = classify_nonidling(p, rate, extrema, cfg.schedule_cap);
  doc["nonidling"] = {{"classification", to_string(v.classification)},
                      {"witness", v.witness},
                      {"inner", inner_json(v.inner)},
                      {"outer", outer_json(v.outer)}};
  doc["limit_threshold_nats_per_slot"] = limit_threshold(p);

  if (p.num_power_classes() == 1) {
    const auto eq = equal_power_threshold(p);
    json e = {{"phi_min_nats", eq.phi_min},
              {"capacity_nats_per_slot", eq.capacity_nats_per_slot},
              {"weights_nats", eq.weights},
              {"stable", eq.stable(rate)},
              {"transient", eq.transient(rate)}};
    if (eq.threshold_msgs_per_slot) {
      e["threshold_msgs_per_slot"] = *eq.threshold_msgs_per_slot;
      e["threshold_nats_per_sec"] = *eq.threshold_msgs_per_slot * p.bandwidth() *
                                    p.service_class(0).log_alphabet;
    }
    doc["equal_power"] = e;
  }

  if (p.num_power_classes() == 1 && p.num_service_classes() == 1) {
    auto alphabets = cfg.capacity_log_alphabets;
    if (alphabets.empty())
      alphabets = {p.service_class(0).log_alphabet, 10.0, 100.0, 1000.0, 1e4, 1e6};
    const auto curve = capacity_curve_f1(p, alphabets);
    json pts = json::array();
    for (const auto& pt : curve.points)
      pts.push_back({{"log_alphabet_size", pt.log_alphabet},
                     {"nats_per_sec", pt.nats_per_sec}});
    doc["capacity_f1"] = {{"points", pts},
                          {"limit_nats_per_sec", curve.limit_nats_per_sec},
                          {"rho_to_zero_supremum_nats_per_sec",
                           curve.supremum_nats_per_sec}};
  }

  if (rate.total() > 0.0) {
    json mem;
    for (auto [mode, name] : {std::pair{MembershipMode::inner_policy, "inner"},
                              std::pair{MembershipMode::outer_measure, "outer"}}) {
      const auto m = membership_lp(p, rate, mode, cfg.schedule_cap);
      mem[name] = {{"t_star", m.t_star},
                   {"position", to_string(m.position())},
                   {"columns", m.columns},
                   {"measure", measure_json(m.measure)}};
    }
    doc["membership"] = mem;
  }

  if (const auto* si = state_independent(cfg)) {
    const auto ps = psi(p, si->measure);
    ScheduleMeasure as_outer = si->measure;
    as_outer.role = ScheduleMeasure::Role::outer;
    const auto outer = psi_outer(p, as_outer);
    const auto bounds = si->subclass_bounds(p);
    const auto rates = si->subclass_rates(p, rate);
    bool holds = true;
    for (std::size_t f = 0; f < bounds.size(); ++f)
      for (std::size_t a = 0; a < bounds[f].size(); ++a)
        if (rates[f][a] > 0.0 && !(rates[f][a] < bounds[f][a])) holds = false;
    doc["state_independent"] = {
        {"measure", measure_json(si->measure)},
        {"psi_msgs_per_slot", ps},
        {"psi_nats_per_sec", nat_region_scale(p, ps, true)},
        {"Psi_msgs_per_slot", outer},
        {"Psi_nats_per_sec", nat_region_scale(p, outer, true)},
        {"subclass_bounds", bounds},
        {"subclass_rates", rates},
        {"sufficient_condition_holds", holds}};
  }

  write_json(out_dir / "regions.json", doc);
  return doc;
}

json cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto& p = cfg.params;
  const RateVector rate = cfg.arrivals.rates();
  const auto extrema = phi_extrema(p, cfg.schedule_cap);
  const auto rep = replicate(cfg, cfg.arrivals, true);
  const std::size_t C = p.num_classes();

  json reps = json::array();
  double time_avg = 0.0, slope = 0.0;
  std::uint64_t departures = 0;
  std::vector<double> per_class(C, 0.0);
  for (std::size_t r = 0; r < rep.runs.size(); ++r) {
    const auto& s = rep.runs[r].summary;
    json drift = json::array();
    for (const auto& d : rep.drift[r]) drift.push_back(drift_json(d));
    reps.push_back({{"replication", r},
                    {"slots", s.slots},
                    {"time_avg_n", s.time_avg_n},
                    {"per_class_mean_n", s.per_class_mean_n},
                    {"arrivals", s.arrivals},
                    {"departures", s.departures},
                    {"departures_per_class", s.departures_per_class},
                    {"mean_sojourn_slots", s.mean_sojourn_slots},
                    {"final_n", s.final_n},
                    {"max_n", s.max_n},
                    {"verdict", verdict_json(rep.verdicts[r])},
                    {"drift", drift}});
    time_avg += s.time_avg_n;
    slope += rep.verdicts[r].slope;
    departures += s.departures;
    for (std::size_t f = 0; f < C; ++f) per_class[f] += s.per_class_mean_n[f];
  }
  const double n = static_cast<double>(rep.runs.size());
  for (auto& x : per_class) x /= n;

  const double t0 = threshold_multiplier_for(cfg, rate, extrema);
  const double margin = std::isfinite(t0) ? std::abs(1.0 - 1.0 / t0) : 1.0;

  json doc;
  doc["command"] = "simulate";
  doc["settings"] = {{"horizon", cfg.horizon},
                     {"replications", cfg.replications},
                     {"seed", cfg.seed},
                     {"quantum_mode", to_string(cfg.quantum_mode)},
                     {"policy", state_independent(cfg) ? "state_independent"
                                                       : "non_idling"}};
  doc["rate_msgs_per_slot"] = rate.mean;
  doc["time_avg_n"] = time_avg / n;
  doc["per_class_mean_n"] = per_class;
  doc["departures"] = departures;
  doc["slope_estimate"] = slope / n;
  doc["theory"] = theory_label(cfg, rate, extrema);
  doc["threshold_multiplier"] = std::isfinite(t0) ? json(t0) : json(nullptr);
  doc["boundary_margin"] = margin;
  doc["near_boundary"] = margin < 0.05;
  doc["aggregate"] = {{"stable", rep.stable},
                      {"unstable", rep.unstable},
                      {"inconclusive", rep.inconclusive},
                      {"majority", rep.majority()}};
  doc["replications"] = reps;

  fs::create_directories(out_dir);
  if (cfg.trace_output != TraceOutput::none) {
    const std::size_t count =
        cfg.trace_output == TraceOutput::first ? 1 : rep.runs.size();
    for (std::size_t r = 0; r < count; ++r) {
      std::ostringstream os;
      rep.runs[r].trace.write_csv(os, p);
      write_file(out_dir / (cfg.trace_output == TraceOutput::first ? "trace.csv"
                                                                   : rep_trace_name(r)),
                 os.str());
    }
  }
  write_json(out_dir / "summary.json", doc);
  return doc;
}

std::string cmd_figure_equal(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto& p = cfg.params;
  if (p.num_power_classes() != 1 || p.num_service_classes() != 1)
    throw ConfigError("system", "figure-equal needs one service class and one power class");
  const double ln_m = p.service_class(0).log_alphabet;

  std::string csv = "gamma,k,threshold_msgs_per_slot,threshold_nats_per_sec\n";
  for (double gamma : cfg.figure_gammas) {
    for (int k : cfg.figure_k) {
      const auto params = SystemParams::from_snr(p.rho(), p.bandwidth(), p.noise_psd(),
                                                 k, {gamma}, p.service_classes());
      const double thr = *equal_power_threshold(params).threshold_msgs_per_slot;
      csv += format_number(gamma) + "," + std::to_string(k) + "," +
             format_number(thr) + "," + format_number(thr * p.bandwidth() * ln_m) + "\n";
    }
  }
  write_file(out_dir / "figure_equal.csv", csv);
  return csv;
}

json cmd_validate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto& p = cfg.params;
  const auto extrema = phi_extrema(p, cfg.schedule_cap);
  const RateVector base = cfg.arrivals.rates();
  if (!(base.total() > 0.0))
    throw ConfigError("arrivals", "validate needs a nonzero arrival direction");
  const double t0 = threshold_multiplier_for(cfg, base, extrema);
  if (!std::isfinite(t0))
    throw ConfigError("arrivals", "no finite threshold along the arrival direction");

  std::string csv =
      "multiplier,total_rate_msgs_per_slot,theory,sim_verdict,stable_reps,"
      "unstable_reps,inconclusive_reps,agreement\n";
  json rows = json::array();
  for (double m : cfg.validate_multipliers) {
    ArrivalModel arrivals;
    try {
      arrivals = cfg.arrivals.scaled(m * t0);
      arrivals.validate(p);
    } catch (const DomainError& e) {
      throw ConfigError("validate.multipliers",
                        "multiplier " + format_number(m) + ": " + e.what());
    }
    const RateVector rate = arrivals.rates();
    const std::string theory = std::abs(m - 1.0) <= 1e-9
                                   ? std::string("boundary")
                                   : theory_label(cfg, rate, extrema);
    const auto rep = replicate(cfg, arrivals, false);
    const std::string sim = rep.majority();
    std::string agreement = "n/a";
    if ((theory == "stable" || theory == "unstable") && sim != "inconclusive")
      agreement = theory == sim ? "agree" : "disagree";

    csv += format_number(m) + "," + format_number(rate.total()) + "," + theory + "," +
           sim + "," + std::to_string(rep.stable) + "," + std::to_string(rep.unstable) +
           "," + std::to_string(rep.inconclusive) + "," + agreement + "\n";
    json verdicts = json::array();
    for (const auto& v : rep.verdicts) verdicts.push_back(verdict_json(v));
    rows.push_back({{"multiplier", m},
                    {"rate_msgs_per_slot", rate.mean},
                    {"total_rate_msgs_per_slot", rate.total()},
                    {"theory", theory},
                    {"sim_verdict", sim},
                    {"stable_reps", rep.stable},
                    {"unstable_reps", rep.unstable},
                    {"inconclusive_reps", rep.inconclusive},
                    {"agreement", agreement},
                    {"replications", verdicts}});
  }

  json doc = {{"command", "validate"},
              {"threshold_multiplier", t0},
              {"threshold_total_msgs_per_slot", base.total() * t0},
              {"rows", rows}};
  write_file(out_dir / "validate.csv", csv);
  write_json(out_dir / "validate.json", doc);
  return doc;
}

std::string cmd_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto& p = cfg.params;
  const auto extrema = phi_extrema(p, cfg.schedule_cap);
  const RateVector dir = cfg.target_rate();

  double t_inner = std::numeric_limits<double>::quiet_NaN();
  double t_outer = t_inner;
  if (dir.total() > 0.0) {
    t_inner = membership_lp(p, dir, MembershipMode::inner_policy, cfg.schedule_cap).t_star;
    t_outer = membership_lp(p, dir, MembershipMode::outer_measure, cfg.schedule_cap).t_star;
  }

  std::string csv =
      "multiplier,total_rate_msgs_per_slot,total_rate_nats_per_sec,classification,"
      "witness,pr3_lhs,pr4_lhs,t_inner,t_outer\n";
  for (double m : cfg.sweep_multipliers) {
    const RateVector rate = dir.scaled(m);
    double nats = 0.0;
    for (double x : nat_region_scale(p, rate.mean, true)) nats += x;
    const auto v = classify_nonidling(p, rate, extrema, cfg.schedule_cap);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    auto scaled_t = [&](double t) { return std::isnan(t) ? nan : (m > 0.0 ? t / m : inf); };
    csv += format_number(m) + "," + format_number(rate.total()) + "," +
           format_number(nats) + "," + to_string(v.classification) + "," + csv_field(v.witness) +
           "," + format_number(v.inner.pr3_lhs) + "," +
           (v.inner.pr4_lhs ? format_number(*v.inner.pr4_lhs) : std::string()) + "," +
           format_number(scaled_t(t_inner)) + "," + format_number(scaled_t(t_outer)) +
           "\n";
  }
  write_file(out_dir / "sweep.csv", csv);
  return csv;
}

}  // namespace macstab
