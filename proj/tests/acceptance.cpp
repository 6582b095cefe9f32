// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "macstab/analysis.hpp"
#include "macstab/core_model.hpp"
#include "macstab/regions.hpp"
#include "macstab/rng.hpp"
#include "macstab/sim.hpp"

using namespace macstab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SystemParams benchmark(int k, double snr = 1.0) {
  return SystemParams::from_snr(1.0, 1.0, 1.0, k, {snr},
                                {ServiceClass::from_alphabet(1e-3, 2.0)});
}

Outcome large_k_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = benchmark(10000);
  const double capacity = 10000 * phi_extrema(p).min_per_power[0];
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rel = std::abs(capacity - 0.5) / 0.5;
  return {rel <= 0.01 && secs < 1.0,
          fmt("K phi = %.10f (rel err %.2e) in %.3f s", capacity, rel, secs)};
}

Outcome figure_shape() {
  auto threshold = [](double gamma, int k) {
    return *equal_power_threshold(benchmark(k, gamma)).threshold_msgs_per_slot;
  };
  const double lo1 = threshold(0.01, 1), lo50 = threshold(0.01, 50);
  const double hi1 = threshold(100, 1), hi50 = threshold(100, 50);
  const bool pass = lo50 > lo1 && hi50 < hi1 && std::abs(hi1 - 0.5) <= 1e-3 &&
                    std::abs(hi50 - 0.0668) <= 1e-3;
  return {pass, fmt("gamma 0.01: %.6g -> %.6g; gamma 100: %.6g -> %.6g", lo1, lo50,
                    hi1, hi50)};
}

struct Tally {
  std::size_t stable = 0, unstable = 0, inconclusive = 0;
};

Tally replicate(SimConfig c, std::size_t reps) {
  Tally t;
  const auto rate = c.arrivals.rates();
  for (const auto& r : run_replications(c, reps)) {
    switch (stability_verdict(r.trace, rate).verdict) {
      case Verdict::stable: ++t.stable; break;
      case Verdict::unstable: ++t.unstable; break;
      case Verdict::inconclusive: ++t.inconclusive; break;
    }
  }
  return t;
}

constexpr std::size_t kReps = 20;
constexpr std::int64_t kHorizon = 200000;

bool at_least_95(std::size_t hits) { return hits * 100 >= 95 * kReps; }

Outcome k1_benchmark() {
  const double thr = 1.0 / 19;
  SimConfig c{benchmark(1)};
  c.horizon = kHorizon;
  c.seed = 2024;
  c.arrivals.classes = {ArrivalSpec::bernoulli(0.9 * thr)};
  const auto below = replicate(c, kReps);
  c.arrivals.classes = {ArrivalSpec::bernoulli(1.1 * thr)};
  const auto above = replicate(c, kReps);
  return {at_least_95(below.stable) && at_least_95(above.unstable),
          fmt("0.9x: %zu/%zu stable; 1.1x: %zu/%zu unstable", below.stable, kReps,
              above.unstable, kReps)};
}

Outcome omega_k() {
  const auto p = benchmark(2);
  StateIndependentPolicy pol;
  pol.measure.atoms = {{Schedule{{1}}, 0.5}, {Schedule{{2}}, 0.5}};
  const auto bounds = pol.subclass_bounds(p)[0];
  const double total = bounds[0] + bounds[1];
  pol.assignment = {{bounds[0] / total, bounds[1] / total}};

  SimConfig c{p};
  c.policy = pol;
  c.horizon = kHorizon;
  c.seed = 77;
  c.arrivals.classes = {ArrivalSpec::bernoulli(0.9 * total)};
  const auto below = replicate(c, kReps);
  c.arrivals.classes = {ArrivalSpec::bernoulli(1.1 * total)};
  const auto above = replicate(c, kReps);
  return {at_least_95(below.stable) && at_least_95(above.unstable),
          fmt("sum of bounds %.6g; 0.9x: %zu/%zu stable; 1.1x: %zu/%zu unstable", total,
              below.stable, kReps, above.unstable, kReps)};
}

SystemParams random_system(Rng& rng, int max_l, int max_j, int max_k,
                           double log_m_lo, double log_m_hi, double snr_hi) {
  const int l = 1 + static_cast<int>(rng.below(max_l));
  const int j = 1 + static_cast<int>(rng.below(max_j));
  const int k = 1 + static_cast<int>(rng.below(max_k));
  std::vector<double> snr;
  for (int i = 0; i < j; ++i) snr.push_back(0.01 + snr_hi * rng.uniform());
  std::vector<ServiceClass> cls;
  for (int i = 0; i < l; ++i) {
    ServiceClass c;
    c.error_prob = std::pow(10.0, -1.0 - 5 * rng.uniform());
    c.log_alphabet = log_m_lo + (log_m_hi - log_m_lo) * rng.uniform();
    cls.push_back(c);
  }
  return SystemParams::from_snr(0.05 + 0.95 * rng.uniform(), 1.0, 1.0, k, snr, cls);
}

ScheduleMeasure random_measure(const SystemParams& p, Rng& rng) {
  std::vector<Schedule> all;
  auto stream = enumerate_schedules(p, EnumMode::at_most);
  for (Schedule s; stream.next(s);) all.push_back(s);
  ScheduleMeasure m;
  double total = 0.0;
  for (const auto& s : all) {
    if (rng.uniform() < 0.5) continue;
    const double w = rng.uniform();
    m.atoms.push_back({s, w});
    total += w;
  }
  if (m.atoms.empty()) {
    m.atoms.push_back({all[rng.below(all.size())], 1.0});
    total = 1.0;
  }
  for (auto& a : m.atoms) a.prob /= total;
  return m;
}

Outcome region_consistency() {
  Rng rng(555, 0);
  std::size_t violations = 0, measures = 0, classified = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const auto p = random_system(rng, 2, 2, 4, std::log(2.0), 5.0, 10.0);
    for (int t = 0; t < 50; ++t) {
      const auto m = random_measure(p, rng);
      const auto lo = psi(p, m);
      const auto hi = psi_outer(p, m);
      ++measures;
      for (std::size_t i = 0; i < lo.size(); ++i)
        if (lo[i] > hi[i] * (1 + 1e-12)) ++violations;

      // A rate scaled around psi so both bounds get exercised.
      RateVector rate;
      for (double v : lo) rate.mean.push_back(v * 3 * rng.uniform());
      if (rate.total() >= 1.0) continue;
      const auto inner = check_inner_nonidling(p, rate);
      const auto outer = check_outer_nonidling(p, rate);
      ++classified;
      if (inner.holds() && outer.transient) ++violations;
    }
  }
  return {violations == 0 && classified > 0,
          fmt("%zu measures, %zu rates classified, %zu violations", measures, classified,
              violations)};
}

Outcome fine_quantization() {
  Rng rng(99, 0);
  std::size_t checked = 0, violations = 0;
  double worst = 1.0;
  for (int inst = 0; inst < 20; ++inst) {
    const auto p = random_system(rng, 2, 2, 3, 1e3, 1e6, 1.0);
    auto stream = enumerate_schedules(p, EnumMode::at_most);
    for (Schedule s; stream.next(s);) {
      for (std::size_t f = 0; f < p.num_classes(); ++f) {
        if (s.counts[f] == 0) continue;
        const auto c = p.class_of(f);
        const double q = phi(p, s, c.j);
        const double req = p.requirement(c.l);
        if (req / q < 1e4) continue;
        const double ratio = req / ceil_to_quantum(req, q);
        worst = std::min(worst, ratio);
        ++checked;
        if (ratio < 0.999) ++violations;
      }
    }
  }
  return {violations == 0 && checked > 0,
          fmt("%zu (schedule, class) pairs, worst ratio %.8f", checked, worst)};
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Outcome single_class_lp() {
  std::size_t lp_cases = 0, mismatches = 0;
  double worst = 0.0;
  Rng rng(31, 0);
  for (int k = 1; k <= 6; ++k) {
    for (int rep = 0; rep < 5; ++rep) {
      const double rho = 0.1 + 0.9 * rng.uniform();
      const double power = 0.05 + 20 * rng.uniform();
      const double pe = std::pow(10.0, -1.0 - 6 * rng.uniform());
      const double lnm = std::log(2.0) + 8 * rng.uniform();
      const SystemParams p(rho, 1.0, 1.0, k, {power}, {ServiceClass{pe, lnm}});
      const double ea = 1e-3 + 0.2 * rng.uniform();
      const RateVector rate{{ea}, {}};

      // Brute force straight from the model: n messages share the noise of
      // the other n - 1.
      const double req = -std::log(pe) + rho * lnm;
      double best_inner = 0.0, best_outer = 0.0;
      for (int n = 1; n <= k; ++n) {
        const double q =
            rho * std::log(1 + power / ((1 + rho) * (1.0 + (n - 1) * power)));
        const double ceiled = q * std::ceil(req / q - 1e-12);
        best_inner = std::max(best_inner, n * q / ceiled);
        best_outer = std::max(best_outer, n * q / req);
      }
      for (auto [mode, best] : {std::pair{MembershipMode::inner_policy, best_inner},
                                std::pair{MembershipMode::outer_measure, best_outer}}) {
        const double t = membership_lp(p, rate, mode).t_star;
        const double err = std::abs(t - best / ea) / (best / ea);
        worst = std::max(worst, err);
        ++lp_cases;
        if (err > 1e-9) ++mismatches;
      }
    }
  }

  std::size_t count_cases = 0;
  for (std::size_t dims = 1; dims <= 4; ++dims)
    for (int k = 0; k <= 6; ++k) {
      const double exact = binomial(k + static_cast<int>(dims) - 1, static_cast<int>(dims) - 1);
      const double at_most = binomial(k + static_cast<int>(dims), static_cast<int>(dims));
      for (auto [mode, expected] :
           {std::pair{EnumMode::exact, exact}, std::pair{EnumMode::at_most, at_most}}) {
        ScheduleStream stream(dims, k, mode);
        std::size_t n = 0;
        for (Schedule s; stream.next(s);) ++n;
        ++count_cases;
        if (static_cast<double>(n) != expected ||
            schedule_count(dims, k, mode) != expected)
          ++mismatches;
      }
    }
  return {mismatches == 0, fmt("%zu LP cases (worst rel err %.2e), %zu count cases, "
                               "%zu mismatches",
                               lp_cases, worst, count_cases, mismatches)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MACSTAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = os.str();
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("macstab_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::size_t runs = 0, failures = 0;
  std::string first_failure;
  for (const char* config : {"example.json", "omega_k.json"}) {
    const auto path = fs::path(MACSTAB_SOURCE_DIR) / "configs" / config;
    for (const char* command :
         {"regions", "simulate", "figure-equal", "validate", "sweep"}) {
      std::vector<std::map<std::string, std::string>> outputs;
      for (int pass = 0; pass < 2; ++pass) {
        const auto out = root / config / command / std::to_string(pass);
        const int code = run_cli(std::string(command) + " --config " + path.string() +
                                 " --out " + out.string() +
                                 " --horizon 5000 --replications 2");
        if (code != 0) {
          ++failures;
          if (first_failure.empty())
            first_failure = fmt("%s %s exited %d", command, config, code);
        }
        outputs.push_back(snapshot(out));
      }
      ++runs;
      if (outputs[0].empty() || outputs[0] != outputs[1]) {
        ++failures;
        if (first_failure.empty())
          first_failure = fmt("%s %s outputs differ", command, config);
      }
    }
  }
  fs::remove_all(root);
  return {failures == 0, fmt("%zu command/config pairs run twice%s%s", runs,
                             failures ? "; " : "", first_failure.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"large-K limit of K phi", large_k_limit},
      {"equal-power figure shape and anchors", figure_shape},
      {"K = 1 benchmark simulation", k1_benchmark},
      {"state-independent two-schedule policy", omega_k},
      {"region consistency on random instances", region_consistency},
      {"fine quantization ratio", fine_quantization},
      {"single-class LP and schedule counts", single_class_lp},
      {"CLI reproducibility", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
