#include "macstab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace macstab {

double c_lemma1(const SystemState& state, const PhiExtrema& extrema) {
  double c = 1.0;
  for (const auto& m : state.messages)
    c += static_cast<double>(
        quanta_needed(m.residual, extrema.min_per_power.at(m.cls.j)));
  return c;
}

double c_lemma1(const SystemState& state, const SystemParams& params) {
  return c_lemma1(state, phi_extrema(params));
}

double c_lemma2(const SystemState& state, const SystemParams& params,
                const PhiExtrema& extrema) {
  if (params.k_max() < 2) throw DomainError("lemma-2 functional needs K >= 2");
  double c = 1.0;
  for (const auto& m : state.messages)
    c += m.residual + extrema.max_per_power.at(m.cls.j);
  return c;
}

double c_lemma2(const SystemState& state, const SystemParams& params) {
  return c_lemma2(state, params, phi_extrema(params));
}

double r_subset(const SystemState& state, std::span<const std::size_t> subset) {
  double r = 0.0;
  for (const auto& m : state.messages)
    if (std::find(subset.begin(), subset.end(), m.cls.j) != subset.end())
      r += m.residual;
  return r;
}

double r_ceil(const SystemState& state, double quantum) {
  double r = 0.0;
  for (const auto& m : state.messages) r += ceil_to_quantum(m.residual, quantum);
  return r;
}

LyapunovEvaluator::LyapunovEvaluator(SystemParams params, RateVector rate,
                                     std::optional<StateIndependentPolicy> policy)
    : params_(std::move(params)),
      rate_(std::move(rate)),
      policy_(std::move(policy)),
      extrema_(phi_extrema(params_)) {
  rate_.validate(params_);
  inner_ = check_inner_nonidling(params_, rate_, extrema_);
  if (!policy_) return;
  policy_->validate(params_);
  const auto& atoms = policy_->measure.atoms;
  const std::size_t C = params_.num_classes();
  sub_rate_ = policy_->subclass_rates(params_, rate_);
  sub_quantum_.assign(C, std::vector<double>(atoms.size(), 0.0));
  sub_ceil_.assign(C, std::vector<double>(atoms.size(), 0.0));
  for (std::size_t f = 0; f < C; ++f) {
    const auto [l, j] = params_.class_of(f);
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      if (atoms[a].schedule.counts[f] == 0) continue;
      const double q = phi(params_, atoms[a].schedule, j);
      sub_quantum_[f][a] = q;
      sub_ceil_[f][a] = ceil_to_quantum(params_.requirement(l), q);
    }
  }
}

double LyapunovEvaluator::c_lemma1(const SystemState& state) const {
  return macstab::c_lemma1(state, extrema_);
}

double LyapunovEvaluator::c_lemma2(const SystemState& state) const {
  return macstab::c_lemma2(state, params_, extrema_);
}

double LyapunovEvaluator::lemma1_denominator() const {
  const double d = 2.0 * (inner_.pr3_rhs - inner_.pr3_lhs);
  if (!(d > 0.0))
    throw DomainError("lemma-1 functional undefined: pr3 does not hold strictly");
  return d;
}

double LyapunovEvaluator::lemma2_denominator() const {
  if (params_.k_max() < 2) throw DomainError("lemma-2 functional needs K >= 2");
  const double d = 2.0 * (inner_.pr4_rhs - *inner_.pr4_lhs);
  if (!(d > 0.0))
    throw DomainError("lemma-2 functional undefined: pr4 does not hold strictly");
  return d;
}

double LyapunovEvaluator::subclass_value(const SystemState& state) const {
  if (!policy_)
    throw DomainError("subclass functional needs a state-independent policy");
  const auto& atoms = policy_->measure.atoms;
  const std::size_t A = atoms.size();
  const std::size_t C = params_.num_classes();

  std::vector<double> c(C * A, 0.0);
  for (const auto& m : state.messages) {
    if (!m.assigned) throw DomainError("message has no assigned schedule");
    const std::size_t f = params_.flat_index(m.cls);
    const std::size_t a = *m.assigned;
    c[f * A + a] += ceil_to_quantum(m.residual, sub_quantum_[f].at(a));
  }

  double v = 0.0;
  for (std::size_t f = 0; f < C; ++f) {
    for (std::size_t a = 0; a < A; ++a) {
      const int count = atoms[a].schedule.counts[f];
      if (count == 0) continue;
      const double denom = 2.0 * (atoms[a].prob * count * sub_quantum_[f][a] -
                                  sub_ceil_[f][a] * sub_rate_[f][a]);
      if (!(denom > 0.0)) {
        const auto [l, j] = params_.class_of(f);
        throw DomainError("subclass functional undefined: subclass (" +
                          std::to_string(l + 1) + "," + std::to_string(j + 1) +
                          ", schedule " + std::to_string(a + 1) +
                          ") violates its rate bound");
      }
      v += c[f * A + a] * c[f * A + a] / denom;
    }
  }
  return v;
}

double LyapunovEvaluator::value(const SystemState& state,
                                const LyapunovKind& kind) const {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Lemma1>) {
          const double c = c_lemma1(state);
          return c * c / lemma1_denominator();
        } else if constexpr (std::is_same_v<K, Lemma2>) {
          const double c = c_lemma2(state);
          return c * c / lemma2_denominator();
        } else if constexpr (std::is_same_v<K, OmegaKSubclass>) {
          return subclass_value(state);
        } else {
          if (!(k.theta > 0.0 && k.theta < 1.0))
            throw DomainError("theta must lie in (0, 1)");
          double r = 0.0;
          switch (k.exponent) {
            case ThetaGeometric::Exponent::c:
              r = c_lemma1(state);
              break;
            case ThetaGeometric::Exponent::r_subset:
              r = r_subset(state, k.subset);
              break;
            case ThetaGeometric::Exponent::r_ceil:
              if (params_.num_power_classes() != 1)
                throw DomainError("r_ceil functional requires J = 1");
              r = r_ceil(state, extrema_.min_per_power[0]);
              break;
          }
          return 1.0 - std::pow(k.theta, r);
        }
      },
      kind);
}

double lyapunov_v(const SystemState& state, const SystemParams& params,
                  const RateVector& rate, const LyapunovKind& kind,
                  const StateIndependentPolicy* policy) {
  LyapunovEvaluator eval(params, rate,
                         policy ? std::optional(*policy) : std::nullopt);
  return eval.value(state, kind);
}

std::string DriftFilter::description() const {
  std::ostringstream os;
  os << "n >= " << burn_in;
  if (std::isfinite(min_value)) os << " and f >= " << min_value;
  return os.str();
}

DriftReport empirical_drift(std::span<const double> series,
                            const DriftFilter& filter, std::string name) {
  DriftReport r;
  r.functional = std::move(name);
  r.condition = filter.description();
  if (series.size() < 2) return r;

  // Welford accumulation of the one-step differences.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = filter.burn_in; i + 1 < series.size(); ++i) {
    if (series[i] < filter.min_value) continue;
    const double d = series[i + 1] - series[i];
    ++n;
    const double delta = d - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (d - mean);
  }
  r.samples = n;
  if (n == 0) return r;
  r.mean_drift = mean;
  r.standard_error =
      n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n))
            : 0.0;
  return r;
}

DriftReport empirical_drift(const Trace& trace, const DriftFilter& filter) {
  std::vector<double> series;
  series.reserve(trace.length() + 1);
  series.push_back(0.0);
  for (auto n : trace.n_total) series.push_back(n);
  return empirical_drift(series, filter, "n");
}

SlotObserver record_functional(std::vector<double>& out,
                               std::function<double(const SystemState&)> f) {
  return [&out, f = std::move(f)](const SystemState& s) { out.push_back(f(s)); };
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::stable:
      return "stable";
    case Verdict::unstable:
      return "unstable";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

StabilityVerdict stability_verdict(std::span<const std::int32_t> n_series,
                                   double total_arrival_mean,
                                   const VerdictOptions& options) {
  StabilityVerdict v;
  v.slope_threshold = options.epsilon * total_arrival_mean;
  const std::size_t N = n_series.size();
  if (N < options.min_length || N < 2) {
    v.reason = "trace shorter than the configured minimum";
    return v;
  }
  const auto window = static_cast<std::size_t>(
      std::floor(static_cast<double>(N) * options.window_fraction));
  const std::size_t batches =
      std::clamp<std::size_t>(options.batches, 2, std::max<std::size_t>(window, 2));
  const std::size_t m = window / batches;
  if (m == 0) {
    v.reason = "window too short for the batch count";
    return v;
  }
  const std::size_t start = N - batches * m;
  auto at = [&](std::size_t i) -> double {
    // Index start-1 refers to the state before the window; -1 is the empty
    // initial state.
    return i == 0 ? 0.0 : n_series[i - 1];
  };

  std::ostringstream desc;
  desc << "slots [" << start << ", " << N << "), " << batches << " batches of "
       << m;
  v.window = desc.str();

  std::vector<double> b(batches);
  for (std::size_t k = 0; k < batches; ++k)
    b[k] = (at(start + (k + 1) * m) - at(start + k * m)) / static_cast<double>(m);
  double mean = 0.0;
  for (double x : b) mean += x;
  mean /= static_cast<double>(batches);
  double ss = 0.0;
  for (double x : b) ss += (x - mean) * (x - mean);
  const double se =
      std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
  const boost::math::students_t dist(static_cast<double>(batches - 1));
  const double tq =
      boost::math::quantile(dist, 1.0 - (1.0 - options.confidence) / 2.0);

  v.slope = mean;
  v.ci_low = mean - tq * se;
  v.ci_high = mean + tq * se;
  for (std::size_t i = start; i < N; ++i)
    v.window_max_backlog = std::max<std::int64_t>(v.window_max_backlog, n_series[i]);

  if (v.slope > v.slope_threshold && v.ci_low > 0.0) {
    v.verdict = Verdict::unstable;
    v.reason = "backlog grows faster than epsilon times the arrival rate";
  } else if (v.ci_low <= 0.0 && v.ci_high >= 0.0 &&
             static_cast<double>(v.window_max_backlog) < options.max_backlog) {
    v.verdict = Verdict::stable;
    v.reason = "no detectable trend and bounded backlog";
  } else {
    v.verdict = Verdict::inconclusive;
    v.reason = "trend neither ruled out nor large enough";
  }
  return v;
}

StabilityVerdict stability_verdict(const Trace& trace, const RateVector& rate,
                                   const VerdictOptions& options) {
  return stability_verdict(trace.n_total, rate.total(), options);
}

}  // namespace macstab
