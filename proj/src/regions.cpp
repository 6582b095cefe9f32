#include "macstab/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "macstab/simplex.hpp"

namespace macstab {

namespace {

constexpr double kEqualityRelTol = 1e-12;

bool at_least(double lhs, double rhs) {
  return lhs >= rhs - kEqualityRelTol * std::max(std::abs(lhs), std::abs(rhs));
}

struct ColumnQuanta {
  std::vector<int> columns;
  std::vector<double> quanta;  // phi_j for each power class
};

std::vector<ColumnQuanta> full_column_schedules(const SystemParams& params,
                                                double cap) {
  const std::size_t J = params.num_power_classes();
  require_within_cap(schedule_count(J, params.k_max(), EnumMode::exact), cap,
                     "transience check");
  std::vector<ColumnQuanta> out;
  ScheduleStream stream(J, params.k_max(), EnumMode::exact);
  Schedule cols;
  while (stream.next(cols)) {
    ColumnQuanta cq{cols.counts, std::vector<double>(J, 0.0)};
    for (std::size_t j = 0; j < J; ++j)
      cq.quanta[j] = phi_from_columns(params, cols.counts, j);
    out.push_back(std::move(cq));
  }
  return out;
}

std::string subset_label(const std::vector<std::size_t>& subset) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < subset.size(); ++i)
    os << (i ? "," : "") << subset[i] + 1;
  os << "}";
  return os.str();
}

}  // namespace

double RateVector::total() const {
  return std::accumulate(mean.begin(), mean.end(), 0.0);
}

std::vector<double> RateVector::per_second(double bandwidth_w) const {
  std::vector<double> out(mean.size());
  std::transform(mean.begin(), mean.end(), out.begin(),
                 [&](double a) { return a * bandwidth_w; });
  return out;
}

void RateVector::validate(const SystemParams& params) const {
  if (mean.size() != params.num_classes())
    throw DomainError("rate vector must have L*J entries");
  for (double a : mean)
    if (!(a >= 0.0) || !std::isfinite(a))
      throw DomainError("arrival means must be finite and non-negative");
  if (!second_moment.empty() && second_moment.size() != mean.size())
    throw DomainError("second moments must have L*J entries");
}

RateVector RateVector::scaled(double factor) const {
  RateVector out = *this;
  for (double& a : out.mean) a *= factor;
  for (double& a : out.second_moment) a *= factor;
  return out;
}

void ScheduleMeasure::validate(const SystemParams& params) const {
  double sum = 0.0;
  for (const auto& atom : atoms) {
    if (!(atom.prob >= 0.0) || !std::isfinite(atom.prob))
      throw DomainError("schedule probabilities must be non-negative");
    if (atom.schedule.counts.size() != params.num_classes())
      throw DomainError("schedule dimension does not match L*J");
    for (int c : atom.schedule.counts)
      if (c < 0) throw DomainError("schedule counts must be non-negative");
    if (atom.schedule.total() > params.k_max())
      throw DomainError("schedule exceeds K simultaneous transmissions");
    sum += atom.prob;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DomainError("schedule probabilities must sum to 1");
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::inner_stable:
      return "inner_stable";
    case Classification::outer_transient:
      return "outer_transient";
    case Classification::indeterminate:
      return "indeterminate";
  }
  return "indeterminate";
}

std::string InnerCheck::witness() const {
  if (pr3_holds) return rule == "theorem1" ? "theorem1" : "pr3";
  if (pr4_holds) return "pr4";
  return {};
}

InnerCheck check_inner_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema) {
  rate.validate(params);
  const int K = params.k_max();
  InnerCheck out;
  out.rule = K == 1 ? "theorem1" : "pr3_pr4";
  out.pr3_rhs = K;
  out.pr4_rhs = extrema.min_total;
  double pr4 = 0.0;
  for (std::size_t f = 0; f < rate.mean.size(); ++f) {
    const auto [l, j] = params.class_of(f);
    const double s = params.requirement(l);
    out.pr3_lhs += rate.mean[f] *
                   static_cast<double>(quanta_needed(s, extrema.min_per_power[j]));
    pr4 += rate.mean[f] * (s + extrema.max_per_power[j]);
  }
  out.pr3_holds = out.pr3_lhs < out.pr3_rhs;
  if (K >= 2) {
    out.pr4_lhs = pr4;
    out.pr4_holds = pr4 < out.pr4_rhs;
  }
  return out;
}

InnerCheck check_inner_nonidling(const SystemParams& params,
                                 const RateVector& rate) {
  return check_inner_nonidling(params, rate, phi_extrema(params));
}

OuterCheck check_outer_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema, double cap) {
  rate.validate(params);
  const std::size_t J = params.num_power_classes();
  const std::size_t L = params.num_service_classes();
  const int K = params.k_max();
  OuterCheck out;
  out.best_margin = -std::numeric_limits<double>::infinity();

  if (K == 1) {
    double lhs = 0.0;
    for (std::size_t f = 0; f < rate.mean.size(); ++f) {
      const auto [l, j] = params.class_of(f);
      lhs += rate.mean[f] * static_cast<double>(quanta_needed(
                                params.requirement(l), extrema.min_per_power[j]));
    }
    out.lhs = lhs;
    out.rhs = 1.0;
    out.best_margin = lhs - 1.0;
    if (lhs > 1.0) {
      out.transient = true;
      out.rule = "theorem1";
    }
    return out;
  }

  if (J > kMaxSubsetPowerClasses)
    throw CapacityError("transience check: J = " + std::to_string(J) +
                            " power classes exceeds the subset limit of " +
                            std::to_string(kMaxSubsetPowerClasses),
                        std::ldexp(1.0, static_cast<int>(J)) - 1.0);

  const auto schedules = full_column_schedules(params, cap);
  for (std::uint32_t mask = 1; mask < (1u << J); ++mask) {
    ++out.subsets_checked;
    double lhs = 0.0;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < J; ++j)
        if (mask & (1u << j))
          lhs += params.requirement(l) * rate.mean[params.flat_index({l, j})];
    double rhs = 0.0;
    for (const auto& cq : schedules) {
      double v = 0.0;
      for (std::size_t j = 0; j < J; ++j)
        if (mask & (1u << j)) v += cq.columns[j] * cq.quanta[j];
      rhs = std::max(rhs, v);
    }
    if (lhs - rhs > out.best_margin) {
      out.best_margin = lhs - rhs;
      out.lhs = lhs;
      out.rhs = rhs;
      out.subset.clear();
      for (std::size_t j = 0; j < J; ++j)
        if (mask & (1u << j)) out.subset.push_back(j);
    }
  }
  if (at_least(out.lhs, out.rhs)) {
    out.transient = true;
    out.rule = "tran1";
  }

  if (!out.transient && J == 1) {
    const auto eq = equal_power_threshold(params);
    double lhs = 0.0;
    for (std::size_t l = 0; l < L; ++l) lhs += rate.mean[l] * eq.weights[l];
    out.best_margin = std::max(out.best_margin, lhs - eq.capacity_nats_per_slot);
    if (lhs > eq.capacity_nats_per_slot) {
      out.transient = true;
      out.rule = "equal_power";
      out.subset = {0};
      out.lhs = lhs;
      out.rhs = eq.capacity_nats_per_slot;
    }
  }
  return out;
}

OuterCheck check_outer_nonidling(const SystemParams& params,
                                 const RateVector& rate) {
  return check_outer_nonidling(params, rate, phi_extrema(params));
}

RegionVerdict classify_nonidling(const SystemParams& params,
                                 const RateVector& rate) {
  return classify_nonidling(params, rate, phi_extrema(params));
}

RegionVerdict classify_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema, double cap) {
  RegionVerdict v;
  v.inner = check_inner_nonidling(params, rate, extrema);
  v.outer = check_outer_nonidling(params, rate, extrema, cap);
  if (v.inner.holds()) {
    v.classification = Classification::inner_stable;
    v.witness = v.inner.witness();
  } else if (v.outer.transient) {
    v.classification = Classification::outer_transient;
    v.witness = v.outer.rule;
    if (v.outer.rule == "tran1") v.witness += " B=" + subset_label(v.outer.subset);
  }
  return v;
}

double limit_threshold(const SystemParams& params) {
  return params.rho() / (1.0 + params.rho());
}

bool EqualPowerThreshold::stable(const RateVector& rate) const {
  double lhs = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) lhs += rate.mean.at(l) * weights[l];
  return lhs < capacity_nats_per_slot;
}

bool EqualPowerThreshold::transient(const RateVector& rate) const {
  double lhs = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) lhs += rate.mean.at(l) * weights[l];
  return lhs > capacity_nats_per_slot;
}

EqualPowerThreshold equal_power_threshold(const SystemParams& params) {
  if (params.num_power_classes() != 1)
    throw DomainError("equal-power threshold requires J = 1");
  const auto extrema = phi_extrema(params);
  EqualPowerThreshold out;
  out.phi_min = extrema.min_per_power[0];
  out.capacity_nats_per_slot = params.k_max() * out.phi_min;
  for (std::size_t l = 0; l < params.num_service_classes(); ++l)
    out.weights.push_back(ceil_to_quantum(params.requirement(l), out.phi_min));
  if (params.num_service_classes() == 1)
    out.threshold_msgs_per_slot = out.capacity_nats_per_slot / out.weights[0];
  return out;
}

CapacityCurve capacity_curve_f1(const SystemParams& params,
                                const std::vector<double>& log_alphabets) {
  if (params.num_power_classes() != 1 || params.num_service_classes() != 1)
    throw DomainError("capacity curve requires L = J = 1");
  const double W = params.bandwidth();
  const double K = params.k_max();
  const double rho = params.rho();
  const double P = params.power(0);
  const double N0W = params.noise_power();
  const double phi_min = phi_extrema(params).min_per_power[0];
  const double neg_log_pe = -std::log(params.service_class(0).error_prob);

  CapacityCurve out;
  for (double log_m : log_alphabets) {
    if (!(log_m > 0.0)) throw DomainError("ln M must be positive");
    const double s = neg_log_pe + rho * log_m;
    out.points.push_back(
        {log_m, W * K * phi_min * log_m / ceil_to_quantum(s, phi_min)});
  }
  out.limit_nats_per_sec =
      K * W * std::log1p(P / ((1.0 + rho) * ((K - 1.0) * P + N0W)));
  const double gamma = P / N0W;
  out.supremum_nats_per_sec = K * W * std::log1p(gamma / ((K - 1.0) * gamma + 1.0));
  return out;
}

double inner_coefficient(const SystemParams& params, const Schedule& s,
                         std::size_t flat) {
  const int n = s.counts.at(flat);
  if (n <= 0) return 0.0;
  const auto [l, j] = params.class_of(flat);
  const double q = phi(params, s, j);
  return n * q / ceil_to_quantum(params.requirement(l), q);
}

double outer_coefficient(const SystemParams& params, const Schedule& s,
                         std::size_t flat) {
  const int n = s.counts.at(flat);
  if (n <= 0) return 0.0;
  const auto [l, j] = params.class_of(flat);
  return n * phi(params, s, j) / params.requirement(l);
}

namespace {

template <typename Coefficient>
std::vector<double> weighted_coefficients(const SystemParams& params,
                                          const ScheduleMeasure& measure,
                                          Coefficient coefficient) {
  measure.validate(params);
  std::vector<double> out(params.num_classes(), 0.0);
  for (const auto& atom : measure.atoms) {
    if (atom.prob == 0.0) continue;
    for (std::size_t f = 0; f < out.size(); ++f)
      out[f] += atom.prob * coefficient(params, atom.schedule, f);
  }
  return out;
}

}  // namespace

std::vector<double> psi(const SystemParams& params,
                        const ScheduleMeasure& measure) {
  return weighted_coefficients(params, measure, inner_coefficient);
}

std::vector<double> psi_outer(const SystemParams& params,
                              const ScheduleMeasure& measure) {
  return weighted_coefficients(params, measure, outer_coefficient);
}

Membership::Position Membership::position(double tol) const {
  if (t_star > 1.0 + tol) return Position::interior;
  if (t_star >= 1.0 - tol) return Position::boundary;
  return Position::exterior;
}

Membership membership_lp(const SystemParams& params, const RateVector& target,
                         MembershipMode mode, double cap) {
  target.validate(params);
  if (!(target.total() > 0.0))
    throw DomainError("membership target must be nonzero");
  require_within_cap(
      schedule_count(params.num_classes(), params.k_max(), EnumMode::at_most),
      cap, "membership_lp");

  std::vector<std::size_t> active;
  for (std::size_t f = 0; f < target.mean.size(); ++f)
    if (target.mean[f] > 0.0) active.push_back(f);

  // One LP column per schedule that serves some targeted class. The
  // relaxation sum p <= 1 is tight up to mass parked on the empty schedule,
  // which contributes nothing.
  std::vector<Schedule> schedules;
  std::vector<std::vector<double>> coeffs;
  auto stream = enumerate_schedules(params, EnumMode::at_most);
  Schedule s;
  while (stream.next(s)) {
    std::vector<double> c(active.size());
    bool useful = false;
    for (std::size_t a = 0; a < active.size(); ++a) {
      c[a] = mode == MembershipMode::inner_policy
                 ? inner_coefficient(params, s, active[a])
                 : outer_coefficient(params, s, active[a]);
      useful = useful || c[a] > 0.0;
    }
    if (!useful) continue;
    schedules.push_back(s);
    coeffs.push_back(std::move(c));
  }

  Membership out;
  out.columns = schedules.size();
  out.measure.role = mode == MembershipMode::inner_policy
                         ? ScheduleMeasure::Role::policy
                         : ScheduleMeasure::Role::outer;

  double leftover = 1.0;
  if (!schedules.empty()) {
    const std::size_t n = schedules.size() + 1;  // last variable is t
    simplex::Problem lp;
    lp.num_vars = n;
    lp.objective.assign(n, 0.0);
    lp.objective.back() = 1.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      std::vector<double> row(n, 0.0);
      for (std::size_t k = 0; k < schedules.size(); ++k) row[k] = -coeffs[k][a];
      row.back() = target.mean[active[a]];
      lp.rows.push_back(std::move(row));
      lp.rhs.push_back(0.0);
    }
    std::vector<double> mass(n, 1.0);
    mass.back() = 0.0;
    lp.rows.push_back(std::move(mass));
    lp.rhs.push_back(1.0);

    const auto sol = simplex::maximize(lp);
    out.t_star = sol.value;
    double used = 0.0;
    for (std::size_t k = 0; k < schedules.size(); ++k) {
      if (sol.x[k] <= 0.0) continue;
      out.measure.atoms.push_back({schedules[k], sol.x[k]});
      used += sol.x[k];
    }
    leftover = std::max(0.0, 1.0 - used);
  }
  if (leftover > 1e-15 || out.measure.atoms.empty())
    out.measure.atoms.push_back(
        {Schedule{std::vector<int>(params.num_classes(), 0)}, leftover});
  return out;
}

std::vector<double> nat_region_scale(const SystemParams& params,
                                     const std::vector<double>& values,
                                     bool per_second) {
  if (values.size() != params.num_classes())
    throw DomainError("vector must have L*J entries");
  std::vector<double> out(values.size());
  for (std::size_t f = 0; f < values.size(); ++f) {
    const auto [l, j] = params.class_of(f);
    out[f] = values[f] * params.service_class(l).log_alphabet *
             (per_second ? params.bandwidth() : 1.0);
  }
  return out;
}

SignalDuration signal_duration(double requirement,
                               const std::vector<double>& quanta) {
  if (!(requirement > 0.0)) throw DomainError("requirement must be positive");
  SignalDuration out;
  for (double q : quanta) {
    if (!(q > 0.0)) throw DomainError("per-slot quanta must be positive");
    out.accumulated += q;
    ++out.slots;
    if (out.accumulated >= requirement * (1.0 - kEqualityRelTol)) {
      out.finished = true;
      return out;
    }
  }
  return out;
}

SignalDuration signal_duration(const SystemParams& params, std::size_t l,
                               const std::vector<double>& quanta) {
  return signal_duration(params.requirement(l), quanta);
}

}  // namespace macstab
