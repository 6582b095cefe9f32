#pragma once

// Stability and transience conditions for non-idling policies, and the
// schedule-measure rate regions for state-independent policies and the
// general outer bound.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "macstab/core_model.hpp"

namespace macstab {

/// Mean batch arrivals per slot for each flat class (l, j).
struct RateVector {
  std::vector<double> mean;
  std::vector<double> second_moment;  // optional; empty when unknown

  double total() const;
  /// lambda_lj = W * EA_lj, messages per second.
  std::vector<double> per_second(double bandwidth_w) const;
  /// Throws DomainError unless the vector matches the system and is
  /// finite and non-negative.
  void validate(const SystemParams& params) const;

  RateVector scaled(double factor) const;
};

/// Probability measure over schedules in S_K. `Role` only records whether
/// it is a policy p(s) or an outer-bound measure pi(s).
struct ScheduleMeasure {
  enum class Role { policy, outer };

  struct Atom {
    Schedule schedule;
    double prob = 0.0;
  };

  std::vector<Atom> atoms;
  Role role = Role::policy;

  /// Probabilities >= 0, sum to 1 within 1e-9, every schedule in S_K.
  void validate(const SystemParams& params) const;
};

enum class Classification { inner_stable, outer_transient, indeterminate };

const char* to_string(Classification c);

struct InnerCheck {
  std::string rule;   // "theorem1" for K = 1, else "pr3_pr4"
  double pr3_lhs = 0.0;  // sum EA_lj ceil(S_l / phi_j)
  double pr3_rhs = 0.0;  // K
  bool pr3_holds = false;
  std::optional<double> pr4_lhs;  // sum EA_lj (S_l + phibar_j), K >= 2 only
  double pr4_rhs = 0.0;           // phi-underbar
  bool pr4_holds = false;

  bool holds() const { return pr3_holds || pr4_holds; }
  /// Name of the satisfied inequality, or empty.
  std::string witness() const;
};

struct OuterCheck {
  bool transient = false;
  /// "theorem1", "tran1" or "equal_power"; empty when not transient.
  std::string rule;
  std::vector<std::size_t> subset;  // zero-based power classes B
  double lhs = 0.0;
  double rhs = 0.0;
  /// Largest lhs - rhs over all evaluated conditions.
  double best_margin = 0.0;
  std::size_t subsets_checked = 0;
};

struct RegionVerdict {
  Classification classification = Classification::indeterminate;
  std::string witness;
  InnerCheck inner;
  OuterCheck outer;
};

InnerCheck check_inner_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema);
InnerCheck check_inner_nonidling(const SystemParams& params,
                                 const RateVector& rate);

inline constexpr std::size_t kMaxSubsetPowerClasses = 20;

/// For K >= 2 evaluates tran1 over every nonempty subset B of power classes
/// (refusing J > 20 with CapacityError) and, when J = 1, the equal-power
/// transience condition. K = 1 uses the exact single-transmission result.
OuterCheck check_outer_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema,
                                 double cap = kDefaultScheduleCap);
OuterCheck check_outer_nonidling(const SystemParams& params,
                                 const RateVector& rate);

/// Inner certificate wins; otherwise outer; otherwise the gap between the
/// bounds is reported as indeterminate.
RegionVerdict classify_nonidling(const SystemParams& params,
                                 const RateVector& rate);
RegionVerdict classify_nonidling(const SystemParams& params,
                                 const RateVector& rate,
                                 const PhiExtrema& extrema,
                                 double cap = kDefaultScheduleCap);

/// rho / (1 + rho): the K -> infinity threshold on sum EA_lj S_l.
double limit_threshold(const SystemParams& params);

struct EqualPowerThreshold {
  double phi_min = 0.0;                 // phi-underbar_1
  double capacity_nats_per_slot = 0.0;  // K phi-underbar_1
  std::vector<double> weights;          // ceil(S_l) to multiples of phi_min
  std::optional<double> threshold_msgs_per_slot;  // L = 1 only

  /// sum EA_l1 w_l < K phi_min.
  bool stable(const RateVector& rate) const;
  bool transient(const RateVector& rate) const;
};

/// Exact non-idling region when J = 1. Throws DomainError otherwise.
EqualPowerThreshold equal_power_threshold(const SystemParams& params);

struct CapacityCurve {
  struct Point {
    double log_alphabet = 0.0;
    double nats_per_sec = 0.0;
  };
  std::vector<Point> points;
  double limit_nats_per_sec = 0.0;
  /// The rho -> 0 supremum of the limit; for reporting only.
  double supremum_nats_per_sec = 0.0;
};

/// Maximum stable nat arrival rate f1 as the alphabet grows (L = J = 1),
/// taking alphabet sizes as ln M. Error probability comes from `params`.
CapacityCurve capacity_curve_f1(const SystemParams& params,
                                const std::vector<double>& log_alphabets);

/// s_lj phi_j(s) / ceil(S_l)_{phi_j(s)}; zero when s_lj = 0.
double inner_coefficient(const SystemParams& params, const Schedule& s,
                         std::size_t flat);
/// s_lj phi_j(s) / S_l; zero when s_lj = 0.
double outer_coefficient(const SystemParams& params, const Schedule& s,
                         std::size_t flat);

/// psi_lj for a policy measure p(s).
std::vector<double> psi(const SystemParams& params,
                        const ScheduleMeasure& measure);
/// Psi_lj for an outer-bound measure pi(s).
std::vector<double> psi_outer(const SystemParams& params,
                              const ScheduleMeasure& measure);

enum class MembershipMode { inner_policy, outer_measure };

struct Membership {
  enum class Position { interior, boundary, exterior };

  double t_star = 0.0;
  ScheduleMeasure measure;  // optimal witness, sums to 1
  std::size_t columns = 0;  // schedules considered

  Position position(double tol = 1e-6) const;
};

/// Solves max t s.t. sum_s p(s) c_lj(s) >= t beta_lj, p a measure on S_K.
/// The target lies strictly inside the region iff t* > 1.
Membership membership_lp(const SystemParams& params, const RateVector& target,
                         MembershipMode mode, double cap = kDefaultScheduleCap);

/// Multiplies component (l, j) by ln M_l, and additionally by W when
/// `per_second` is set.
std::vector<double> nat_region_scale(const SystemParams& params,
                                     const std::vector<double>& values,
                                     bool per_second = false);

struct SignalDuration {
  bool finished = false;
  std::size_t slots = 0;     // d when finished, else quanta consumed
  double accumulated = 0.0;
};

/// Smallest d with the first d quanta summing to at least `requirement`.
SignalDuration signal_duration(double requirement,
                               const std::vector<double>& quanta);
SignalDuration signal_duration(const SystemParams& params, std::size_t l,
                               const std::vector<double>& quanta);

}  // namespace macstab
