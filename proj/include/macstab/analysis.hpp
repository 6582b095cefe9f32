#pragma once

// Empirical stability analysis of simulation output: the Lyapunov
// functionals used by the stability and transience arguments, one-step
// drift estimates, and a slope test on the message count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "macstab/core_model.hpp"
#include "macstab/regions.hpp"
#include "macstab/sim.hpp"

namespace macstab {

/// c(a) = sum_k ceil(x_k / phi-underbar_{j_k}) + 1.
double c_lemma1(const SystemState& state, const PhiExtrema& extrema);
double c_lemma1(const SystemState& state, const SystemParams& params);

/// c(a) = sum_k (x_k + phi-bar_{j_k}) + 1. Requires K >= 2.
double c_lemma2(const SystemState& state, const SystemParams& params,
                const PhiExtrema& extrema);
double c_lemma2(const SystemState& state, const SystemParams& params);

/// Residual work held by messages of power classes in `subset`.
double r_subset(const SystemState& state, std::span<const std::size_t> subset);

/// sum_k ceil(x_k) rounded to multiples of `quantum`.
double r_ceil(const SystemState& state, double quantum);

struct Lemma1 {};
struct Lemma2 {};
struct OmegaKSubclass {};
/// V = 1 - theta^r with r one of c (lemma 1), r_B or r_ceil.
struct ThetaGeometric {
  enum class Exponent { c, r_subset, r_ceil };
  double theta = 0.5;
  Exponent exponent = Exponent::c;
  std::vector<std::size_t> subset;  // for r_subset
};

using LyapunovKind = std::variant<Lemma1, Lemma2, OmegaKSubclass, ThetaGeometric>;

/// Caches the extrema and rates that the functionals depend on.
class LyapunovEvaluator {
 public:
  LyapunovEvaluator(SystemParams params, RateVector rate,
                    std::optional<StateIndependentPolicy> policy = std::nullopt);

  double c_lemma1(const SystemState& state) const;
  double c_lemma2(const SystemState& state) const;

  /// Throws DomainError when the stability inequality behind the chosen
  /// functional does not hold strictly (its denominator would be <= 0),
  /// or for theta outside (0, 1).
  double value(const SystemState& state, const LyapunovKind& kind) const;

  const PhiExtrema& extrema() const noexcept { return extrema_; }
  const SystemParams& params() const noexcept { return params_; }

 private:
  double lemma1_denominator() const;
  double lemma2_denominator() const;
  double subclass_value(const SystemState& state) const;

  SystemParams params_;
  RateVector rate_;
  std::optional<StateIndependentPolicy> policy_;
  PhiExtrema extrema_;
  InnerCheck inner_;
  // Per [flat][atom]: phi_j(s), ceil(S_l) in multiples of it, EA_ljs.
  std::vector<std::vector<double>> sub_quantum_;
  std::vector<std::vector<double>> sub_ceil_;
  std::vector<std::vector<double>> sub_rate_;
};

double lyapunov_v(const SystemState& state, const SystemParams& params,
                  const RateVector& rate, const LyapunovKind& kind,
                  const StateIndependentPolicy* policy = nullptr);

struct DriftReport {
  std::string functional;
  double mean_drift = std::numeric_limits<double>::quiet_NaN();
  double standard_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples = 0;
  std::string condition;

  bool conclusive() const noexcept { return samples >= 1; }
};

/// Which one-step transitions enter the drift average: those starting at
/// index >= burn_in with f(X_n) >= min_value.
struct DriftFilter {
  double min_value = -std::numeric_limits<double>::infinity();
  std::size_t burn_in = 0;

  std::string description() const;
};

/// Mean of f(X_{n+1}) - f(X_n) over the filtered steps, with the i.i.d.
/// standard error. Statistical evidence only: steps are correlated.
DriftReport empirical_drift(std::span<const double> series,
                            const DriftFilter& filter, std::string name);

/// Drift of n(a) from a trace, starting from the empty initial state.
DriftReport empirical_drift(const Trace& trace, const DriftFilter& filter);

/// Observer that appends f(state) for the initial state and every slot.
SlotObserver record_functional(std::vector<double>& out,
                               std::function<double(const SystemState&)> f);

enum class Verdict { stable, unstable, inconclusive };

const char* to_string(Verdict v);

struct VerdictOptions {
  double window_fraction = 0.5;
  double epsilon = 0.05;
  double confidence = 0.95;
  std::size_t batches = 20;
  double max_backlog = 1e4;
  std::size_t min_length = 200000;
};

struct StabilityVerdict {
  Verdict verdict = Verdict::inconclusive;
  double slope = 0.0;  // messages per slot
  double ci_low = 0.0;
  double ci_high = 0.0;
  double slope_threshold = 0.0;  // epsilon * total arrival mean
  std::int64_t window_max_backlog = 0;
  std::string window;
  std::string reason;
};

/// Slope test on n(a) over the final window.
///
/// The window is cut into equal batches; each batch contributes its
/// endpoint slope and the confidence interval is the t interval of the
/// batch mean. Unstable: slope > epsilon * total arrival mean and the
/// interval excludes 0 from above. Stable: the interval contains 0 and
/// the backlog stays below `max_backlog` throughout the window.
StabilityVerdict stability_verdict(std::span<const std::int32_t> n_series,
                                   double total_arrival_mean,
                                   const VerdictOptions& options = {});
StabilityVerdict stability_verdict(const Trace& trace, const RateVector& rate,
                                   const VerdictOptions& options = {});

}  // namespace macstab
