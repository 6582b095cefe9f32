#pragma once

// Slot-by-slot simulation of the message-level Markov chain.
//
// Slot n proceeds as: pick the transmitting messages, credit each its
// service quantum, remove completed messages, then append the batch that
// arrived at the boundary after slot n. New arrivals are first eligible in
// slot n + 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "macstab/core_model.hpp"
#include "macstab/regions.hpp"
#include "macstab/rng.hpp"

namespace macstab {

inline constexpr double kDepartureTolerance = 1e-12;

struct Message {
  std::uint64_t id = 0;
  ClassIndex cls;
  double residual = 0.0;  // x_k, nats of service still owed
  std::int64_t arrival_slot = 0;  // first slot the message may be served
  /// Index of the assigned schedule in the policy measure (state-independent
  /// policies only).
  std::optional<std::size_t> assigned;
};

struct SystemState {
  std::vector<Message> messages;  // arrival order
  std::int64_t slot = 0;

  std::size_t size() const noexcept { return messages.size(); }
  std::vector<int> class_counts(const SystemParams& params) const;
};

struct ArrivalSpec {
  enum class Kind { bernoulli, poisson, deterministic_batch, empirical };

  Kind kind = Kind::bernoulli;
  double rate = 0.0;  // p for bernoulli, mean for poisson
  int batch = 0;      // deterministic_batch
  int period = 1;     // deterministic_batch: arrives when slot % period == 0
  std::vector<double> pmf;  // empirical: pmf[k] = Pr(A = k)

  static ArrivalSpec bernoulli(double p);
  static ArrivalSpec poisson(double mean);
  static ArrivalSpec deterministic(int batch, int period);
  static ArrivalSpec empirical(std::vector<double> pmf);

  double mean() const;
  double second_moment() const;
  void validate() const;
  /// Scales the mean; only bernoulli and poisson are scalable.
  ArrivalSpec scaled(double factor) const;

  std::int64_t sample(std::int64_t slot, Rng& rng) const;
};

/// Independent arrival processes, one per flat class (l, j).
struct ArrivalModel {
  std::vector<ArrivalSpec> classes;

  RateVector rates() const;
  void validate(const SystemParams& params) const;
  ArrivalModel scaled(double factor) const;
};

enum class Selection { fcfs, random_uniform };

struct NonIdlingPolicy {
  Selection selection = Selection::fcfs;
};

/// Draws s ~ p(s) every slot regardless of state. Arriving class-(l, j)
/// messages are tied to one schedule of the measure with probability
/// `assignment[flat][atom]`; when the table is empty the default is
/// proportional to p(s) over schedules with s_lj > 0.
struct StateIndependentPolicy {
  ScheduleMeasure measure;
  std::vector<std::vector<double>> assignment;

  /// Normalized assignment probabilities for one flat class; all zero when
  /// no schedule in the support serves the class.
  std::vector<double> assignment_for(const SystemParams& params,
                                     std::size_t flat) const;
  void validate(const SystemParams& params) const;
  /// EA_ljs = EA_lj q(s | l, j), indexed [flat][atom].
  std::vector<std::vector<double>> subclass_rates(const SystemParams& params,
                                                  const RateVector& rate) const;
  /// p(s) s_lj phi_j(s) / ceil(S_l)_{phi_j(s)}, indexed [flat][atom].
  std::vector<std::vector<double>> subclass_bounds(
      const SystemParams& params) const;
};

using PolicySpec = std::variant<NonIdlingPolicy, StateIndependentPolicy>;

enum class QuantumMode { actual, nominal };

const char* to_string(QuantumMode mode);
const char* to_string(Selection selection);

/// Arrival counts for every flat class in this slot.
std::vector<std::int64_t> sample_arrivals(const ArrivalModel& model,
                                          std::int64_t slot, Rng& rng);

struct SlotDecision {
  Schedule schedule;                // drawn (state-independent) or realized
  std::vector<std::size_t> served;  // indices into SystemState::messages
  std::optional<std::size_t> atom;  // drawn atom of the policy measure
};

/// Schedules min(n, K) messages: the oldest ones (ties by id) for FCFS, a
/// uniform subset otherwise.
SlotDecision select_nonidling(const SystemState& state,
                              const SystemParams& params, Selection selection,
                              Rng& rng);

/// Draws s ~ p(s), then serves min(n_ljs, s_lj) of each subclass (l, j, s),
/// oldest first. Messages assigned to other schedules wait. `waiting`, if
/// given, holds n_ljs indexed [atom * L*J + flat] and lets the scan stop
/// early.
SlotDecision select_state_independent(const SystemState& state,
                                      const SystemParams& params,
                                      const StateIndependentPolicy& policy,
                                      Rng& rng, std::span<const int> waiting = {});

struct SlotOutcome {
  std::vector<double> quanta;       // credited to each served message
  std::vector<Message> departed;
};

/// Credits service, removes completed messages, advances the slot counter
/// and appends `arrivals`. Under QuantumMode::nominal each served message
/// receives phi_j of the decided schedule even when it was only partially
/// implemented.
SlotOutcome apply_slot(SystemState& state, const SlotDecision& decision,
                       const SystemParams& params, QuantumMode mode,
                       std::vector<Message> arrivals,
                       double tolerance = kDepartureTolerance);

/// Per-slot record, one row per slot, taken after arrivals are appended.
struct Trace {
  std::size_t num_classes = 0;
  std::vector<std::int32_t> n_total;
  std::vector<std::int32_t> n_class;  // row-major [slot][flat]
  std::vector<std::int32_t> served;
  std::vector<std::int32_t> departed;
  std::vector<std::int32_t> arrived;

  std::size_t length() const noexcept { return n_total.size(); }
  std::int32_t n_class_at(std::size_t row, std::size_t flat) const {
    return n_class[row * num_classes + flat];
  }
  /// Header `slot,n_total,n_<l>_<j>...,served,departed` (1-based l, j).
  void write_csv(std::ostream& os, const SystemParams& params) const;
};

struct RunSummary {
  std::int64_t slots = 0;
  double time_avg_n = 0.0;
  std::vector<double> per_class_mean_n;
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  std::vector<std::uint64_t> departures_per_class;
  std::vector<double> mean_sojourn_slots;  // NaN when nothing departed
  std::int64_t final_n = 0;
  std::int64_t max_n = 0;
};

struct SimConfig {
  SystemParams params;
  ArrivalModel arrivals;
  PolicySpec policy = NonIdlingPolicy{};
  std::int64_t horizon = 0;
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  QuantumMode quantum_mode = QuantumMode::actual;
  double departure_tolerance = kDepartureTolerance;
  bool record_trace = true;

  /// Throws DomainError naming the first violated constraint.
  void validate() const;
};

struct RunResult {
  Trace trace;
  RunSummary summary;
};

/// Called with the initial state and after every slot.
using SlotObserver = std::function<void(const SystemState&)>;

/// Runs one replication. The random stream is derived from
/// (seed, replication), so equal configs produce identical results.
RunResult run(const SimConfig& config, const SlotObserver& observer = {});

using ObserverFactory = std::function<SlotObserver(std::size_t replication)>;

/// Runs replications 0..count-1 of `base` on up to `threads` workers
/// (0 = hardware concurrency). Results are in replication order.
std::vector<RunResult> run_replications(const SimConfig& base,
                                        std::size_t count,
                                        std::size_t threads = 0,
                                        const ObserverFactory& observers = {});

}  // namespace macstab
