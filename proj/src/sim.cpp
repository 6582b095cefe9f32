#include "macstab/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

namespace macstab {

std::vector<int> SystemState::class_counts(const SystemParams& params) const {
  std::vector<int> counts(params.num_classes(), 0);
  for (const auto& m : messages) ++counts[params.flat_index(m.cls)];
  return counts;
}

// ---------------------------------------------------------------------------
// Arrivals

ArrivalSpec ArrivalSpec::bernoulli(double p) {
  ArrivalSpec s;
  s.kind = Kind::bernoulli;
  s.rate = p;
  return s;
}

ArrivalSpec ArrivalSpec::poisson(double mean) {
  ArrivalSpec s;
  s.kind = Kind::poisson;
  s.rate = mean;
  return s;
}

ArrivalSpec ArrivalSpec::deterministic(int batch, int period) {
  ArrivalSpec s;
  s.kind = Kind::deterministic_batch;
  s.batch = batch;
  s.period = period;
  return s;
}

ArrivalSpec ArrivalSpec::empirical(std::vector<double> pmf) {
  ArrivalSpec s;
  s.kind = Kind::empirical;
  s.pmf = std::move(pmf);
  return s;
}

double ArrivalSpec::mean() const {
  switch (kind) {
    case Kind::bernoulli:
    case Kind::poisson:
      return rate;
    case Kind::deterministic_batch:
      return static_cast<double>(batch) / period;
    case Kind::empirical: {
      double m = 0.0;
      for (std::size_t k = 0; k < pmf.size(); ++k) m += k * pmf[k];
      return m;
    }
  }
  return 0.0;
}

double ArrivalSpec::second_moment() const {
  switch (kind) {
    case Kind::bernoulli:
      return rate;
    case Kind::poisson:
      return rate + rate * rate;
    case Kind::deterministic_batch:
      return static_cast<double>(batch) * batch / period;
    case Kind::empirical: {
      double m = 0.0;
      for (std::size_t k = 0; k < pmf.size(); ++k) m += double(k) * k * pmf[k];
      return m;
    }
  }
  return 0.0;
}

void ArrivalSpec::validate() const {
  switch (kind) {
    case Kind::bernoulli:
      if (!(rate >= 0.0 && rate <= 1.0))
        throw DomainError("bernoulli probability must be in [0, 1]");
      break;
    case Kind::poisson:
      if (!(rate >= 0.0) || !std::isfinite(rate))
        throw DomainError("poisson mean must be finite and non-negative");
      break;
    case Kind::deterministic_batch:
      if (batch < 0) throw DomainError("batch size must be non-negative");
      if (period < 1) throw DomainError("batch period must be >= 1");
      break;
    case Kind::empirical: {
      if (pmf.empty()) throw DomainError("empirical pmf must be nonempty");
      double sum = 0.0;
      for (double p : pmf) {
        if (!(p >= 0.0)) throw DomainError("pmf entries must be non-negative");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw DomainError("pmf must sum to 1");
      break;
    }
  }
}

ArrivalSpec ArrivalSpec::scaled(double factor) const {
  if (kind != Kind::bernoulli && kind != Kind::poisson)
    throw DomainError("only bernoulli and poisson arrivals can be rescaled");
  ArrivalSpec out = *this;
  out.rate *= factor;
  out.validate();
  return out;
}

std::int64_t ArrivalSpec::sample(std::int64_t slot, Rng& rng) const {
  switch (kind) {
    case Kind::bernoulli:
      return rate > 0.0 && rng.bernoulli(rate) ? 1 : 0;
    case Kind::poisson:
      return rate > 0.0 ? rng.poisson(rate) : 0;
    case Kind::deterministic_batch:
      return slot % period == 0 ? batch : 0;
    case Kind::empirical:
      return static_cast<std::int64_t>(rng.categorical(pmf));
  }
  return 0;
}

RateVector ArrivalModel::rates() const {
  RateVector r;
  for (const auto& c : classes) {
    r.mean.push_back(c.mean());
    r.second_moment.push_back(c.second_moment());
  }
  return r;
}

void ArrivalModel::validate(const SystemParams& params) const {
  if (classes.size() != params.num_classes())
    throw DomainError("arrival model must have L*J classes");
  for (const auto& c : classes) c.validate();
}

ArrivalModel ArrivalModel::scaled(double factor) const {
  ArrivalModel out;
  for (const auto& c : classes) out.classes.push_back(c.scaled(factor));
  return out;
}

std::vector<std::int64_t> sample_arrivals(const ArrivalModel& model,
                                          std::int64_t slot, Rng& rng) {
  std::vector<std::int64_t> counts(model.classes.size());
  for (std::size_t f = 0; f < counts.size(); ++f)
    counts[f] = model.classes[f].sample(slot, rng);
  return counts;
}

// ---------------------------------------------------------------------------
// Policies

const char* to_string(QuantumMode mode) {
  return mode == QuantumMode::actual ? "actual" : "nominal";
}

const char* to_string(Selection selection) {
  return selection == Selection::fcfs ? "fcfs" : "random_uniform";
}

std::vector<double> StateIndependentPolicy::assignment_for(
    const SystemParams& /*params*/, std::size_t flat) const {
  const auto& atoms = measure.atoms;
  std::vector<double> w(atoms.size(), 0.0);
  if (!assignment.empty()) {
    w = assignment.at(flat);
  } else {
    for (std::size_t a = 0; a < atoms.size(); ++a)
      if (atoms[a].schedule.counts.at(flat) > 0) w[a] = atoms[a].prob;
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum > 0.0)
    for (double& x : w) x /= sum;
  return w;
}

void StateIndependentPolicy::validate(const SystemParams& params) const {
  measure.validate(params);
  if (assignment.empty()) return;
  if (assignment.size() != params.num_classes())
    throw DomainError("assignment table must have L*J rows");
  for (std::size_t f = 0; f < assignment.size(); ++f) {
    const auto& row = assignment[f];
    if (row.size() != measure.atoms.size())
      throw DomainError("assignment row length must match the measure support");
    for (std::size_t a = 0; a < row.size(); ++a) {
      if (!(row[a] >= 0.0)) throw DomainError("assignment weights must be >= 0");
      if (row[a] > 0.0 && measure.atoms[a].schedule.counts[f] == 0)
        throw DomainError(
            "assignment puts mass on a schedule that never serves the class");
    }
  }
}

std::vector<std::vector<double>> StateIndependentPolicy::subclass_rates(
    const SystemParams& params, const RateVector& rate) const {
  std::vector<std::vector<double>> out(params.num_classes());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f] = assignment_for(params, f);
    for (double& q : out[f]) q *= rate.mean.at(f);
  }
  return out;
}

std::vector<std::vector<double>> StateIndependentPolicy::subclass_bounds(
    const SystemParams& params) const {
  std::vector<std::vector<double>> out(
      params.num_classes(), std::vector<double>(measure.atoms.size(), 0.0));
  for (std::size_t a = 0; a < measure.atoms.size(); ++a) {
    const auto& atom = measure.atoms[a];
    for (std::size_t f = 0; f < out.size(); ++f)
      out[f][a] = atom.prob * inner_coefficient(params, atom.schedule, f);
  }
  return out;
}

SlotDecision select_nonidling(const SystemState& state,
                              const SystemParams& params, Selection selection,
                              Rng& rng) {
  SlotDecision d;
  d.schedule.counts.assign(params.num_classes(), 0);
  const std::size_t n = state.messages.size();
  const std::size_t take = std::min<std::size_t>(n, params.k_max());
  if (take == 0) return d;

  if (selection == Selection::fcfs) {
    // Messages are stored in arrival order with increasing ids.
    d.served.resize(take);
    std::iota(d.served.begin(), d.served.end(), std::size_t{0});
  } else if (2 * take >= n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < take; ++i)
      std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    d.served = std::move(idx);
  } else {
    // Long queue: rejection sampling keeps the cost independent of n.
    while (d.served.size() < take) {
      const std::size_t i = rng.below(n);
      if (std::find(d.served.begin(), d.served.end(), i) == d.served.end())
        d.served.push_back(i);
    }
    std::sort(d.served.begin(), d.served.end());
  }
  for (std::size_t i : d.served)
    ++d.schedule.counts[params.flat_index(state.messages[i].cls)];
  return d;
}

SlotDecision select_state_independent(const SystemState& state,
                                      const SystemParams& params,
                                      const StateIndependentPolicy& policy,
                                      Rng& rng, std::span<const int> waiting) {
  SlotDecision d;
  const auto& atoms = policy.measure.atoms;
  std::vector<double> probs(atoms.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) probs[a] = atoms[a].prob;
  const std::size_t drawn = rng.categorical(probs);
  d.atom = drawn;
  d.schedule = atoms[drawn].schedule;

  std::vector<int> quota = d.schedule.counts;
  const std::size_t C = quota.size();
  if (!waiting.empty())
    for (std::size_t f = 0; f < C; ++f)
      quota[f] = std::min(quota[f], waiting[drawn * C + f]);
  int remaining = 0;
  for (int q : quota) remaining += q;
  for (std::size_t i = 0; i < state.messages.size() && remaining > 0; ++i) {
    const auto& m = state.messages[i];
    if (m.assigned != drawn) continue;
    const std::size_t f = params.flat_index(m.cls);
    if (quota[f] == 0) continue;
    --quota[f];
    --remaining;
    d.served.push_back(i);
  }
  return d;
}

SlotOutcome apply_slot(SystemState& state, const SlotDecision& decision,
                       const SystemParams& params, QuantumMode mode,
                       std::vector<Message> arrivals, double tolerance) {
  SlotOutcome out;
  const std::size_t J = params.num_power_classes();

  std::vector<int> transmitting(J, 0);
  for (std::size_t i : decision.served)
    ++transmitting[state.messages.at(i).cls.j];
  const auto& columns = mode == QuantumMode::nominal
                            ? power_column_totals(params, decision.schedule)
                            : transmitting;

  std::vector<double> quantum(J, 0.0);
  for (std::size_t j = 0; j < J; ++j)
    if (transmitting[j] > 0) quantum[j] = phi_from_columns(params, columns, j);

  out.quanta.reserve(decision.served.size());
  for (std::size_t i : decision.served) {
    auto& m = state.messages[i];
    const double q = quantum[m.cls.j];
    m.residual -= q;
    out.quanta.push_back(q);
  }

  // Only served messages can finish; compact from the first departure on.
  std::vector<std::size_t> gone;
  for (std::size_t i : decision.served)
    if (state.messages[i].residual <= tolerance) gone.push_back(i);
  if (!gone.empty()) {
    std::sort(gone.begin(), gone.end());
    auto& msgs = state.messages;
    std::size_t w = gone.front(), g = 0;
    for (std::size_t r = gone.front(); r < msgs.size(); ++r) {
      if (g < gone.size() && gone[g] == r) {
        out.departed.push_back(std::move(msgs[r]));
        ++g;
      } else {
        msgs[w++] = std::move(msgs[r]);
      }
    }
    msgs.resize(w);
  }

  ++state.slot;
  for (auto& m : arrivals) state.messages.push_back(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// Trace and runs

void Trace::write_csv(std::ostream& os, const SystemParams& params) const {
  os << "slot,n_total";
  for (std::size_t f = 0; f < num_classes; ++f) {
    const auto c = params.class_of(f);
    os << ",n_" << c.l + 1 << '_' << c.j + 1;
  }
  os << ",served,departed\n";
  for (std::size_t r = 0; r < length(); ++r) {
    os << r << ',' << n_total[r];
    for (std::size_t f = 0; f < num_classes; ++f) os << ',' << n_class_at(r, f);
    os << ',' << served[r] << ',' << departed[r] << '\n';
  }
}

void SimConfig::validate() const {
  if (horizon < 1) throw DomainError("horizon must be >= 1");
  if (!(departure_tolerance >= 0.0))
    throw DomainError("departure tolerance must be >= 0");
  arrivals.validate(params);
  if (const auto* si = std::get_if<StateIndependentPolicy>(&policy)) {
    si->validate(params);
    const auto rates = arrivals.rates();
    for (std::size_t f = 0; f < params.num_classes(); ++f) {
      if (rates.mean[f] <= 0.0) continue;
      const auto q = si->assignment_for(params, f);
      if (std::all_of(q.begin(), q.end(), [](double x) { return x == 0.0; }))
        throw DomainError("class " + std::to_string(f + 1) +
                          " receives arrivals but no schedule serves it");
    }
  }
}

RunResult run(const SimConfig& config, const SlotObserver& observer) {
  config.validate();
  const auto& params = config.params;
  const std::size_t C = params.num_classes();
  Rng rng(config.seed, config.replication);

  const auto* si = std::get_if<StateIndependentPolicy>(&config.policy);
  const auto* ni = std::get_if<NonIdlingPolicy>(&config.policy);
  std::vector<std::vector<double>> assign;
  if (si)
    for (std::size_t f = 0; f < C; ++f) assign.push_back(si->assignment_for(params, f));

  RunResult result;
  auto& trace = result.trace;
  auto& sum = result.summary;
  trace.num_classes = C;
  if (config.record_trace) {
    const auto h = static_cast<std::size_t>(config.horizon);
    trace.n_total.reserve(h);
    trace.n_class.reserve(h * C);
    trace.served.reserve(h);
    trace.departed.reserve(h);
    trace.arrived.reserve(h);
  }
  sum.per_class_mean_n.assign(C, 0.0);
  sum.departures_per_class.assign(C, 0);
  std::vector<double> sojourn_total(C, 0.0);
  std::vector<double> n_class_total(C, 0.0);
  double n_total_acc = 0.0;

  SystemState state;
  std::uint64_t next_id = 0;
  if (observer) observer(state);

  std::vector<int> counts(C, 0);
  // Waiting messages per (atom, class), for state-independent policies.
  std::vector<int> waiting(si ? si->measure.atoms.size() * C : 0, 0);
  for (std::int64_t slot = 0; slot < config.horizon; ++slot) {
    const SlotDecision decision =
        si ? select_state_independent(state, params, *si, rng, waiting)
           : select_nonidling(state, params, ni->selection, rng);

    const auto arrived = sample_arrivals(config.arrivals, slot, rng);
    std::vector<Message> fresh;
    for (std::size_t f = 0; f < C; ++f) {
      const auto cls = params.class_of(f);
      for (std::int64_t k = 0; k < arrived[f]; ++k) {
        Message m;
        m.id = next_id++;
        m.cls = cls;
        m.residual = params.requirement(cls.l);
        m.arrival_slot = slot + 1;
        if (si) {
          m.assigned = rng.categorical(assign[f]);
          ++waiting[*m.assigned * C + f];
        }
        ++counts[f];
        fresh.push_back(std::move(m));
      }
    }
    const std::int64_t n_arrived = static_cast<std::int64_t>(fresh.size());

    const auto outcome = apply_slot(state, decision, params, config.quantum_mode,
                                    std::move(fresh), config.departure_tolerance);

    for (const auto& m : outcome.departed) {
      const std::size_t f = params.flat_index(m.cls);
      ++sum.departures_per_class[f];
      sojourn_total[f] += static_cast<double>(slot + 1 - m.arrival_slot);
      --counts[f];
      if (si) --waiting[*m.assigned * C + f];
    }
    sum.departures += outcome.departed.size();
    sum.arrivals += static_cast<std::uint64_t>(n_arrived);

    const auto n = static_cast<std::int64_t>(state.messages.size());
    n_total_acc += static_cast<double>(n);
    for (std::size_t f = 0; f < C; ++f) n_class_total[f] += counts[f];
    sum.max_n = std::max(sum.max_n, n);

    if (config.record_trace) {
      trace.n_total.push_back(static_cast<std::int32_t>(n));
      trace.n_class.insert(trace.n_class.end(), counts.begin(), counts.end());
      trace.served.push_back(static_cast<std::int32_t>(decision.served.size()));
      trace.departed.push_back(static_cast<std::int32_t>(outcome.departed.size()));
      trace.arrived.push_back(static_cast<std::int32_t>(n_arrived));
    }
    if (observer) observer(state);
  }

  const double h = static_cast<double>(config.horizon);
  sum.slots = config.horizon;
  sum.time_avg_n = n_total_acc / h;
  sum.final_n = static_cast<std::int64_t>(state.messages.size());
  sum.mean_sojourn_slots.assign(C, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t f = 0; f < C; ++f) {
    sum.per_class_mean_n[f] = n_class_total[f] / h;
    if (sum.departures_per_class[f] > 0)
      sum.mean_sojourn_slots[f] =
          sojourn_total[f] / static_cast<double>(sum.departures_per_class[f]);
  }
  return result;
}

std::vector<RunResult> run_replications(const SimConfig& base,
                                        std::size_t count, std::size_t threads,
                                        const ObserverFactory& observers) {
  base.validate();
  std::vector<RunResult> results(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t r = next++; r < count; r = next++) {
      try {
        SimConfig cfg = base;
        cfg.replication = r;
        results[r] = run(cfg, observers ? observers(r) : SlotObserver{});
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace macstab
