#include "macstab/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace macstab {

namespace {

constexpr double kQuantumRelTol = 1e-12;

double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// C(n, k) as a double; exact for the small cases the tests look at.
double binomial(long long n, long long k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double acc = 1.0;
  for (long long i = 1; i <= k; ++i) {
    acc = acc * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (!std::isfinite(acc)) return std::exp(log_binomial(double(n), double(k)));
  }
  return acc < 9e15 ? std::round(acc) : acc;
}

}  // namespace

ServiceClass ServiceClass::from_alphabet(double error_prob,
                                         double alphabet_size) {
  if (!(alphabet_size > 0.0))
    throw DomainError("alphabet size must be positive");
  return ServiceClass{error_prob, std::log(alphabet_size)};
}

SystemParams::SystemParams(double rho, double bandwidth_w, double noise_n0,
                           int k_max, std::vector<double> powers,
                           std::vector<ServiceClass> service_classes)
    : rho_(rho),
      bandwidth_(bandwidth_w),
      noise_n0_(noise_n0),
      k_max_(k_max),
      powers_(std::move(powers)),
      classes_(std::move(service_classes)) {
  if (!(rho_ > 0.0 && rho_ <= 1.0)) throw DomainError("rho must be in (0, 1]");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_))
    throw DomainError("bandwidth must be positive");
  if (!(noise_n0_ > 0.0) || !std::isfinite(noise_n0_))
    throw DomainError("noise PSD must be positive");
  if (k_max_ < 1) throw DomainError("k_max must be >= 1");
  if (powers_.empty()) throw DomainError("at least one power class required");
  if (classes_.empty()) throw DomainError("at least one service class required");
  for (double p : powers_)
    if (!(p > 0.0) || !std::isfinite(p))
      throw DomainError("received powers must be positive and finite");
  requirements_.reserve(classes_.size());
  for (const auto& c : classes_) {
    if (!(c.error_prob > 0.0 && c.error_prob < 1.0))
      throw DomainError("error probability must be in (0, 1)");
    if (!(c.log_alphabet >= std::log(2.0) * (1.0 - 1e-15)) ||
        !std::isfinite(c.log_alphabet))
      throw DomainError("alphabet size must be >= 2");
    const double s = -std::log(c.error_prob) + rho_ * c.log_alphabet;
    if (!(s > 0.0) || !std::isfinite(s))
      throw DomainError("service requirement must be positive and finite");
    requirements_.push_back(s);
  }
}

SystemParams SystemParams::from_snr(double rho, double bandwidth_w,
                                    double noise_n0, int k_max,
                                    const std::vector<double>& snrs,
                                    std::vector<ServiceClass> service_classes) {
  std::vector<double> powers;
  powers.reserve(snrs.size());
  for (double g : snrs) powers.push_back(g * noise_n0 * bandwidth_w);
  return SystemParams(rho, bandwidth_w, noise_n0, k_max, std::move(powers),
                      std::move(service_classes));
}

std::size_t SystemParams::flat_index(ClassIndex c) const {
  if (c.l >= classes_.size() || c.j >= powers_.size())
    throw DomainError("class index out of range");
  return c.l * powers_.size() + c.j;
}

ClassIndex SystemParams::class_of(std::size_t flat) const {
  if (flat >= num_classes()) throw DomainError("flat class index out of range");
  return ClassIndex{flat / powers_.size(), flat % powers_.size()};
}

SystemParams SystemParams::with_k_max(int k_max) const {
  return SystemParams(rho_, bandwidth_, noise_n0_, k_max, powers_, classes_);
}

int Schedule::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), 0);
}

std::vector<int> power_column_totals(const SystemParams& params,
                                     const Schedule& schedule) {
  const std::size_t J = params.num_power_classes();
  if (schedule.counts.size() != params.num_classes())
    throw DomainError("schedule dimension does not match L*J");
  std::vector<int> cols(J, 0);
  for (std::size_t f = 0; f < schedule.counts.size(); ++f) {
    if (schedule.counts[f] < 0) throw DomainError("negative schedule count");
    cols[f % J] += schedule.counts[f];
  }
  return cols;
}

double service_requirement(const SystemParams& params, std::size_t l) {
  return params.requirement(l);
}

double e0_quantum(double rho, double signal_power, double noise_var) {
  if (!(noise_var > 0.0)) throw DomainError("noise variance must be positive");
  if (!(signal_power >= 0.0)) throw DomainError("signal power must be >= 0");
  return rho * std::log1p(signal_power / ((1.0 + rho) * noise_var));
}

double phi_from_columns(const SystemParams& params,
                        std::span<const int> columns, std::size_t j) {
  if (j >= columns.size()) throw DomainError("power class out of range");
  if (columns[j] <= 0) return 0.0;
  double noise = params.noise_power() - params.power(j);
  for (std::size_t jj = 0; jj < columns.size(); ++jj)
    noise += columns[jj] * params.power(jj);
  return e0_quantum(params.rho(), params.power(j), noise);
}

double effective_noise(const SystemParams& params, const Schedule& schedule,
                       std::size_t j) {
  const auto cols = power_column_totals(params, schedule);
  if (j >= cols.size()) throw DomainError("power class out of range");
  if (cols[j] <= 0)
    throw DomainError("power class " + std::to_string(j + 1) +
                      " is not scheduled");
  double interference = 0.0;
  for (std::size_t jj = 0; jj < cols.size(); ++jj)
    interference += cols[jj] * params.power(jj);
  return params.noise_power() + (interference - params.power(j));
}

double phi(const SystemParams& params, const Schedule& schedule,
           std::size_t j) {
  const auto cols = power_column_totals(params, schedule);
  return phi_from_columns(params, cols, j);
}

std::int64_t quanta_needed(double x, double q) {
  if (!(x > 0.0) || !(q > 0.0))
    throw DomainError("ceil_to_quantum requires x > 0 and q > 0");
  const double ratio = x / q;
  auto n = static_cast<std::int64_t>(std::ceil(ratio));
  // A ratio a hair above an integer is representational noise.
  const double below = static_cast<double>(n - 1);
  if (n > 1 && ratio - below <= kQuantumRelTol * ratio) --n;
  return std::max<std::int64_t>(n, 1);
}

double ceil_to_quantum(double x, double q) {
  return static_cast<double>(quanta_needed(x, q)) * q;
}

ScheduleStream::ScheduleStream(std::size_t dims, int k, EnumMode mode,
                               std::size_t num_power_classes,
                               std::size_t column)
    : dims_(dims),
      k_(k),
      mode_(mode),
      num_power_classes_(num_power_classes),
      column_(column),
      current_total_(mode == EnumMode::at_most ? 0 : k),
      counts_(dims, 0) {
  if (dims_ == 0) throw DomainError("schedule dimension must be >= 1");
  if (k_ < 0) throw DomainError("K must be non-negative");
  if (mode_ == EnumMode::exact_with_class &&
      (num_power_classes_ == 0 || column_ >= num_power_classes_ ||
       dims_ % num_power_classes_ != 0))
    throw DomainError("invalid power column for exact_with_class");
}

bool ScheduleStream::accepted() const {
  if (mode_ != EnumMode::exact_with_class) return true;
  int col = 0;
  for (std::size_t f = column_; f < dims_; f += num_power_classes_)
    col += counts_[f];
  return col > 0;
}

// Steps counts_ to the next composition in reverse-lexicographic order,
// moving on to the next total when the current one is exhausted.
bool ScheduleStream::advance() {
  if (!started_) {
    started_ = true;
    std::fill(counts_.begin(), counts_.end(), 0);
    counts_[0] = current_total_;
    return true;
  }
  std::size_t i = dims_ - 1;
  bool found = false;
  while (i-- > 0) {
    if (counts_[i] > 0) {
      found = true;
      break;
    }
  }
  if (found) {
    --counts_[i];
    const int tail = counts_[dims_ - 1];
    counts_[dims_ - 1] = 0;
    counts_[i + 1] = tail + 1;
    return true;
  }
  if (mode_ == EnumMode::at_most && current_total_ < k_) {
    ++current_total_;
    std::fill(counts_.begin(), counts_.end(), 0);
    counts_[0] = current_total_;
    return true;
  }
  return false;
}

bool ScheduleStream::next(Schedule& out) {
  while (!done_) {
    if (!advance()) {
      done_ = true;
      break;
    }
    if (accepted()) {
      out.counts = counts_;
      return true;
    }
  }
  return false;
}

ScheduleStream enumerate_schedules(const SystemParams& params, EnumMode mode,
                                   std::size_t j) {
  return ScheduleStream(params.num_classes(), params.k_max(), mode,
                        params.num_power_classes(), j);
}

double schedule_count(std::size_t dims, int k, EnumMode mode,
                      std::size_t num_service_classes) {
  const auto d = static_cast<long long>(dims);
  switch (mode) {
    case EnumMode::at_most:
      return binomial(k + d, d);
    case EnumMode::exact:
      return binomial(k + d - 1, d - 1);
    case EnumMode::exact_with_class: {
      // Complement: schedules that leave the L entries of column j empty.
      const long long rest = d - static_cast<long long>(num_service_classes);
      const double without =
          rest == 0 ? (k == 0 ? 1.0 : 0.0) : binomial(k + rest - 1, rest - 1);
      return binomial(k + d - 1, d - 1) - without;
    }
  }
  return 0.0;
}

void require_within_cap(double count, double cap, const char* what) {
  if (count > cap)
    throw CapacityError(std::string(what) + ": " + std::to_string(count) +
                            " schedules exceeds the cap of " +
                            std::to_string(cap),
                        count);
}

PhiExtrema phi_extrema(const SystemParams& params, double cap) {
  const std::size_t J = params.num_power_classes();
  const int K = params.k_max();
  require_within_cap(schedule_count(J, K, EnumMode::exact), cap, "phi_extrema");

  PhiExtrema out;
  out.min_per_power.assign(J, std::numeric_limits<double>::infinity());
  out.max_per_power.assign(J, 0.0);
  out.min_total = std::numeric_limits<double>::infinity();

  ScheduleStream columns(J, K, EnumMode::exact);
  Schedule cols;
  while (columns.next(cols)) {
    double total = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (cols.counts[j] == 0) continue;
      const double q = phi_from_columns(params, cols.counts, j);
      out.min_per_power[j] = std::min(out.min_per_power[j], q);
      out.max_per_power[j] = std::max(out.max_per_power[j], q);
      total += cols.counts[j] * q;
    }
    out.min_total = std::min(out.min_total, total);
  }
  return out;
}

}  // namespace macstab
