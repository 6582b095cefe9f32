#pragma once

// Physical and coding quantities of the scheduled multiaccess model, and the
// schedule combinatorics everything else is built on.
//
// Units: service quanta and requirements are in nats (dimensionless service
// units). Rates are per slot; a slot lasts 1/W seconds.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "macstab/errors.hpp"

namespace macstab {

/// Tolerable decoding error probability and alphabet size of a service
/// class. The alphabet is stored as ln M so that very large alphabets
/// remain representable.
struct ServiceClass {
  double error_prob = 0.0;
  double log_alphabet = 0.0;

  static ServiceClass from_alphabet(double error_prob, double alphabet_size);
};

/// Zero-based (service class, power class) pair.
struct ClassIndex {
  std::size_t l = 0;
  std::size_t j = 0;

  friend bool operator==(const ClassIndex&, const ClassIndex&) = default;
};

class SystemParams {
 public:
  SystemParams(double rho, double bandwidth_w, double noise_n0, int k_max,
               std::vector<double> powers,
               std::vector<ServiceClass> service_classes);

  /// Builds the received powers from SNRs: P_j = snr_j * N0 * W.
  static SystemParams from_snr(double rho, double bandwidth_w, double noise_n0,
                               int k_max, const std::vector<double>& snrs,
                               std::vector<ServiceClass> service_classes);

  double rho() const noexcept { return rho_; }
  double bandwidth() const noexcept { return bandwidth_; }
  double noise_psd() const noexcept { return noise_n0_; }
  int k_max() const noexcept { return k_max_; }

  /// N0 * W, the thermal part of every effective noise.
  double noise_power() const noexcept { return noise_n0_ * bandwidth_; }

  std::size_t num_service_classes() const noexcept { return classes_.size(); }
  std::size_t num_power_classes() const noexcept { return powers_.size(); }
  std::size_t num_classes() const noexcept {
    return classes_.size() * powers_.size();
  }

  const std::vector<double>& powers() const noexcept { return powers_; }
  double power(std::size_t j) const { return powers_.at(j); }
  double snr(std::size_t j) const { return power(j) / noise_power(); }

  const std::vector<ServiceClass>& service_classes() const noexcept {
    return classes_;
  }
  const ServiceClass& service_class(std::size_t l) const {
    return classes_.at(l);
  }

  /// S_l = -ln P_e,l + rho ln M_l.
  double requirement(std::size_t l) const { return requirements_.at(l); }

  /// Row-major flattening of (l, j); all per-class vectors use this order.
  std::size_t flat_index(ClassIndex c) const;
  ClassIndex class_of(std::size_t flat) const;

  /// Same system with a different transmission cap.
  SystemParams with_k_max(int k_max) const;

 private:
  double rho_;
  double bandwidth_;
  double noise_n0_;
  int k_max_;
  std::vector<double> powers_;
  std::vector<ServiceClass> classes_;
  std::vector<double> requirements_;
};

/// A vector of simultaneous per-class transmission counts, flattened by
/// SystemParams::flat_index.
struct Schedule {
  std::vector<int> counts;

  int total() const noexcept;
  bool empty() const noexcept { return total() == 0; }

  friend bool operator==(const Schedule&, const Schedule&) = default;
  friend auto operator<=>(const Schedule&, const Schedule&) = default;
};

/// Number of scheduled messages in each power class j (summed over l).
std::vector<int> power_column_totals(const SystemParams& params,
                                     const Schedule& schedule);

/// S_l for class l.
double service_requirement(const SystemParams& params, std::size_t l);

/// Service quantum rho * ln(1 + P / ((1 + rho) sigma^2)).
double e0_quantum(double rho, double signal_power, double noise_var);

/// Noise seen by a power-class-j message: N0 W plus the power of every
/// other scheduled message. Throws DomainError if j is not scheduled.
double effective_noise(const SystemParams& params, const Schedule& schedule,
                       std::size_t j);

/// Per-message quantum of power class j under schedule s; zero when s
/// schedules no class-(., j) message.
double phi(const SystemParams& params, const Schedule& schedule, std::size_t j);

/// phi() evaluated from per-power-class transmitter counts. This is the
/// quantum actually received when `columns` messages transmit.
double phi_from_columns(const SystemParams& params,
                        std::span<const int> columns, std::size_t j);

/// Smallest positive multiple of q that is >= x. Exact multiples map to
/// themselves (within a relative tolerance of 1e-12).
double ceil_to_quantum(double x, double q);

/// The multiplier n of ceil_to_quantum (x <= n q, n minimal, n >= 1).
std::int64_t quanta_needed(double x, double q);

enum class EnumMode {
  at_most,          // 0 <= total <= K
  exact,            // total == K
  exact_with_class  // total == K and power column j nonempty
};

inline constexpr double kDefaultScheduleCap = 1e7;

/// Lazily enumerates compositions of integers over `dims` slots.
///
/// For the schedule modes `dims` is L*J. With EnumMode::exact_with_class
/// the extra constraint is that the sum over l of counts in power column
/// `column` is positive; this needs `num_power_classes` to locate columns.
class ScheduleStream {
 public:
  ScheduleStream(std::size_t dims, int k, EnumMode mode,
                 std::size_t num_power_classes = 1, std::size_t column = 0);

  /// Writes the next schedule into `out`; false once exhausted.
  bool next(Schedule& out);

 private:
  bool advance();
  bool accepted() const;

  std::size_t dims_;
  int k_;
  EnumMode mode_;
  std::size_t num_power_classes_;
  std::size_t column_;
  int current_total_;
  std::vector<int> counts_;
  bool started_ = false;
  bool done_ = false;
};

/// Stream over S_K, S-bar_K or S-bar_K(j) for the given system.
ScheduleStream enumerate_schedules(const SystemParams& params, EnumMode mode,
                                   std::size_t j = 0);

/// Closed-form size of the enumeration, as a double (may exceed 2^64).
double schedule_count(std::size_t dims, int k, EnumMode mode,
                      std::size_t num_service_classes = 1);

/// Throws CapacityError when `count` exceeds `cap`.
void require_within_cap(double count, double cap, const char* what);

struct PhiExtrema {
  std::vector<double> min_per_power;  // phi-underbar_j
  std::vector<double> max_per_power;  // phi-bar_j
  double min_total = 0.0;             // phi-underbar
};

/// Extremes of phi over schedules transmitting exactly K messages.
///
/// phi_j(s) depends on s only through the power column totals, so the
/// search runs over compositions of K into J parts.
PhiExtrema phi_extrema(const SystemParams& params,
                       double cap = kDefaultScheduleCap);

}  // namespace macstab
