#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "macstab/analysis.hpp"
#include "macstab/core_model.hpp"
#include "macstab/regions.hpp"
#include "macstab/sim.hpp"

namespace macstab {

/// A drift functional requested for simulation reports.
struct DriftRequest {
  std::string functional;  // n, c_lemma1, c_lemma2, lemma1, lemma2, omega_k_subclass
  DriftFilter filter;
};

enum class TraceOutput { none, first, all };

/// Everything a command needs, validated. See configs/example.json for an
/// annotated document.
struct ExperimentConfig {
  SystemParams params;
  ArrivalModel arrivals;
  std::optional<RateVector> rate;  // explicit target; else arrival means
  PolicySpec policy = NonIdlingPolicy{};

  std::int64_t horizon = 200000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  QuantumMode quantum_mode = QuantumMode::actual;
  std::size_t threads = 0;
  TraceOutput trace_output = TraceOutput::first;
  std::vector<DriftRequest> drift;

  VerdictOptions verdict;
  double schedule_cap = kDefaultScheduleCap;

  std::vector<double> figure_gammas{0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<int> figure_k;  // default 1..50
  std::vector<double> validate_multipliers{0.0, 0.5, 0.9, 1.0, 1.1, 1.5};
  std::vector<double> sweep_multipliers;
  std::vector<double> capacity_log_alphabets;

  RateVector target_rate() const;
  SimConfig sim_config() const;
};

/// Parses and validates a config document. Throws ConfigError naming the
/// offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace macstab
