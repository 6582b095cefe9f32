#pragma once

// Batch commands behind the CLI. Each writes its outputs under `out_dir`
// and returns the primary document so callers can inspect it in-process.
//
// Outputs are pure functions of (config, seed): numbers are written in
// shortest round-trip form and replications are merged in index order.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "macstab/config.hpp"

namespace macstab {

/// Analytical report: bounds, thresholds, witnesses and LP values.
/// Writes regions.json.
nlohmann::json cmd_regions(const ExperimentConfig& cfg,
                           const std::filesystem::path& out_dir);

/// Simulation runs with verdicts. Writes summary.json and trace CSVs.
nlohmann::json cmd_simulate(const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir);

/// Equal-power threshold sweep over K for each SNR. Writes
/// figure_equal.csv and returns its contents.
std::string cmd_figure_equal(const ExperimentConfig& cfg,
                             const std::filesystem::path& out_dir);

/// Theory-versus-simulation agreement around the computed threshold.
/// Writes validate.csv and validate.json.
nlohmann::json cmd_validate(const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir);

/// Ray scan of the target rate direction. Writes sweep.csv and returns it.
std::string cmd_sweep(const ExperimentConfig& cfg,
                      const std::filesystem::path& out_dir);

/// Shortest round-trip decimal form of a double.
std::string format_number(double x);

/// Threshold scale along the config's arrival direction: for non-idling
/// policies the multiplier at which pr3 holds with equality, for
/// state-independent policies the smallest subclass bound-to-rate ratio.
double threshold_multiplier(const ExperimentConfig& cfg);

}  // namespace macstab
