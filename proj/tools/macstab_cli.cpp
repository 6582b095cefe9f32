// macstab: stability regions and simulation for scheduled multiaccess
// channels with random coding.
//
// Exit codes: 0 success, 1 internal error, 2 invalid config or arguments,
// 3 enumeration cap exceeded.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "macstab/commands.hpp"
#include "macstab/config.hpp"
#include "macstab/errors.hpp"

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> replications;
  std::optional<std::int64_t> horizon;
  std::optional<std::string> quantum_mode;
};

void add_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required();
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Base random seed");
  cmd->add_option("--replications", o.replications, "Independent replications");
  cmd->add_option("--horizon", o.horizon, "Slots per replication");
  cmd->add_option("--quantum-mode", o.quantum_mode, "Service quantum rule")
      ->check(CLI::IsMember({"actual", "nominal"}));
}

macstab::ExperimentConfig load(const Options& o) {
  using macstab::ConfigError;
  auto cfg = macstab::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.replications) {
    if (*o.replications < 1) throw ConfigError("--replications", "must be >= 1");
    cfg.replications = static_cast<std::size_t>(*o.replications);
  }
  if (o.horizon) {
    if (*o.horizon < 1) throw ConfigError("--horizon", "must be >= 1");
    cfg.horizon = *o.horizon;
  }
  if (o.quantum_mode)
    cfg.quantum_mode = *o.quantum_mode == "nominal" ? macstab::QuantumMode::nominal
                                                    : macstab::QuantumMode::actual;
  return cfg;
}

int dispatch(const std::string& name, const Options& o) {
  const auto cfg = load(o);
  const std::filesystem::path out = o.out;
  if (name == "regions") {
    const auto doc = macstab::cmd_regions(cfg, out);
    std::cout << "classification: " << doc["nonidling"]["classification"].get<std::string>();
    const auto w = doc["nonidling"]["witness"].get<std::string>();
    if (!w.empty()) std::cout << " (" << w << ")";
    std::cout << "\nwrote " << (out / "regions.json").string() << "\n";
  } else if (name == "simulate") {
    const auto doc = macstab::cmd_simulate(cfg, out);
    const auto& agg = doc["aggregate"];
    std::cout << "verdicts: stable " << agg["stable"] << ", unstable " << agg["unstable"]
              << ", inconclusive " << agg["inconclusive"] << "\n"
              << "time-average n: " << macstab::format_number(doc["time_avg_n"].get<double>())
              << "\nwrote " << (out / "summary.json").string() << "\n";
  } else if (name == "figure-equal") {
    macstab::cmd_figure_equal(cfg, out);
    std::cout << "wrote " << (out / "figure_equal.csv").string() << "\n";
  } else if (name == "validate") {
    const auto doc = macstab::cmd_validate(cfg, out);
    for (const auto& row : doc["rows"])
      std::cout << macstab::format_number(row["multiplier"].get<double>()) << "x: theory "
                << row["theory"].get<std::string>() << ", simulation "
                << row["sim_verdict"].get<std::string>() << "\n";
    std::cout << "wrote " << (out / "validate.csv").string() << "\n";
  } else {
    macstab::cmd_sweep(cfg, out);
    std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability regions and simulation for scheduled multiaccess channels"};
  app.require_subcommand(1);
  Options opts;
  const char* commands[][2] = {
      {"regions", "Inner/outer bounds, thresholds and LP membership"},
      {"simulate", "Run replications and report stability verdicts"},
      {"figure-equal", "Equal-power threshold against K for each SNR"},
      {"validate", "Compare theory and simulation around the threshold"},
      {"sweep", "Classify rates along the target direction"}};
  for (const auto& c : commands) add_options(app.add_subcommand(c[0], c[1]), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return dispatch(name, opts);
  } catch (const macstab::CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const macstab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const macstab::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
