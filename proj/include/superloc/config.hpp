#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "superloc/harness.hpp"
#include "superloc/scenario.hpp"
#include "superloc/signal.hpp"
#include "superloc/solver.hpp"

namespace superloc {

inline constexpr int kConfigSchemaVersion = 1;

/// Configuration problem with the location it was found at.
class ConfigError : public std::runtime_error
{
public:
    ConfigError(const std::string& field, const std::string& message, int line = 0);

    [[nodiscard]] const std::string& field() const { return field_; }
    [[nodiscard]] int line() const { return line_; } ///< 1-based, 0 when unknown

private:
    std::string field_;
    int line_;
};

enum class OutputFormat
{
    Csv,
    Json,
};

struct ExperimentConfig
{
    Condition condition = Condition::NLoS;
    std::vector<double> snr_grid_db{-10.0, 0.0, 10.0}; ///< +inf for noise-free
    int trials = 50;
    std::uint64_t seed = 42;
    int num_scatterers = 0; ///< 0 selects default_num_scatterers
    GainModel gains = GainModel::RandomPhase;
    ScenarioOptions scenario;
    int threads = 1;
    bool record_timing = false;
};

struct OutputConfig
{
    std::string path = "results.csv";
    OutputFormat format = OutputFormat::Csv;
};

struct RunConfig
{
    SystemConfig system = SystemConfig::defaults();
    PilotKind pilots = PilotKind::Ones;
    std::uint64_t pilot_seed = 0;
    SolverConfig solver;
    ExperimentConfig experiment;
    OutputConfig output;

    /// Runs every nested validation; failures become ConfigError.
    void validate() const;

    [[nodiscard]] MonteCarloOptions monte_carlo_options() const;
};

/// Parses YAML text. Coordinates under `*_km` keys are converted to metres.
/// Unknown keys and a missing or different schema_version are rejected.
RunConfig parse_run_config(const std::string& text);

RunConfig load_run_config(const std::string& path);

/// YAML for `cfg` that parse_run_config reads back to the same values.
std::string dump_run_config(const RunConfig& cfg);

} // namespace superloc
