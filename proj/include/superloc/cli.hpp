#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "superloc/config.hpp"
#include "superloc/harness.hpp"

namespace superloc {

enum ExitCode : int
{
    kExitOk = 0,
    kExitFailure = 1,       ///< I/O or runtime failure
    kExitConfigError = 2,   ///< ConfigError or SchemaError
    kExitNotConverged = 3,  ///< results written, some solve hit max_outer_iters
};

inline constexpr int kResultsSchemaVersion = 1;
inline constexpr const char* kResultsCsvHeader =
    "condition,snr_db,trial,rmse_m,ms_error_m,converged,ambiguous,runtime_s";

/// Command-line values that take precedence over the config file.
struct CliOverrides
{
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

/// flag > SUPERLOC_SEED > file. A malformed SUPERLOC_SEED is a ConfigError.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t file_seed);

/// Results table in the configured format.
std::string format_results(const RunConfig& cfg, const MonteCarloResult& result);

std::string format_summary_line(const SnrSummary& summary);

int cmd_run(const std::string& config_path, const CliOverrides& overrides, std::ostream& out, std::ostream& err);

/// Trial 0 at the first SNR of the grid, seeded as cmd_run seeds it.
int cmd_synth(const std::string& config_path, const std::string& out_path, const CliOverrides& overrides,
              std::ostream& out, std::ostream& err);

/// The dataset's system replaces the config's; solver settings come from the config.
int cmd_solve(const std::string& dataset_path, const std::string& config_path, const std::string& out_path,
              std::ostream& out, std::ostream& err);

} // namespace superloc
