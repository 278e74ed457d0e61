#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "superloc/geometry.hpp"

namespace superloc {

enum class Condition
{
    LoS,
    OLoS,
    NLoS,
    Mixed,
};

std::string to_string(Condition c);
/// Accepts "los", "olos", "nlos", "mixed" in any case. Throws std::invalid_argument.
Condition parse_condition(const std::string& s);

/// One received path at one base station.
struct Path
{
    std::optional<Location> scatter; ///< empty for a direct path
    std::complex<double> gain{1.0, 0.0};
};

/// Ground truth for one trial.
struct Scenario
{
    Location mobile;
    std::vector<std::vector<Path>> per_bs_paths; ///< indexed by base station
    Condition condition = Condition::NLoS;
    std::uint64_t seed = 0;
};

/// Distinct canonicalised scatterer positions of a scenario (virtual
/// scatterer at the mobile included when any base station has a direct path),
/// in first-appearance order.
std::vector<Location> truth_scatterers(const Scenario& scenario);

} // namespace superloc
