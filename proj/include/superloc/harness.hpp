#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "superloc/geometry.hpp"
#include "superloc/scenario.hpp"
#include "superloc/signal.hpp"
#include "superloc/solver.hpp"

namespace superloc {

enum class GainModel
{
    RandomPhase, ///< unit modulus, seeded uniform phase
    Unit,        ///< exactly 1
};

class InvalidCondition : public std::invalid_argument
{
public:
    explicit InvalidCondition(const std::string& what) : std::invalid_argument(what) {}
};

class EmptyCandidate : public std::runtime_error
{
public:
    explicit EmptyCandidate(const std::string& what) : std::runtime_error(what) {}
};

struct ScenarioOptions
{
    double bs_clearance = 20.0;  ///< metres between any base station and the mobile or a scatterer
    double min_separation = 0.0; ///< metres between the mobile and every scatterer, and between scatterers
    int max_attempts = 100000;
};

/// Scatterer count used when none is configured: 0 for LoS, 1 for NLoS,
/// 2 for OLoS and Mixed.
int default_num_scatterers(Condition condition);

/// Scatterers are shared by all base stations. Under OLoS every station
/// receives one path per scatterer; under NLoS every station receives the
/// direct path as well. Mixed flips a seeded coin per station: heads gives
/// the direct path plus the first num_scatterers - 1 scatterers, tails all
/// scatterers. LoS ignores num_scatterers.
Scenario generate_scenario(Condition condition, int num_scatterers, const Scene& scene, GainModel gains,
                           std::uint64_t seed, const SystemConfig& cfg, const ScenarioOptions& options = {});

struct MsEstimate
{
    Location location;
    bool ambiguous = false;
    double spread = 0.0; ///< largest pairwise distance between atom mobiles
};

/// Gain-weighted centroid of the atoms' mobile positions (weights ||gamma_k||).
MsEstimate extract_ms(const CandidateSolution& candidate, double ambiguity_threshold = 10.0);

/// Scatterer positions of the atoms ordered by descending ||gamma_k||
/// (stable for ties).
std::vector<Location> ranked_scatterers(const CandidateSolution& candidate);

struct Association
{
    std::vector<std::pair<int, int>> pairs; ///< (estimate index, truth index)
    std::vector<int> unmatched_estimates;
    std::vector<int> unmatched_truths;
};

/// Greedy nearest-neighbour matching. Estimates are visited in the given
/// order (callers pass them by descending weight).
Association associate_scatters(const std::vector<Location>& estimated, const std::vector<Location>& truth);

struct RmseBreakdown
{
    double rmse = 0.0;         ///< (sum_k e_sk + e_ms) / (K + 1), unmatched truths included
    double matched_rmse = 0.0; ///< same mean over matched scatterers only
    double ms_error = 0.0;
    std::vector<double> scatter_errors; ///< per truth scatterer
};

/// Truth scatterers left unmatched are charged their distance to the nearest
/// estimate of any kind (estimated scatterers, or the mobile when none exist).
RmseBreakdown rmse(Location estimated_ms, const std::vector<Location>& estimated_scatters, const Scenario& truth);

struct TrialResult
{
    int trial = 0;
    double snr_db = 0.0;
    double rmse_m = 0.0;
    double matched_rmse_m = 0.0;
    double ms_error_m = 0.0;
    std::vector<double> per_scatter_errors_m;
    bool converged = false;
    bool ambiguous = false;
    bool empty = false;
    double runtime_s = 0.0;
    int num_atoms = 0;
    std::vector<IterationRecord> iterations;
};

struct SnrSummary
{
    double snr_db = 0.0;
    Condition condition = Condition::NLoS;
    double mean_rmse_m = 0.0;
    double std_rmse_m = 0.0;
    int trials = 0;
    int ambiguous_count = 0;
    int nonconverged_count = 0;
};

struct MonteCarloOptions
{
    int num_scatterers = 0; ///< 0 selects default_num_scatterers
    GainModel gains = GainModel::RandomPhase;
    ScenarioOptions scenario;
    int threads = 1;
    bool record_timing = false; ///< runtime_s stays 0 unless set
};

struct MonteCarloResult
{
    std::vector<SnrSummary> table;
    std::vector<TrialResult> trials; ///< SNR-major, trial-minor
};

struct TrialData
{
    Scenario scenario;
    MeasurementSet measurements;
};

/// Scenario and noisy measurements of one trial, seeded exactly as run_trial.
TrialData generate_trial(Condition condition, double snr_db, int trial, const SystemConfig& cfg,
                         const SolverConfig& scfg, std::uint64_t seed, const MonteCarloOptions& options, int snr_index);

struct SolutionScore
{
    Location ms; ///< scene centre when the candidate is empty
    bool ambiguous = false;
    bool empty = false;
    RmseBreakdown error;
};

SolutionScore score_solution(const SolveResult& solution, const Scenario& truth, const Scene& scene);

/// Full pipeline for one trial: generate, synthesise, add noise, solve, score.
TrialResult run_trial(Condition condition, double snr_db, int trial, const SystemConfig& cfg,
                      const SolverConfig& scfg, std::uint64_t seed, const MonteCarloOptions& options, int snr_index);

/// Trials derive their seeds from (seed, trial index) so the table is
/// identical for any thread count.
MonteCarloResult run_monte_carlo(Condition condition, const std::vector<double>& snr_grid_db, int trials,
                                 const SystemConfig& cfg, const SolverConfig& scfg, std::uint64_t seed,
                                 const MonteCarloOptions& options = {});

} // namespace superloc
