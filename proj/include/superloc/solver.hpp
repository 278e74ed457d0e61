#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "superloc/geometry.hpp"
#include "superloc/signal.hpp"

namespace superloc {

/// Support point of the atomic measure: one mobile/scatterer pair.
struct AtomParams
{
    Location mobile;
    Location scatter;
};

/// Atoms together with their per-base-station gains.
/// weights(k, j) is the gain of atom k at base station j.
struct CandidateSolution
{
    std::vector<AtomParams> atoms;
    CMatrix weights;

    [[nodiscard]] std::size_t size() const { return atoms.size(); }
    [[nodiscard]] bool empty() const { return atoms.empty(); }

    /// sum_k |gamma_jk| for one base station.
    [[nodiscard]] double tv(int bs) const;
    /// sum_k ||gamma_k||_2 across base stations.
    [[nodiscard]] double gtv() const;
    /// sum_j tv(j), the entry-wise l1 norm.
    [[nodiscard]] double tv_total() const;
};

CandidateSolution empty_candidate(int num_bs);

enum class MobileCoupling
{
    Shared,  ///< one mobile position tied across all atoms
    PerAtom, ///< every atom carries its own mobile position
};

struct LocalDescentConfig
{
    int max_steps = 300;
    double step_init = 5.0; ///< metres
    double armijo_c = 1e-4;
    double tol = 1e-7; ///< metres
    double collapse_radius = 25.0; ///< metres; atoms this close to their mobile are also tried collapsed
};

struct WeightSolverConfig
{
    int max_iters = 20000;
    double tol = 1e-11;
};

struct SolverConfig
{
    bool auto_lambda = true; ///< derive lambda1/lambda2 from the noise level in adcg_solve
    double lambda_scale = 0.5;
    /// SNR assumed by the automatic lambda for noise-free measurements;
    /// unset gives lambda = 0 there.
    std::optional<double> noiseless_snr_db = 40.0;
    double lambda1 = 0.0; ///< entry-wise l1 (TV) weight
    double lambda2 = 0.0; ///< row-wise l2,1 (GTV) weight
    double prune_threshold = 1e-3;
    int max_outer_iters = 11;
    int coarse_grid_points_per_axis = 20;
    int scatter_grid_points_per_axis = 50; ///< scatterer sweep when the mobile is held fixed
    int mobile_grid_points_per_axis = 40;  ///< global search over the shared mobile
    int refine_starts = 3;
    LocalDescentConfig local_descent;
    WeightSolverConfig weight_solver;
    double stop_tol = 1e-6;
    Scene scene;
    double bs_exclusion_radius = 1.0;
    MobileCoupling coupling = MobileCoupling::Shared;
    /// Refit the final support of noise-free measurements without
    /// regularisation (weights and locations).
    bool debias = true;
    /// Atoms with gain norm below this fraction of the largest are dropped before the refit.
    double debias_keep_ratio = 0.1;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// lambda1 = lambda2 = scale * sigma * sqrt(N_R N) * sqrt(2 ln M), with sigma
/// estimated from the recorded SNR and M the number of coarse-grid atoms.
/// Noise-free measurements use noiseless_snr_db.
double noise_scaled_lambda(const MeasurementSet& measurements, const SystemConfig& cfg, const SolverConfig& scfg);

/// Per-base-station model matrices sum_k gamma_jk B_j(atom_k).
std::vector<CMatrix> model(const CandidateSolution& candidate, const SystemConfig& cfg);

/// sum_j ||Y_j - model_j||_F^2.
double data_fit(const CandidateSolution& candidate, const MeasurementSet& measurements, const SystemConfig& cfg);

/// Data fit + lambda1 * sum |gamma| + lambda2 * sum_k ||gamma_k||.
double loss(const CandidateSolution& candidate, const MeasurementSet& measurements,
            const SystemConfig& cfg, const SolverConfig& scfg);

/// g_j = 2 (model_j - Y_j).
std::vector<CMatrix> residual_gradients(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                        const SystemConfig& cfg);

/// Correlations c_j = <B_j(params), g_j> per base station.
Eigen::VectorXcd source_correlations(const AtomParams& params, const std::vector<CMatrix>& gradients,
                                     const SystemConfig& cfg);

/// Linearised objective of the next-source step, -||c||_2. The gain phase of
/// each base station is free, so the real part is taken after the optimal
/// phase rotation.
double source_objective(const AtomParams& params, const std::vector<CMatrix>& gradients, const SystemConfig& cfg);

/// Grid sweep plus continuous refinement of source_objective. With
/// `fixed_mobile` only the scatterer is searched.
AtomParams select_next_source(const std::vector<CMatrix>& gradients, const SystemConfig& cfg,
                              const SolverConfig& scfg, std::optional<Location> fixed_mobile = std::nullopt);

struct WeightSolveResult
{
    CMatrix weights;
    bool converged = false; ///< false means max_iters was exhausted (best iterate returned)
    int iterations = 0;
    double objective = 0.0;
};

/// Sparse-group lasso over the gains by accelerated proximal gradient.
WeightSolveResult solve_weights(const std::vector<AtomParams>& atoms, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg,
                                const CMatrix* warm_start = nullptr);

/// Objective minimised by solve_weights, evaluated in closed form.
double weights_objective(const std::vector<AtomParams>& atoms, const CMatrix& weights,
                         const MeasurementSet& measurements, const SystemConfig& cfg, const SolverConfig& scfg);

/// Removes atoms whose gain row norm is <= prune_threshold.
CandidateSolution prune(const CandidateSolution& candidate, const SolverConfig& scfg);

/// Exact gradient of the data fit with respect to each atom's
/// (mobile.x, mobile.y, scatter.x, scatter.y), weights held fixed.
std::vector<Eigen::Vector4d> analytic_param_gradient(const CandidateSolution& candidate,
                                                     const MeasurementSet& measurements, const SystemConfig& cfg);

/// Joint descent on all atom locations with weights fixed per line search,
/// weights re-solved between rounds. Neither the data fit nor the loss
/// increases.
CandidateSolution local_improve(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg);

/// Global grid search over the shared mobile position followed by local
/// improvement; the result replaces the input only when the loss drops.
CandidateSolution reseat_mobile(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg);

struct IterationRecord
{
    int iteration = 0;
    int num_atoms = 0;
    double loss_after_weights = 0.0;
    double loss_after_local = 0.0;
};

struct SolveResult
{
    CandidateSolution candidate;
    bool converged = false; ///< false: max_outer_iters reached without meeting stop_tol
    bool weight_solver_exhausted = false;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<IterationRecord> log;
};

/// Alternating descent conditional gradient over (mobile, scatterer) atoms.
SolveResult adcg_solve(const MeasurementSet& measurements, const SystemConfig& cfg, const SolverConfig& scfg);

} // namespace superloc
