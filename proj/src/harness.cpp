#include "superloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "superloc/rng.hpp"

namespace superloc {

namespace {

Location sample_point(Rng& rng, const Scene& scene, const SystemConfig& cfg, const ScenarioOptions& opt,
                      const std::vector<Location>& keep_away)
{
    std::uniform_real_distribution<double> ux(scene.min.x, scene.max.x);
    std::uniform_real_distribution<double> uy(scene.min.y, scene.max.y);
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        const Location p{ux(rng), uy(rng)};
        bool ok = true;
        for (const auto& b : cfg.bs_positions)
            ok = ok && distance(p, b) >= opt.bs_clearance;
        for (const auto& q : keep_away)
            ok = ok && distance(p, q) >= opt.min_separation;
        if (ok)
            return p;
    }
    throw std::runtime_error("generate_scenario: could not place a point satisfying the clearance constraints");
}

std::uint64_t condition_stream(Condition c)
{
    return static_cast<std::uint64_t>(c) + 1;
}

} // namespace

int default_num_scatterers(Condition condition)
{
    switch (condition) {
    case Condition::LoS:
        return 0;
    case Condition::NLoS:
        return 1;
    default:
        return 2;
    }
}

Scenario generate_scenario(Condition condition, int num_scatterers, const Scene& scene, GainModel gains,
                           std::uint64_t seed, const SystemConfig& cfg, const ScenarioOptions& options)
{
    if (scene.empty())
        throw std::invalid_argument("generate_scenario: empty scene");
    if (condition != Condition::LoS && num_scatterers < 1)
        throw InvalidCondition(to_string(condition) + " condition needs at least one scatterer");

    Rng rng(seed);
    Scenario sc;
    sc.condition = condition;
    sc.seed = seed;
    sc.mobile = sample_point(rng, scene, cfg, options, {});

    const int nbs = cfg.num_bs();
    std::vector<bool> direct(static_cast<std::size_t>(nbs), condition == Condition::NLoS);
    if (condition == Condition::Mixed) {
        std::bernoulli_distribution coin(0.5);
        for (int j = 0; j < nbs; ++j)
            direct[static_cast<std::size_t>(j)] = coin(rng);
    }

    const int pool_size = condition == Condition::LoS ? 0 : num_scatterers;
    std::vector<Location> placed{sc.mobile};
    std::vector<Location> pool;
    for (int k = 0; k < pool_size; ++k) {
        const Location s = sample_point(rng, scene, cfg, options, placed);
        pool.push_back(s);
        placed.push_back(s);
    }

    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    auto draw_gain = [&]() {
        return gains == GainModel::Unit ? cplx{1.0, 0.0} : std::polar(1.0, phase(rng));
    };
    sc.per_bs_paths.resize(static_cast<std::size_t>(nbs));
    for (int j = 0; j < nbs; ++j) {
        auto& paths = sc.per_bs_paths[static_cast<std::size_t>(j)];
        if (condition == Condition::LoS) {
            paths.push_back({std::nullopt, draw_gain()});
            continue;
        }
        const bool has_direct = direct[static_cast<std::size_t>(j)];
        if (has_direct)
            paths.push_back({std::nullopt, draw_gain()});
        const int scattered = condition == Condition::Mixed && has_direct ? pool_size - 1 : pool_size;
        for (int k = 0; k < scattered; ++k)
            paths.push_back({pool[static_cast<std::size_t>(k)], draw_gain()});
    }
    return sc;
}

MsEstimate extract_ms(const CandidateSolution& candidate, double ambiguity_threshold)
{
    if (candidate.empty())
        throw EmptyCandidate("extract_ms: candidate has no atoms");
    const Eigen::VectorXd w = candidate.weights.rowwise().norm();
    const double total = w.sum();
    Location acc{0.0, 0.0};
    for (std::size_t k = 0; k < candidate.size(); ++k) {
        const double wk = total > 0.0 ? w[static_cast<Eigen::Index>(k)] / total : 1.0 / candidate.size();
        acc = acc + wk * candidate.atoms[k].mobile;
    }
    MsEstimate est{acc, false, 0.0};
    for (std::size_t a = 0; a < candidate.size(); ++a)
        for (std::size_t b = a + 1; b < candidate.size(); ++b)
            est.spread = std::max(est.spread, distance(candidate.atoms[a].mobile, candidate.atoms[b].mobile));
    est.ambiguous = est.spread > ambiguity_threshold;
    return est;
}

std::vector<Location> ranked_scatterers(const CandidateSolution& candidate)
{
    std::vector<std::size_t> order(candidate.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    const Eigen::VectorXd w = candidate.size() ? Eigen::VectorXd(candidate.weights.rowwise().norm()) : Eigen::VectorXd();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return w[static_cast<Eigen::Index>(a)] > w[static_cast<Eigen::Index>(b)];
    });
    std::vector<Location> out;
    for (auto i : order)
        out.push_back(candidate.atoms[i].scatter);
    return out;
}

Association associate_scatters(const std::vector<Location>& estimated, const std::vector<Location>& truth)
{
    Association out;
    std::vector<bool> used(truth.size(), false);
    for (std::size_t e = 0; e < estimated.size(); ++e) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (used[t])
                continue;
            const double d = distance(estimated[e], truth[t]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(t);
            }
        }
        if (best < 0) {
            out.unmatched_estimates.push_back(static_cast<int>(e));
            continue;
        }
        used[static_cast<std::size_t>(best)] = true;
        out.pairs.emplace_back(static_cast<int>(e), best);
    }
    for (std::size_t t = 0; t < truth.size(); ++t)
        if (!used[t])
            out.unmatched_truths.push_back(static_cast<int>(t));
    return out;
}

RmseBreakdown rmse(Location estimated_ms, const std::vector<Location>& estimated_scatters, const Scenario& truth)
{
    const std::vector<Location> truths = truth_scatterers(truth);
    const Association assoc = associate_scatters(estimated_scatters, truths);
    RmseBreakdown out;
    out.ms_error = distance(estimated_ms, truth.mobile);
    out.scatter_errors.assign(truths.size(), 0.0);
    double matched_sum = 0.0;
    for (const auto& [e, t] : assoc.pairs) {
        const double d = distance(estimated_scatters[static_cast<std::size_t>(e)], truths[static_cast<std::size_t>(t)]);
        out.scatter_errors[static_cast<std::size_t>(t)] = d;
        matched_sum += d;
    }
    for (int t : assoc.unmatched_truths) {
        const Location p = truths[static_cast<std::size_t>(t)];
        double d = std::numeric_limits<double>::infinity();
        for (const auto& e : estimated_scatters)
            d = std::min(d, distance(e, p));
        if (estimated_scatters.empty())
            d = distance(estimated_ms, p);
        out.scatter_errors[static_cast<std::size_t>(t)] = d;
    }
    double total = out.ms_error;
    for (double d : out.scatter_errors)
        total += d;
    out.rmse = total / static_cast<double>(truths.size() + 1);
    out.matched_rmse = (matched_sum + out.ms_error) / static_cast<double>(assoc.pairs.size() + 1);
    return out;
}

TrialData generate_trial(Condition condition, double snr_db, int trial, const SystemConfig& cfg,
                         const SolverConfig& scfg, std::uint64_t seed, const MonteCarloOptions& options, int snr_index)
{
    const std::uint64_t cond_seed = derive_seed(seed, condition_stream(condition));
    const std::uint64_t scenario_seed = derive_seed(cond_seed, static_cast<std::uint64_t>(trial), 1);
    const std::uint64_t noise_seed =
        derive_seed(cond_seed, static_cast<std::uint64_t>(trial), 100 + static_cast<std::uint64_t>(snr_index));
    const int scatterers = options.num_scatterers > 0 ? options.num_scatterers : default_num_scatterers(condition);

    TrialData out;
    out.scenario = generate_scenario(condition, scatterers, scfg.scene, options.gains, scenario_seed, cfg, options.scenario);
    out.measurements = add_awgn(synthesize(out.scenario, cfg), snr_db, noise_seed);
    return out;
}

SolutionScore score_solution(const SolveResult& solution, const Scenario& truth, const Scene& scene)
{
    SolutionScore out;
    out.ms = {0.5 * (scene.min.x + scene.max.x), 0.5 * (scene.min.y + scene.max.y)};
    if (solution.candidate.empty()) {
        out.empty = true;
    } else {
        const MsEstimate ms = extract_ms(solution.candidate);
        out.ms = ms.location;
        out.ambiguous = ms.ambiguous;
    }
    out.error = rmse(out.ms, ranked_scatterers(solution.candidate), truth);
    return out;
}

TrialResult run_trial(Condition condition, double snr_db, int trial, const SystemConfig& cfg,
                      const SolverConfig& scfg, std::uint64_t seed, const MonteCarloOptions& options, int snr_index)
{
    const auto start = std::chrono::steady_clock::now();
    const TrialData data = generate_trial(condition, snr_db, trial, cfg, scfg, seed, options, snr_index);
    const SolveResult sol = adcg_solve(data.measurements, cfg, scfg);
    const SolutionScore score = score_solution(sol, data.scenario, scfg.scene);

    TrialResult tr;
    tr.trial = trial;
    tr.snr_db = snr_db;
    tr.converged = sol.converged;
    tr.iterations = sol.log;
    tr.num_atoms = static_cast<int>(sol.candidate.size());
    tr.empty = score.empty;
    tr.ambiguous = score.ambiguous;
    tr.rmse_m = score.error.rmse;
    tr.matched_rmse_m = score.error.matched_rmse;
    tr.ms_error_m = score.error.ms_error;
    tr.per_scatter_errors_m = score.error.scatter_errors;
    if (options.record_timing)
        tr.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

MonteCarloResult run_monte_carlo(Condition condition, const std::vector<double>& snr_grid_db, int trials,
                                 const SystemConfig& cfg, const SolverConfig& scfg, std::uint64_t seed,
                                 const MonteCarloOptions& options)
{
    if (trials < 1)
        throw std::invalid_argument("run_monte_carlo: trials must be >= 1");
    const std::size_t njobs = snr_grid_db.size() * static_cast<std::size_t>(trials);
    MonteCarloResult out;
    out.trials.resize(njobs);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t job = next++; job < njobs; job = next++) {
            const std::size_t si = job / static_cast<std::size_t>(trials);
            const int t = static_cast<int>(job % static_cast<std::size_t>(trials));
            out.trials[job] = run_trial(condition, snr_grid_db[si], t, cfg, scfg, seed, options, static_cast<int>(si));
        }
    };
    const int nthreads = std::max(1, options.threads);
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    for (std::size_t si = 0; si < snr_grid_db.size(); ++si) {
        SnrSummary s;
        s.snr_db = snr_grid_db[si];
        s.condition = condition;
        s.trials = trials;
        double sum = 0.0;
        for (int t = 0; t < trials; ++t) {
            const auto& tr = out.trials[si * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)];
            sum += tr.rmse_m;
            s.ambiguous_count += tr.ambiguous ? 1 : 0;
            s.nonconverged_count += tr.converged ? 0 : 1;
        }
        s.mean_rmse_m = sum / trials;
        double var = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double d = out.trials[si * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)].rmse_m - s.mean_rmse_m;
            var += d * d;
        }
        s.std_rmse_m = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
        out.table.push_back(s);
    }
    return out;
}

} // namespace superloc
