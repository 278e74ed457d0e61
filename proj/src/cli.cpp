#include "superloc/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "superloc/dataset.hpp"

namespace superloc {

using nlohmann::json;

namespace {

std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

json snr_json(double v) { return std::isinf(v) ? json("inf") : json(v); }
json point(Location p) { return json::array({p.x, p.y}); }

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f)
        throw IoError("failed writing " + path);
}

RunConfig load_with_overrides(const std::string& config_path, const CliOverrides& overrides)
{
    RunConfig cfg = load_run_config(config_path);
    cfg.experiment.seed = resolve_seed(overrides.seed, cfg.experiment.seed);
    if (overrides.threads) {
        if (*overrides.threads < 1)
            throw ConfigError("--threads", "must be >= 1");
        cfg.experiment.threads = *overrides.threads;
    }
    if (overrides.out)
        cfg.output.path = *overrides.out;
    return cfg;
}

template <typename F>
int guarded(std::ostream& err, F body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t file_seed)
{
    if (flag)
        return *flag;
    const char* env = std::getenv("SUPERLOC_SEED");
    if (env && *env) {
        std::uint64_t v = 0;
        const char* end = env + std::char_traits<char>::length(env);
        const auto res = std::from_chars(env, end, v);
        if (res.ec != std::errc() || res.ptr != end)
            throw ConfigError("SUPERLOC_SEED", std::string("not an unsigned integer: '") + env + "'");
        return v;
    }
    return file_seed;
}

std::string format_results(const RunConfig& cfg, const MonteCarloResult& result)
{
    const std::string cond = to_string(cfg.experiment.condition);
    if (cfg.output.format == OutputFormat::Csv) {
        std::ostringstream os;
        os << kResultsCsvHeader << "\n";
        for (const auto& tr : result.trials)
            os << cond << ',' << num(tr.snr_db) << ',' << tr.trial << ',' << num(tr.rmse_m) << ','
               << num(tr.ms_error_m) << ',' << (tr.converged ? 1 : 0) << ',' << (tr.ambiguous ? 1 : 0) << ','
               << num(tr.runtime_s) << "\n";
        return os.str();
    }

    json summary = json::array();
    for (const auto& s : result.table)
        summary.push_back({{"snr_db", snr_json(s.snr_db)},
                           {"mean_rmse_m", s.mean_rmse_m},
                           {"std_rmse_m", s.std_rmse_m},
                           {"trials", s.trials},
                           {"ambiguous", s.ambiguous_count},
                           {"nonconverged", s.nonconverged_count}});
    json trials = json::array();
    for (const auto& tr : result.trials) {
        json iters = json::array();
        for (const auto& it : tr.iterations)
            iters.push_back({{"iteration", it.iteration},
                             {"num_atoms", it.num_atoms},
                             {"loss_after_weights", it.loss_after_weights},
                             {"loss_after_local", it.loss_after_local}});
        trials.push_back({{"snr_db", snr_json(tr.snr_db)},
                          {"trial", tr.trial},
                          {"rmse_m", tr.rmse_m},
                          {"ms_error_m", tr.ms_error_m},
                          {"scatter_errors_m", tr.per_scatter_errors_m},
                          {"converged", tr.converged},
                          {"ambiguous", tr.ambiguous},
                          {"num_atoms", tr.num_atoms},
                          {"runtime_s", tr.runtime_s},
                          {"iterations", iters}});
    }
    json root = {{"schema_version", kResultsSchemaVersion},
                 {"condition", cond},
                 {"seed", cfg.experiment.seed},
                 {"summary", summary},
                 {"trials", trials}};
    return root.dump(1) + "\n";
}

std::string format_summary_line(const SnrSummary& s)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s snr=%s dB mean_rmse=%.4f m std=%.4f m trials=%d ambiguous=%d nonconverged=%d",
                  to_string(s.condition).c_str(), num(s.snr_db).c_str(), s.mean_rmse_m, s.std_rmse_m, s.trials,
                  s.ambiguous_count, s.nonconverged_count);
    return buf;
}

int cmd_run(const std::string& config_path, const CliOverrides& overrides, std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const RunConfig cfg = load_with_overrides(config_path, overrides);
        const ExperimentConfig& e = cfg.experiment;
        const MonteCarloResult result = run_monte_carlo(e.condition, e.snr_grid_db, e.trials, cfg.system, cfg.solver,
                                                        e.seed, cfg.monte_carlo_options());
        write_text(cfg.output.path, format_results(cfg, result));
        int nonconverged = 0;
        for (const auto& s : result.table) {
            out << format_summary_line(s) << "\n";
            nonconverged += s.nonconverged_count;
        }
        if (nonconverged > 0) {
            err << nonconverged << " trial(s) did not converge\n";
            return static_cast<int>(kExitNotConverged);
        }
        return static_cast<int>(kExitOk);
    });
}

int cmd_synth(const std::string& config_path, const std::string& out_path, const CliOverrides& overrides,
              std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const RunConfig cfg = load_with_overrides(config_path, overrides);
        const ExperimentConfig& e = cfg.experiment;
        const TrialData data =
            generate_trial(e.condition, e.snr_grid_db.front(), 0, cfg.system, cfg.solver, e.seed,
                           cfg.monte_carlo_options(), 0);
        write_dataset({cfg.system, data.measurements, data.scenario}, out_path);
        out << "wrote " << out_path << " (" << to_string(e.condition) << ", snr " << num(e.snr_grid_db.front())
            << " dB)\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_solve(const std::string& dataset_path, const std::string& config_path, const std::string& out_path,
              std::ostream& out, std::ostream& err)
{
    return guarded(err, [&] {
        const Dataset data = read_dataset(dataset_path);
        const RunConfig cfg = load_run_config(config_path);
        const SolveResult sol = adcg_solve(data.measurements, data.system, cfg.solver);

        json atoms = json::array();
        for (std::size_t k = 0; k < sol.candidate.size(); ++k) {
            json w = json::array();
            for (Eigen::Index j = 0; j < sol.candidate.weights.cols(); ++j) {
                const cplx g = sol.candidate.weights(static_cast<Eigen::Index>(k), j);
                w.push_back(json::array({g.real(), g.imag()}));
            }
            atoms.push_back({{"mobile_m", point(sol.candidate.atoms[k].mobile)},
                             {"scatter_m", point(sol.candidate.atoms[k].scatter)},
                             {"weights", w}});
        }
        json scatterers = json::array();
        for (const auto& s : ranked_scatterers(sol.candidate))
            scatterers.push_back(point(s));
        json iters = json::array();
        for (const auto& it : sol.log)
            iters.push_back({{"iteration", it.iteration},
                             {"num_atoms", it.num_atoms},
                             {"loss_after_weights", it.loss_after_weights},
                             {"loss_after_local", it.loss_after_local}});

        json root = {{"schema_version", kResultsSchemaVersion},
                     {"converged", sol.converged},
                     {"lambda1", sol.lambda1},
                     {"lambda2", sol.lambda2},
                     {"atoms", atoms},
                     {"scatterers_m", scatterers},
                     {"iterations", iters}};
        if (sol.candidate.empty()) {
            root["ms_estimate_m"] = nullptr;
        } else {
            const MsEstimate ms = extract_ms(sol.candidate);
            root["ms_estimate_m"] = point(ms.location);
            root["ambiguous"] = ms.ambiguous;
        }
        if (data.truth) {
            const SolutionScore score = score_solution(sol, *data.truth, cfg.solver.scene);
            root["rmse_m"] = score.error.rmse;
            root["ms_error_m"] = score.error.ms_error;
            root["scatter_errors_m"] = score.error.scatter_errors;
        }
        write_text(out_path, root.dump(1) + "\n");

        out << "atoms=" << sol.candidate.size();
        if (!sol.candidate.empty()) {
            const Location ms = extract_ms(sol.candidate).location;
            out << " ms=(" << num(ms.x) << ", " << num(ms.y) << ")";
        }
        if (data.truth)
            out << " ms_error_m=" << num(root["ms_error_m"].get<double>())
                << " rmse_m=" << num(root["rmse_m"].get<double>());
        out << "\n";
        return static_cast<int>(sol.converged ? kExitOk : kExitNotConverged);
    });
}

} // namespace superloc
