#include "superloc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <numbers>
#include <stdexcept>
#include <string>

#include "superloc/minimise.hpp"

namespace superloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kExactFit = 1e-12;
constexpr cplx kI{0.0, 1.0};

void require(bool ok, const std::string& field, const std::string& msg)
{
    if (!ok)
        throw std::invalid_argument(field + ": " + msg);
}

// Steering vectors (columns, N_R x K) and delay vectors (columns, N x K) of
// every atom at one base station, plus the path parameters.
struct BsResponses
{
    CMatrix steer;
    CMatrix delay;
    Eigen::VectorXd theta;
    Eigen::VectorXd tau;
};

BsResponses responses_at(const std::vector<AtomParams>& atoms, int bs, const SystemConfig& cfg)
{
    const auto k = static_cast<Eigen::Index>(atoms.size());
    BsResponses r{CMatrix(cfg.num_antennas, k), CMatrix(cfg.num_subcarriers, k), Eigen::VectorXd(k),
                  Eigen::VectorXd(k)};
    const Location base = cfg.bs_positions[static_cast<std::size_t>(bs)];
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto& a = atoms[static_cast<std::size_t>(i)];
        const PathGeometry g = path_geometry(a.mobile, a.scatter, base, cfg.speed_of_light);
        r.theta[i] = g.doa;
        r.tau[i] = g.toa;
        r.steer.col(i) = steering(g.doa, cfg);
        r.delay.col(i) = delay_vector(g.toa, cfg);
    }
    return r;
}

CMatrix model_at(const BsResponses& r, const CMatrix& weights, int bs)
{
    return r.steer * weights.col(bs).asDiagonal() * r.delay.transpose();
}

double penalty(const CMatrix& weights, double lambda1, double lambda2)
{
    if (weights.size() == 0)
        return 0.0;
    return lambda1 * weights.cwiseAbs().sum() + lambda2 * weights.rowwise().norm().sum();
}

bool feasible(const AtomParams& a, const SystemConfig& cfg, const SolverConfig& scfg)
{
    if (!scfg.scene.contains(a.mobile) || !scfg.scene.contains(a.scatter))
        return false;
    for (const auto& b : cfg.bs_positions)
        if (distance(a.scatter, b) <= scfg.bs_exclusion_radius)
            return false;
    return true;
}

// Antenna-index and subcarrier-index ramps used by the derivative formulas.
Eigen::VectorXd ramp(int n)
{
    return Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
}

double array_phase_rate(const SystemConfig& cfg)
{
    return 2.0 * std::numbers::pi / cfg.wavelength() * cfg.spacing();
}

// Gram matrices, projections and data energies of the weight subproblem.
struct WeightProblem
{
    std::vector<CMatrix> gram;
    std::vector<CVector> proj;
    std::vector<double> energy;
};

WeightProblem weight_problem(const std::vector<AtomParams>& atoms, const MeasurementSet& meas,
                             const SystemConfig& cfg)
{
    WeightProblem wp;
    for (int j = 0; j < cfg.num_bs(); ++j) {
        const BsResponses r = responses_at(atoms, j, cfg);
        const CMatrix& y = meas.per_bs[static_cast<std::size_t>(j)];
        const CMatrix aa = r.steer.adjoint() * r.steer;
        const CMatrix bb = r.delay.adjoint() * r.delay;
        wp.gram.push_back(aa.cwiseProduct(bb));
        const CMatrix ay = r.steer.adjoint() * y;
        wp.proj.push_back(ay.cwiseProduct(r.delay.transpose().conjugate()).rowwise().sum());
        wp.energy.push_back(y.squaredNorm());
    }
    return wp;
}

double weight_objective(const WeightProblem& wp, const CMatrix& w, double lambda1, double lambda2)
{
    double f = 0.0;
    for (std::size_t j = 0; j < wp.gram.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const CVector g = w.col(jj);
        f += wp.energy[j] - 2.0 * g.dot(wp.proj[j]).real() + g.dot(wp.gram[j] * g).real();
    }
    return f + penalty(w, lambda1, lambda2);
}

CMatrix sparse_group_prox(const CMatrix& v, double t1, double t2)
{
    CMatrix out = v;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double m = std::abs(out.data()[i]);
        out.data()[i] = m > t1 ? out.data()[i] * (1.0 - t1 / m) : cplx{0.0, 0.0};
    }
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
        const double n = out.row(k).norm();
        if (n > t2)
            out.row(k) *= (1.0 - t2 / n);
        else
            out.row(k).setZero();
    }
    return out;
}

// Descent variables. A collapsed atom has its scatterer tied to its mobile,
// which removes the non-differentiable ridge mobile == scatter from the
// parametrisation.
struct Parametrisation
{
    MobileCoupling coupling;
    std::vector<bool> collapsed;

    [[nodiscard]] bool is_shared() const { return coupling == MobileCoupling::Shared; }
};

Eigen::VectorXd pack(const CandidateSolution& c, const Parametrisation& pz)
{
    std::vector<double> x;
    if (pz.is_shared()) {
        x.push_back(c.atoms.front().mobile.x);
        x.push_back(c.atoms.front().mobile.y);
    }
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& a = c.atoms[i];
        if (!pz.is_shared()) {
            x.push_back(a.mobile.x);
            x.push_back(a.mobile.y);
        }
        if (!pz.collapsed[i]) {
            x.push_back(a.scatter.x);
            x.push_back(a.scatter.y);
        }
    }
    return Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::vector<AtomParams> unpack(const Eigen::VectorXd& x, const Parametrisation& pz)
{
    const std::size_t k = pz.collapsed.size();
    std::vector<AtomParams> atoms(k);
    Eigen::Index pos = 0;
    Location t;
    if (pz.is_shared()) {
        t = {x[0], x[1]};
        pos = 2;
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (!pz.is_shared()) {
            t = {x[pos], x[pos + 1]};
            pos += 2;
        }
        atoms[i].mobile = t;
        if (pz.collapsed[i]) {
            atoms[i].scatter = t;
        } else {
            atoms[i].scatter = {x[pos], x[pos + 1]};
            pos += 2;
        }
    }
    return atoms;
}

Eigen::VectorXd pack_gradient(const std::vector<Eigen::Vector4d>& g, const Parametrisation& pz)
{
    std::vector<double> out;
    if (pz.is_shared()) {
        Eigen::Vector2d gt = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gt += g[i].head<2>();
            if (pz.collapsed[i])
                gt += g[i].tail<2>();
        }
        out = {gt[0], gt[1]};
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!pz.is_shared()) {
            Eigen::Vector2d gt = g[i].head<2>();
            if (pz.collapsed[i])
                gt += g[i].tail<2>();
            out.push_back(gt[0]);
            out.push_back(gt[1]);
        }
        if (!pz.collapsed[i]) {
            out.push_back(g[i][2]);
            out.push_back(g[i][3]);
        }
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

MinimiseOptions descent_options(const LocalDescentConfig& ld)
{
    return {ld.max_steps, ld.step_init, ld.armijo_c, ld.tol};
}

bool shared(const SolverConfig& scfg) { return scfg.coupling == MobileCoupling::Shared; }

} // namespace

// ---------------------------------------------------------------------------
// CandidateSolution

double CandidateSolution::tv(int bs) const
{
    if (weights.size() == 0)
        return 0.0;
    return weights.col(bs).cwiseAbs().sum();
}

double CandidateSolution::gtv() const
{
    if (weights.size() == 0)
        return 0.0;
    return weights.rowwise().norm().sum();
}

double CandidateSolution::tv_total() const
{
    if (weights.size() == 0)
        return 0.0;
    return weights.cwiseAbs().sum();
}

CandidateSolution empty_candidate(int num_bs)
{
    return {{}, CMatrix(0, num_bs)};
}

void SolverConfig::validate() const
{
    require(lambda_scale >= 0.0 && std::isfinite(lambda_scale), "lambda_scale", "must be >= 0");
    require(lambda1 >= 0.0 && std::isfinite(lambda1), "lambda1", "must be >= 0");
    require(lambda2 >= 0.0 && std::isfinite(lambda2), "lambda2", "must be >= 0");
    require(prune_threshold > 0.0, "prune_threshold", "must be > 0");
    require(max_outer_iters >= 1, "max_outer_iters", "must be >= 1");
    require(coarse_grid_points_per_axis >= 1, "coarse_grid_points_per_axis", "must be >= 1");
    require(scatter_grid_points_per_axis >= 1, "scatter_grid_points_per_axis", "must be >= 1");
    require(mobile_grid_points_per_axis >= 1, "mobile_grid_points_per_axis", "must be >= 1");
    require(refine_starts >= 1, "refine_starts", "must be >= 1");
    require(local_descent.max_steps >= 0, "local_descent.max_steps", "must be >= 0");
    require(local_descent.step_init > 0.0, "local_descent.step_init", "must be > 0");
    require(local_descent.armijo_c > 0.0 && local_descent.armijo_c < 1.0, "local_descent.armijo_c", "must be in (0, 1)");
    require(local_descent.tol > 0.0, "local_descent.tol", "must be > 0");
    require(weight_solver.max_iters >= 1, "weight_solver.max_iters", "must be >= 1");
    require(weight_solver.tol > 0.0, "weight_solver.tol", "must be > 0");
    require(stop_tol > 0.0, "stop_tol", "must be > 0");
    require(!scene.empty(), "scene", "must have positive width and height");
    require(bs_exclusion_radius >= 0.0, "bs_exclusion_radius", "must be >= 0");
    require(local_descent.collapse_radius >= 0.0, "local_descent.collapse_radius", "must be >= 0");
    require(!noiseless_snr_db || std::isfinite(*noiseless_snr_db), "noiseless_snr_db", "must be finite");
    require(debias_keep_ratio >= 0.0 && debias_keep_ratio < 1.0, "debias_keep_ratio", "must be in [0, 1)");
}

double noise_scaled_lambda(const MeasurementSet& meas, const SystemConfig& cfg, const SolverConfig& scfg)
{
    if (meas.per_bs.empty())
        return 0.0;
    const bool noisy = meas.snr_db && std::isfinite(*meas.snr_db);
    if (!noisy && !scfg.noiseless_snr_db)
        return 0.0;
    const double snr_lin = std::pow(10.0, (noisy ? *meas.snr_db : *scfg.noiseless_snr_db) / 10.0);
    const double entries = static_cast<double>(cfg.num_antennas) * cfg.num_subcarriers;
    double var = 0.0;
    for (const auto& y : meas.per_bs)
        var += y.squaredNorm() / (entries * (1.0 + snr_lin));
    var /= static_cast<double>(meas.per_bs.size());
    const double grid_atoms = std::pow(static_cast<double>(scfg.coarse_grid_points_per_axis), 4.0);
    return scfg.lambda_scale * std::sqrt(var) * std::sqrt(entries) * std::sqrt(2.0 * std::log(std::max(grid_atoms, 2.0)));
}

// ---------------------------------------------------------------------------
// Loss and gradients

std::vector<CMatrix> model(const CandidateSolution& candidate, const SystemConfig& cfg)
{
    std::vector<CMatrix> out;
    out.reserve(static_cast<std::size_t>(cfg.num_bs()));
    for (int j = 0; j < cfg.num_bs(); ++j) {
        if (candidate.empty()) {
            out.push_back(CMatrix::Zero(cfg.num_antennas, cfg.num_subcarriers));
            continue;
        }
        out.push_back(model_at(responses_at(candidate.atoms, j, cfg), candidate.weights, j));
    }
    return out;
}

double data_fit(const CandidateSolution& candidate, const MeasurementSet& measurements, const SystemConfig& cfg)
{
    const auto m = model(candidate, cfg);
    double f = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j)
        f += (measurements.per_bs[j] - m[j]).squaredNorm();
    return f;
}

double loss(const CandidateSolution& candidate, const MeasurementSet& measurements, const SystemConfig& cfg,
            const SolverConfig& scfg)
{
    return data_fit(candidate, measurements, cfg) + penalty(candidate.weights, scfg.lambda1, scfg.lambda2);
}

std::vector<CMatrix> residual_gradients(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                        const SystemConfig& cfg)
{
    auto m = model(candidate, cfg);
    for (std::size_t j = 0; j < m.size(); ++j)
        m[j] = 2.0 * (m[j] - measurements.per_bs[j]);
    return m;
}

std::vector<Eigen::Vector4d> analytic_param_gradient(const CandidateSolution& candidate,
                                                     const MeasurementSet& measurements, const SystemConfig& cfg)
{
    const std::size_t k = candidate.size();
    std::vector<Eigen::Vector4d> grad(k, Eigen::Vector4d::Zero());
    if (k == 0)
        return grad;
    const Eigen::VectorXd m_ramp = ramp(cfg.num_antennas);
    const Eigen::VectorXd n_ramp = ramp(cfg.num_subcarriers);
    const double kappa = array_phase_rate(cfg);
    const double omega = 2.0 * std::numbers::pi * cfg.subcarrier_spacing;
    const double c = cfg.speed_of_light;

    for (int j = 0; j < cfg.num_bs(); ++j) {
        const BsResponses r = responses_at(candidate.atoms, j, cfg);
        const CMatrix resid = model_at(r, candidate.weights, j) - measurements.per_bs[static_cast<std::size_t>(j)];
        const CMatrix rh = resid.adjoint();
        const Location base = cfg.bs_positions[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < k; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const cplx gamma = candidate.weights(ii, j);
            if (gamma == cplx{0.0, 0.0})
                continue;
            const AtomParams& p = candidate.atoms[i];
            const CVector a = r.steer.col(ii);
            const CVector b = r.delay.col(ii);
            const CVector da = (kI * kappa * std::cos(r.theta[ii])) * m_ramp.cast<cplx>().cwiseProduct(a);
            const CVector db = (-kI * omega) * n_ramp.cast<cplx>().cwiseProduct(b);
            const CVector u = rh * a;
            const CVector v = rh * da;
            const double d_theta = 2.0 * (gamma * b.cwiseProduct(v).sum()).real();
            const double d_tau = 2.0 * (gamma * db.cwiseProduct(u).sum()).real();

            const DelayPartials tp = toa_nlos_partials(p.mobile, p.scatter, base, c);
            const Location ap = doa_partials(p.scatter, base);
            grad[i][0] += d_tau * tp.d_mobile.x;
            grad[i][1] += d_tau * tp.d_mobile.y;
            grad[i][2] += d_tau * tp.d_scatter.x + d_theta * ap.x;
            grad[i][3] += d_tau * tp.d_scatter.y + d_theta * ap.y;
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Next source

Eigen::VectorXcd source_correlations(const AtomParams& params, const std::vector<CMatrix>& gradients,
                                     const SystemConfig& cfg)
{
    Eigen::VectorXcd c(cfg.num_bs());
    for (int j = 0; j < cfg.num_bs(); ++j)
        c[j] = frobenius_inner(atom(params.mobile, params.scatter, j, cfg), gradients[static_cast<std::size_t>(j)]);
    return c;
}

double source_objective(const AtomParams& params, const std::vector<CMatrix>& gradients, const SystemConfig& cfg)
{
    return -source_correlations(params, gradients, cfg).norm();
}

namespace {

// Value and gradient of -||c(params)|| with respect to (mobile, scatter).
double source_objective_grad(const AtomParams& p, const std::vector<CMatrix>& gradients, const SystemConfig& cfg,
                             Eigen::Vector4d* grad)
{
    const Eigen::VectorXd m_ramp = ramp(cfg.num_antennas);
    const Eigen::VectorXd n_ramp = ramp(cfg.num_subcarriers);
    const double kappa = array_phase_rate(cfg);
    const double omega = 2.0 * std::numbers::pi * cfg.subcarrier_spacing;
    const double c = cfg.speed_of_light;

    double norm2 = 0.0;
    Eigen::Vector4d acc = Eigen::Vector4d::Zero();
    for (int j = 0; j < cfg.num_bs(); ++j) {
        const Location base = cfg.bs_positions[static_cast<std::size_t>(j)];
        const PathGeometry g = path_geometry(p.mobile, p.scatter, base, c);
        const CVector a = steering(g.doa, cfg);
        const CVector b = delay_vector(g.toa, cfg);
        const auto& gj = gradients[static_cast<std::size_t>(j)];
        const Eigen::RowVectorXcd ag = a.adjoint() * gj;
        const cplx cj = (ag * b.conjugate())(0);
        norm2 += std::norm(cj);
        if (grad) {
            const CVector da = (kI * kappa * std::cos(g.doa)) * m_ramp.cast<cplx>().cwiseProduct(a);
            const CVector db = (-kI * omega) * n_ramp.cast<cplx>().cwiseProduct(b);
            const cplx dc_theta = (da.adjoint() * gj * b.conjugate())(0);
            const cplx dc_tau = (ag * db.conjugate())(0);
            // d|c|^2 = 2 Re(conj(c) dc)
            const double e_theta = 2.0 * (std::conj(cj) * dc_theta).real();
            const double e_tau = 2.0 * (std::conj(cj) * dc_tau).real();
            const DelayPartials tp = toa_nlos_partials(p.mobile, p.scatter, base, c);
            const Location ap = doa_partials(p.scatter, base);
            acc[0] += e_tau * tp.d_mobile.x;
            acc[1] += e_tau * tp.d_mobile.y;
            acc[2] += e_tau * tp.d_scatter.x + e_theta * ap.x;
            acc[3] += e_tau * tp.d_scatter.y + e_theta * ap.y;
        }
    }
    const double norm = std::sqrt(norm2);
    if (grad)
        *grad = norm > 0.0 ? Eigen::Vector4d(-acc / (2.0 * norm)) : Eigen::Vector4d::Zero();
    return -norm;
}

std::vector<Location> grid_points(const Scene& scene, int n)
{
    std::vector<Location> pts;
    pts.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    const double dx = scene.width() / n;
    const double dy = scene.height() / n;
    for (int ix = 0; ix < n; ++ix)
        for (int iy = 0; iy < n; ++iy)
            pts.push_back({scene.min.x + (ix + 0.5) * dx, scene.min.y + (iy + 0.5) * dy});
    return pts;
}

struct Scored
{
    double score; // |c|^2, larger is better
    AtomParams params;
};

// Keeps the `cap` best entries; an entry only displaces strictly worse ones,
// so among equal scores the earliest visited wins.
void keep_best(std::vector<Scored>& best, std::size_t cap, double score, const AtomParams& params)
{
    if (best.size() == cap && !(score > best.back().score))
        return;
    auto pos = std::find_if(best.begin(), best.end(), [&](const Scored& s) { return score > s.score; });
    best.insert(pos, {score, params});
    if (best.size() > cap)
        best.pop_back();
}

} // namespace

AtomParams select_next_source(const std::vector<CMatrix>& gradients, const SystemConfig& cfg,
                              const SolverConfig& scfg, std::optional<Location> fixed_mobile)
{
    const int nbs = cfg.num_bs();
    const int nsub = cfg.num_subcarriers;
    const double omega = 2.0 * std::numbers::pi * cfg.subcarrier_spacing;
    const double c = cfg.speed_of_light;

    const auto scatter_grid =
        grid_points(scfg.scene, fixed_mobile ? scfg.scatter_grid_points_per_axis : scfg.coarse_grid_points_per_axis);
    const auto mobile_grid = fixed_mobile ? std::vector<Location>{*fixed_mobile}
                                          : grid_points(scfg.scene, scfg.coarse_grid_points_per_axis);
    const CVector conj_symbols = cfg.symbols.conjugate();

    std::vector<Scored> best;
    const auto cap = static_cast<std::size_t>(scfg.refine_starts);
    CMatrix h(nsub, nbs);
    Eigen::VectorXd dsb(nbs);

    // Sweep order: scatterer (x-major), then mobile (x-major).
    for (const Location& s : scatter_grid) {
        bool excluded = false;
        for (const auto& b : cfg.bs_positions)
            excluded = excluded || distance(s, b) <= scfg.bs_exclusion_radius;
        if (excluded)
            continue;
        for (int j = 0; j < nbs; ++j) {
            const Location base = cfg.bs_positions[static_cast<std::size_t>(j)];
            const CVector a = steering(doa(s, base), cfg);
            h.col(j) = (a.adjoint() * gradients[static_cast<std::size_t>(j)]).transpose().cwiseProduct(conj_symbols);
            dsb[j] = distance(s, base);
        }
        for (const Location& t : mobile_grid) {
            const double d = distance(t, s);
            double score = 0.0;
            for (int j = 0; j < nbs; ++j) {
                const cplx z = std::polar(1.0, omega * (d + dsb[j]) / c);
                cplx acc = h(nsub - 1, j);
                for (int n = nsub - 2; n >= 0; --n)
                    acc = acc * z + h(n, j);
                score += std::norm(acc);
            }
            keep_best(best, cap, score, {t, s});
        }
    }

    // Direct-path atoms (scatter == mobile) on the finer grid.
    std::vector<Scored> direct;
    const auto direct_grid = fixed_mobile ? std::vector<Location>{*fixed_mobile}
                                          : grid_points(scfg.scene, scfg.scatter_grid_points_per_axis);
    for (const Location& t : direct_grid) {
        const AtomParams p{t, t};
        if (!feasible(p, cfg, scfg))
            continue;
        keep_best(direct, cap, std::norm(source_objective(p, gradients, cfg)), p);
    }
    if (best.empty() && direct.empty())
        return {fixed_mobile.value_or(scfg.scene.min), scfg.scene.min};

    const MinimiseOptions opts = descent_options(scfg.local_descent);
    AtomParams winner = best.empty() ? direct.front().params : best.front().params;
    double winner_value = kInf;
    for (const auto& start : direct) {
        if (fixed_mobile) {
            const double v = source_objective(start.params, gradients, cfg);
            if (v < winner_value) {
                winner_value = v;
                winner = start.params;
            }
            continue;
        }
        auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
            const AtomParams p{{x[0], x[1]}, {x[0], x[1]}};
            if (!feasible(p, cfg, scfg))
                return kInf;
            Eigen::Vector4d g4;
            const double v = source_objective_grad(p, gradients, cfg, g ? &g4 : nullptr);
            if (g)
                *g = g4.head<2>() + g4.tail<2>();
            return v;
        };
        const Location t = start.params.mobile;
        const MinimiseResult res = minimise_bfgs(f, Eigen::Vector2d(t.x, t.y), opts);
        if (res.value < winner_value) {
            winner_value = res.value;
            winner = {{res.x[0], res.x[1]}, {res.x[0], res.x[1]}};
        }
    }
    for (const auto& start : best) {
        MinimiseResult res;
        if (fixed_mobile) {
            const Location t = *fixed_mobile;
            auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
                const AtomParams p{t, {x[0], x[1]}};
                if (!feasible(p, cfg, scfg))
                    return kInf;
                Eigen::Vector4d g4;
                const double v = source_objective_grad(p, gradients, cfg, g ? &g4 : nullptr);
                if (g)
                    *g = g4.tail<2>();
                return v;
            };
            res = minimise_bfgs(f, Eigen::Vector2d(start.params.scatter.x, start.params.scatter.y), opts);
            const AtomParams p{t, {res.x[0], res.x[1]}};
            if (res.value < winner_value) {
                winner_value = res.value;
                winner = p;
            }
        } else {
            auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
                const AtomParams p{{x[0], x[1]}, {x[2], x[3]}};
                if (!feasible(p, cfg, scfg))
                    return kInf;
                Eigen::Vector4d g4;
                const double v = source_objective_grad(p, gradients, cfg, g ? &g4 : nullptr);
                if (g)
                    *g = g4;
                return v;
            };
            const auto& sp = start.params;
            res = minimise_bfgs(f, Eigen::Vector4d(sp.mobile.x, sp.mobile.y, sp.scatter.x, sp.scatter.y), opts);
            if (res.value < winner_value) {
                winner_value = res.value;
                winner = {{res.x[0], res.x[1]}, {res.x[2], res.x[3]}};
            }
        }
    }
    return winner;
}

// ---------------------------------------------------------------------------
// Weights

double weights_objective(const std::vector<AtomParams>& atoms, const CMatrix& weights,
                         const MeasurementSet& measurements, const SystemConfig& cfg, const SolverConfig& scfg)
{
    return weight_objective(weight_problem(atoms, measurements, cfg), weights, scfg.lambda1, scfg.lambda2);
}

WeightSolveResult solve_weights(const std::vector<AtomParams>& atoms, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg, const CMatrix* warm_start)
{
    if (atoms.empty())
        throw std::invalid_argument("solve_weights: empty atom list");
    const auto k = static_cast<Eigen::Index>(atoms.size());
    const int nbs = cfg.num_bs();
    const WeightProblem wp = weight_problem(atoms, measurements, cfg);

    WeightSolveResult out;
    if (scfg.lambda1 == 0.0 && scfg.lambda2 == 0.0) {
        // Plain least squares, one system per base station.
        out.weights = CMatrix::Zero(k, nbs);
        for (int j = 0; j < nbs; ++j) {
            const auto js = static_cast<std::size_t>(j);
            out.weights.col(j) = wp.gram[js].completeOrthogonalDecomposition().solve(wp.proj[js]);
        }
        out.converged = true;
        out.objective = weight_objective(wp, out.weights, 0.0, 0.0);
        return out;
    }

    double lmax = 0.0;
    for (const auto& g : wp.gram) {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(g, Eigen::EigenvaluesOnly);
        lmax = std::max(lmax, es.eigenvalues().maxCoeff());
    }
    if (!(lmax > 0.0)) {
        out.weights = CMatrix::Zero(k, nbs);
        out.converged = true;
        out.objective = weight_objective(wp, out.weights, scfg.lambda1, scfg.lambda2);
        return out;
    }
    const double step = 1.0 / (2.0 * lmax);
    const double t1 = step * scfg.lambda1;
    const double t2 = step * scfg.lambda2;

    const CMatrix x0 = (warm_start && warm_start->rows() == k && warm_start->cols() == nbs) ? *warm_start
                                                                                            : CMatrix::Zero(k, nbs);
    CMatrix x = x0;
    CMatrix y = x;
    double momentum = 1.0;
    CMatrix grad(k, nbs);

    for (int it = 0; it < scfg.weight_solver.max_iters; ++it) {
        out.iterations = it + 1;
        for (int j = 0; j < nbs; ++j)
            grad.col(j) = 2.0 * (wp.gram[static_cast<std::size_t>(j)] * y.col(j) - wp.proj[static_cast<std::size_t>(j)]);
        const CMatrix x_new = sparse_group_prox(y - step * grad, t1, t2);
        const double change = (x_new - x).norm();
        const double scale = x_new.norm();
        // Gradient-based adaptive restart.
        const double restart = ((y - x_new).adjoint() * (x_new - x)).trace().real();
        if (restart > 0.0) {
            momentum = 1.0;
            y = x_new;
        } else {
            const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            y = x_new + ((momentum - 1.0) / next) * (x_new - x);
            momentum = next;
        }
        x = x_new;
        if (change <= scfg.weight_solver.tol * scale || (scale == 0.0 && change == 0.0)) {
            out.converged = true;
            break;
        }
    }
    const double f_start = weight_objective(wp, x0, scfg.lambda1, scfg.lambda2);
    const double f_end = weight_objective(wp, x, scfg.lambda1, scfg.lambda2);
    if (f_end <= f_start) {
        out.weights = x;
        out.objective = f_end;
    } else {
        out.weights = x0;
        out.objective = f_start;
    }
    return out;
}

CandidateSolution prune(const CandidateSolution& candidate, const SolverConfig& scfg)
{
    CandidateSolution out;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < candidate.size(); ++i)
        if (candidate.weights.row(static_cast<Eigen::Index>(i)).norm() > scfg.prune_threshold)
            keep.push_back(static_cast<Eigen::Index>(i));
    out.weights = CMatrix(static_cast<Eigen::Index>(keep.size()), candidate.weights.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.atoms.push_back(candidate.atoms[static_cast<std::size_t>(keep[r])]);
        out.weights.row(static_cast<Eigen::Index>(r)) = candidate.weights.row(keep[r]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local improvement

namespace {

// Quasi-Newton descent on the atom locations. Each line search holds the
// weights fixed; the weights are re-solved after every accepted step, so the
// curvature estimate tracks the profiled objective.
CandidateSolution improve_with(CandidateSolution cur, const Parametrisation& pz, const MeasurementSet& measurements,
                               const SystemConfig& cfg, const SolverConfig& scfg)
{
    const LocalDescentConfig& ld = scfg.local_descent;
    double fit = data_fit(cur, measurements, cfg);
    double reg = fit + penalty(cur.weights, scfg.lambda1, scfg.lambda2);

    CandidateSolution probe = cur;
    auto fixed_fit = [&](const Eigen::VectorXd& x) {
        probe.atoms = unpack(x, pz);
        for (const auto& a : probe.atoms)
            if (!feasible(a, cfg, scfg))
                return kInf;
        return data_fit(probe, measurements, cfg);
    };
    auto gradient = [&](const CandidateSolution& c) {
        return pack_gradient(analytic_param_gradient(c, measurements, cfg), pz);
    };

    Eigen::VectorXd x = pack(cur, pz);
    const Eigen::Index n = x.size();
    Eigen::VectorXd g = gradient(cur);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool identity = true;

    for (int it = 0; it < ld.max_steps; ++it) {
        if (g.lpNorm<Eigen::Infinity>() == 0.0)
            break;
        Eigen::VectorXd d = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            identity = true;
            d = -g;
            slope = g.dot(d);
        }
        double alpha = identity ? ld.step_init / d.lpNorm<Eigen::Infinity>() : 1.0;
        probe.weights = cur.weights;
        bool accepted = false;
        Eigen::VectorXd x_new;
        double f_new = kInf;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = x + alpha * d;
            f_new = fixed_fit(x_new);
            if (f_new <= fit + ld.armijo_c * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (identity)
                break;
            h.setIdentity();
            identity = true;
            continue;
        }

        const double reg_old = reg;
        cur.atoms = unpack(x_new, pz);
        fit = f_new;
        reg = fit + penalty(cur.weights, scfg.lambda1, scfg.lambda2);
        const WeightSolveResult ws = solve_weights(cur.atoms, measurements, cfg, scfg, &cur.weights);
        CandidateSolution trial{cur.atoms, ws.weights};
        const double trial_fit = data_fit(trial, measurements, cfg);
        const double trial_reg = trial_fit + penalty(trial.weights, scfg.lambda1, scfg.lambda2);
        if (trial_fit <= fit && trial_reg <= reg) {
            cur.weights = std::move(trial.weights);
            fit = trial_fit;
            reg = trial_reg;
        }

        const Eigen::VectorXd step = x_new - x;
        const Eigen::VectorXd g_new = gradient(cur);
        const Eigen::VectorXd y = g_new - g;
        x = x_new;
        g = g_new;
        const double sy = step.dot(y);
        if (sy > 1e-12 * step.norm() * y.norm()) {
            if (identity)
                h *= sy / y.dot(y);
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * step * y.transpose();
            h = v * h * v.transpose() + rho * step * step.transpose();
            identity = false;
        }

        if (step.lpNorm<Eigen::Infinity>() < ld.tol)
            break;
        if (reg_old - reg <= 1e-15 * reg_old)
            break;
    }
    return cur;
}

} // namespace

CandidateSolution local_improve(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg)
{
    if (candidate.empty())
        return candidate;
    const std::size_t k = candidate.size();
    CandidateSolution start = candidate;
    if (scfg.coupling == MobileCoupling::Shared) {
        for (auto& a : start.atoms)
            a.mobile = start.atoms.front().mobile;
        if (loss(start, measurements, cfg, scfg) > loss(candidate, measurements, cfg, scfg))
            return candidate;
    }

    Parametrisation free{scfg.coupling, std::vector<bool>(k, false)};
    CandidateSolution best = improve_with(start, free, measurements, cfg, scfg);
    double best_loss = loss(best, measurements, cfg, scfg);

    // Atoms whose scatterer lies next to the mobile are also tried with the
    // scatterer tied to the mobile.
    Parametrisation tied{scfg.coupling, std::vector<bool>(k, false)};
    bool any = false;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& a = best.atoms[i];
        if (distance(a.mobile, a.scatter) <= scfg.local_descent.collapse_radius) {
            tied.collapsed[i] = true;
            any = true;
        }
    }
    if (!any)
        return best;

    for (int variant = 0; variant < 2; ++variant) {
        CandidateSolution c = best;
        for (std::size_t i = 0; i < k; ++i) {
            if (!tied.collapsed[i])
                continue;
            if (variant == 0) {
                c.atoms[i].scatter = c.atoms[i].mobile;
            } else {
                // Move the mobile onto the scatterer instead.
                const Location s = c.atoms[i].scatter;
                if (scfg.coupling == MobileCoupling::Shared)
                    for (auto& a : c.atoms)
                        a.mobile = s;
                else
                    c.atoms[i].mobile = s;
                for (std::size_t q = 0; q < k; ++q)
                    if (tied.collapsed[q])
                        c.atoms[q].scatter = c.atoms[q].mobile;
                break;
            }
        }
        bool ok = true;
        for (const auto& a : c.atoms)
            ok = ok && feasible(a, cfg, scfg);
        if (!ok)
            continue;
        c.weights = solve_weights(c.atoms, measurements, cfg, scfg, &c.weights).weights;
        c = improve_with(c, tied, measurements, cfg, scfg);
        const double l = loss(c, measurements, cfg, scfg);
        if (l < best_loss && data_fit(c, measurements, cfg) <= data_fit(start, measurements, cfg)) {
            best = std::move(c);
            best_loss = l;
        }
    }
    return best;
}

CandidateSolution reseat_mobile(const CandidateSolution& candidate, const MeasurementSet& measurements,
                                const SystemConfig& cfg, const SolverConfig& scfg)
{
    if (candidate.empty() || scfg.coupling != MobileCoupling::Shared)
        return candidate;
    const int nbs = cfg.num_bs();
    const double c = cfg.speed_of_light;

    // Tied atoms (scatter == mobile) follow the mobile. Without one, a direct
    // path at the trial position joins the fit.
    std::vector<std::size_t> fixed_idx;
    bool has_tied = false;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        const auto& a = candidate.atoms[i];
        if (a.scatter == a.mobile)
            has_tied = true;
        else
            fixed_idx.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(fixed_idx.size());
    const Eigen::Index k = nf + 1;

    // Mobile-independent parts for the untied atoms.
    std::vector<CMatrix> steer_fixed(nbs);
    std::vector<Eigen::VectorXd> dsb(nbs);
    std::vector<double> energy(nbs);
    for (int j = 0; j < nbs; ++j) {
        const Location base = cfg.bs_positions[static_cast<std::size_t>(j)];
        steer_fixed[j].resize(cfg.num_antennas, nf);
        dsb[j].resize(nf);
        for (Eigen::Index i = 0; i < nf; ++i) {
            const Location s = candidate.atoms[fixed_idx[static_cast<std::size_t>(i)]].scatter;
            steer_fixed[j].col(i) = steering(doa(s, base), cfg);
            dsb[j][i] = distance(s, base);
        }
        energy[j] = measurements.per_bs[static_cast<std::size_t>(j)].squaredNorm();
    }

    // Residual energy after an unpenalised least-squares fit of the gains.
    auto ls_fit = [&](Location t) {
        double total = 0.0;
        CMatrix steer(cfg.num_antennas, k);
        CMatrix delay(cfg.num_subcarriers, k);
        for (int j = 0; j < nbs; ++j) {
            const Location base = cfg.bs_positions[static_cast<std::size_t>(j)];
            const auto& y = measurements.per_bs[static_cast<std::size_t>(j)];
            steer.leftCols(nf) = steer_fixed[j];
            for (Eigen::Index i = 0; i < nf; ++i) {
                const double d = distance(t, candidate.atoms[fixed_idx[static_cast<std::size_t>(i)]].scatter);
                delay.col(i) = delay_vector((d + dsb[j][i]) / c, cfg);
            }
            steer.col(nf) = steering(doa(t, base), cfg);
            delay.col(nf) = delay_vector(distance(t, base) / c, cfg);
            CMatrix gram = (steer.adjoint() * steer).cwiseProduct(delay.adjoint() * delay);
            const CVector z = (steer.adjoint() * y).cwiseProduct(delay.transpose().conjugate()).rowwise().sum();
            gram.diagonal().array() += 1e-10 * gram.diagonal().real().sum() / static_cast<double>(k);
            const CVector g = gram.ldlt().solve(z);
            total += energy[j] - z.dot(g).real();
        }
        return total;
    };

    auto usable = [&](Location t) {
        for (const auto& b : cfg.bs_positions)
            if (distance(t, b) <= scfg.bs_exclusion_radius)
                return false;
        return true;
    };

    const Location current = candidate.atoms.front().mobile;
    if (!usable(current))
        return candidate;
    const double current_fit = ls_fit(current);
    Location best = current;
    double best_fit = current_fit;
    for (const Location& t : grid_points(scfg.scene, scfg.mobile_grid_points_per_axis)) {
        if (!usable(t))
            continue;
        const double f = ls_fit(t);
        if (f < best_fit) {
            best_fit = f;
            best = t;
        }
    }
    if (!(best_fit < current_fit * (1.0 - 1e-9)))
        return candidate;

    CandidateSolution trial = candidate;
    for (auto& a : trial.atoms) {
        if (a.scatter == a.mobile)
            a.scatter = best;
        a.mobile = best;
    }
    if (!has_tied) {
        trial.atoms.push_back({best, best});
        trial.weights.conservativeResize(trial.weights.rows() + 1, nbs);
        trial.weights.row(trial.weights.rows() - 1).setZero();
    }
    for (const auto& a : trial.atoms)
        if (!feasible(a, cfg, scfg))
            return candidate;
    trial.weights = solve_weights(trial.atoms, measurements, cfg, scfg, &trial.weights).weights;
    trial = prune(trial, scfg);
    if (trial.empty())
        return candidate;
    trial.weights = solve_weights(trial.atoms, measurements, cfg, scfg, &trial.weights).weights;
    trial = local_improve(trial, measurements, cfg, scfg);
    if (loss(trial, measurements, cfg, scfg) < loss(candidate, measurements, cfg, scfg))
        return trial;
    return candidate;
}

// ---------------------------------------------------------------------------
// Outer loop

SolveResult adcg_solve(const MeasurementSet& measurements, const SystemConfig& cfg, const SolverConfig& scfg_in)
{
    cfg.validate();
    scfg_in.validate();
    if (static_cast<int>(measurements.per_bs.size()) != cfg.num_bs())
        throw std::invalid_argument("measurement set has " + std::to_string(measurements.per_bs.size()) +
                                    " matrices for " + std::to_string(cfg.num_bs()) + " base stations");
    for (const auto& y : measurements.per_bs)
        if (y.rows() != cfg.num_antennas || y.cols() != cfg.num_subcarriers)
            throw std::invalid_argument("measurement matrix dimensions do not match the system configuration");

    SolverConfig scfg = scfg_in;
    if (scfg.auto_lambda) {
        const double lambda = noise_scaled_lambda(measurements, cfg, scfg);
        scfg.lambda1 = lambda;
        scfg.lambda2 = lambda;
    }

    SolveResult result;
    result.lambda1 = scfg.lambda1;
    result.lambda2 = scfg.lambda2;
    CandidateSolution cand = empty_candidate(cfg.num_bs());
    double energy = 0.0;
    for (const auto& y : measurements.per_bs)
        energy += y.squaredNorm();
    double prev = energy;
    if (energy == 0.0) {
        result.candidate = cand;
        result.converged = true;
        return result;
    }

    for (int it = 0; it < scfg.max_outer_iters; ++it) {
        const auto grads = residual_gradients(cand, measurements, cfg);
        // With a shared mobile the scatterer-only search runs alongside the
        // free one; a free proposal relocates the shared mobile.
        std::vector<AtomParams> proposals{select_next_source(grads, cfg, scfg)};
        if (shared(scfg) && !cand.empty())
            proposals.push_back(select_next_source(grads, cfg, scfg, cand.atoms.front().mobile));

        std::optional<CandidateSolution> best;
        double best_after_weights = 0.0;
        double best_after_local = kInf;
        for (const AtomParams& next : proposals) {
            // Zero gain is optimal for this atom: no descent direction.
            const Eigen::VectorXcd corr = source_correlations(next, grads, cfg);
            const double shrunk = (corr.cwiseAbs().array() - scfg.lambda1).max(0.0).matrix().norm();
            if (shrunk <= scfg.lambda2)
                continue;

            CandidateSolution trial = cand;
            if (shared(scfg) && !trial.empty() && !(trial.atoms.front().mobile == next.mobile)) {
                bool ok = true;
                for (auto& a : trial.atoms) {
                    if (a.scatter == a.mobile)
                        a.scatter = next.mobile;
                    a.mobile = next.mobile;
                    ok = ok && feasible(a, cfg, scfg);
                }
                if (!ok)
                    continue;
            }
            trial.atoms.push_back(next);
            trial.weights.conservativeResize(trial.weights.rows() + 1, cfg.num_bs());
            trial.weights.row(trial.weights.rows() - 1).setZero();
            WeightSolveResult ws = solve_weights(trial.atoms, measurements, cfg, scfg, &trial.weights);
            result.weight_solver_exhausted = result.weight_solver_exhausted || !ws.converged;
            trial.weights = ws.weights;
            const std::size_t before = trial.size();
            trial = prune(trial, scfg);
            if (trial.size() != before && !trial.empty()) {
                ws = solve_weights(trial.atoms, measurements, cfg, scfg, &trial.weights);
                result.weight_solver_exhausted = result.weight_solver_exhausted || !ws.converged;
                trial.weights = ws.weights;
            }
            const double after_weights = loss(trial, measurements, cfg, scfg);
            if (after_weights > prev)
                continue;

            trial = local_improve(trial, measurements, cfg, scfg);
            trial = reseat_mobile(trial, measurements, cfg, scfg);
            const double after_local = loss(trial, measurements, cfg, scfg);
            if (after_local < best_after_local) {
                best = std::move(trial);
                best_after_weights = after_weights;
                best_after_local = after_local;
            }
        }
        if (!best) {
            // Either the certificate holds or no proposal lowered the loss.
            result.converged = true;
            break;
        }

        result.log.push_back({it + 1, static_cast<int>(best->size()), best_after_weights, best_after_local});
        cand = std::move(*best);
        if (best_after_local <= 1e-20 * energy || prev - best_after_local < scfg.stop_tol * prev) {
            result.converged = true;
            break;
        }
        prev = best_after_local;
    }

    const bool noise_free = !measurements.snr_db || !std::isfinite(*measurements.snr_db);
    if (scfg.debias && noise_free && !cand.empty()) {
        SolverConfig plain = scfg;
        plain.lambda1 = 0.0;
        plain.lambda2 = 0.0;
        plain.prune_threshold = 0.0;
        auto refit = [&](CandidateSolution d) {
            d.weights = solve_weights(d.atoms, measurements, cfg, plain, &d.weights).weights;
            return local_improve(d, measurements, cfg, plain);
        };

        std::vector<Eigen::Index> order(static_cast<std::size_t>(cand.weights.rows()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return cand.weights.row(a).norm() > cand.weights.row(b).norm();
        });
        const double largest = cand.weights.row(order.front()).norm();

        // Smallest leading support that reproduces the data exactly.
        std::optional<CandidateSolution> exact;
        const std::size_t max_keep = std::min<std::size_t>(order.size(), 6);
        for (std::size_t keep = 1; keep <= max_keep && !exact; ++keep) {
            CandidateSolution d;
            d.weights.resize(static_cast<Eigen::Index>(keep), cand.weights.cols());
            for (std::size_t i = 0; i < keep; ++i) {
                d.atoms.push_back(cand.atoms[static_cast<std::size_t>(order[i])]);
                d.weights.row(static_cast<Eigen::Index>(i)) = cand.weights.row(order[i]);
            }
            d = refit(std::move(d));
            if (data_fit(d, measurements, cfg) <= kExactFit * energy)
                exact = std::move(d);
        }

        if (exact) {
            cand = std::move(*exact);
        } else {
            SolverConfig keep = plain;
            keep.prune_threshold = scfg.debias_keep_ratio * largest;
            CandidateSolution d = refit(prune(cand, keep));
            if (data_fit(d, measurements, cfg) <= data_fit(cand, measurements, cfg))
                cand = std::move(d);
        }
        cand = prune(cand, scfg);
    }
    result.candidate = std::move(cand);
    return result;
}

} // namespace superloc
