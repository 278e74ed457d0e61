#pragma once

// Independent reference computations for the tests. None of these call into
// the library's forward model or solvers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "superloc/harness.hpp"
#include "superloc/signal.hpp"
#include "superloc/solver.hpp"

namespace oracle {

using superloc::cplx;
using superloc::CMatrix;
using superloc::Location;

inline constexpr double kPi = 3.14159265358979323846;

// Received block at one base station by sampling the delayed OFDM waveform
// x(t) = sum_n s(n) exp(i 2pi n df t) at N df and taking the DFT per antenna.
// The array response is the narrowband phase of each element's extra path
// length at the carrier.
inline CMatrix time_domain_block(const superloc::Scenario& sc, int bs, const superloc::SystemConfig& cfg)
{
    const int nr = cfg.num_antennas;
    const int n = cfg.num_subcarriers;
    const double c = cfg.speed_of_light;
    const double lambda = c / cfg.carrier_freq;
    const double spacing = cfg.element_spacing > 0 ? cfg.element_spacing : lambda / 2;
    const double fs = n * cfg.subcarrier_spacing;
    const Location base = cfg.bs_positions[static_cast<std::size_t>(bs)];

    CMatrix y = CMatrix::Zero(nr, n);
    for (const auto& path : sc.per_bs_paths[static_cast<std::size_t>(bs)]) {
        const Location last = path.scatter ? *path.scatter : sc.mobile;
        const double length = std::hypot(sc.mobile.x - last.x, sc.mobile.y - last.y) +
                              std::hypot(last.x - base.x, last.y - base.y);
        const double tau = length / c;
        const double theta = std::atan2(last.x - base.x, last.y - base.y);

        std::vector<cplx> samples(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            const double t = k / fs - tau;
            cplx x = 0;
            for (int q = 0; q < n; ++q)
                x += cfg.symbols(q) * std::polar(1.0, 2 * kPi * q * cfg.subcarrier_spacing * t);
            samples[static_cast<std::size_t>(k)] = x;
        }
        for (int m = 0; m < nr; ++m) {
            const cplx element = std::polar(1.0, 2 * kPi / lambda * spacing * std::sin(theta) * m);
            for (int q = 0; q < n; ++q) {
                cplx bin = 0;
                for (int k = 0; k < n; ++k)
                    bin += samples[static_cast<std::size_t>(k)] * std::polar(1.0, -2 * kPi * q * k / n);
                y(m, q) += path.gain * element * bin / static_cast<double>(n);
            }
        }
    }
    return y;
}

// Sparse-group lasso objective written out from its definition.
inline double group_lasso_objective(const std::vector<std::vector<CMatrix>>& atoms, const CMatrix& w,
                                    const std::vector<CMatrix>& y, double l1, double l2)
{
    double fit = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        CMatrix r = y[j];
        for (std::size_t k = 0; k < atoms.size(); ++k)
            r -= w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) * atoms[k][j];
        fit += r.squaredNorm();
    }
    double pen = 0;
    for (Eigen::Index k = 0; k < w.rows(); ++k)
        pen += l1 * w.row(k).cwiseAbs().sum() + l2 * w.row(k).norm();
    return fit + pen;
}

// Plain proximal gradient with a fixed 1/L step, run for a long time.
inline CMatrix ista_reference(const std::vector<std::vector<CMatrix>>& atoms, const std::vector<CMatrix>& y,
                              double l1, double l2, int iters = 400000)
{
    const auto k = static_cast<Eigen::Index>(atoms.size());
    const auto nbs = static_cast<Eigen::Index>(y.size());
    std::vector<CMatrix> gram(static_cast<std::size_t>(nbs));
    std::vector<Eigen::VectorXcd> proj(static_cast<std::size_t>(nbs));
    double lip = 0;
    for (Eigen::Index j = 0; j < nbs; ++j) {
        CMatrix g(k, k);
        Eigen::VectorXcd p(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            const CMatrix& ba = atoms[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)];
            p(a) = (ba.conjugate().cwiseProduct(y[static_cast<std::size_t>(j)])).sum();
            for (Eigen::Index b = 0; b < k; ++b)
                g(a, b) = (ba.conjugate().cwiseProduct(atoms[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)])).sum();
        }
        Eigen::SelfAdjointEigenSolver<CMatrix> es(g);
        lip = std::max(lip, 2 * es.eigenvalues().maxCoeff());
        gram[static_cast<std::size_t>(j)] = g;
        proj[static_cast<std::size_t>(j)] = p;
    }
    const double step = 1 / lip;
    CMatrix w = CMatrix::Zero(k, nbs);
    for (int it = 0; it < iters; ++it) {
        CMatrix v = w;
        for (Eigen::Index j = 0; j < nbs; ++j)
            v.col(j) -= step * 2 * (gram[static_cast<std::size_t>(j)] * w.col(j) - proj[static_cast<std::size_t>(j)]);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index j = 0; j < nbs; ++j) {
                const double mag = std::abs(v(a, j));
                v(a, j) = mag > step * l1 ? v(a, j) * ((mag - step * l1) / mag) : cplx(0);
            }
            const double nrm = v.row(a).norm();
            v.row(a) *= nrm > step * l2 ? (nrm - step * l2) / nrm : 0.0;
        }
        const double change = (v - w).cwiseAbs().maxCoeff();
        w = v;
        if (change < 1e-15)
            break;
    }
    return w;
}

// Least-squares weights per base station from the normal equations.
inline CMatrix normal_equations(const std::vector<std::vector<CMatrix>>& atoms, const std::vector<CMatrix>& y)
{
    const auto k = static_cast<Eigen::Index>(atoms.size());
    CMatrix w(k, static_cast<Eigen::Index>(y.size()));
    for (std::size_t j = 0; j < y.size(); ++j) {
        CMatrix a(y[j].size(), k);
        for (Eigen::Index c = 0; c < k; ++c)
            a.col(c) = atoms[static_cast<std::size_t>(c)][j].reshaped();
        const CMatrix lhs = a.adjoint() * a;
        const Eigen::VectorXcd rhs = a.adjoint() * y[j].reshaped();
        w.col(static_cast<Eigen::Index>(j)) = lhs.ldlt().solve(rhs);
    }
    return w;
}

// Minimum total distance over every permutation matching estimates to truths.
inline std::vector<int> brute_force_assignment(const std::vector<Location>& est, const std::vector<Location>& truth)
{
    std::vector<int> perm(truth.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0;
        for (std::size_t i = 0; i < est.size(); ++i)
            cost += std::hypot(est[i].x - truth[static_cast<std::size_t>(perm[i])].x,
                               est[i].y - truth[static_cast<std::size_t>(perm[i])].y);
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Central differences of the data fit in every atom coordinate.
inline std::vector<Eigen::Vector4d> fd_param_gradient(const superloc::CandidateSolution& cand,
                                                      const superloc::MeasurementSet& meas,
                                                      const superloc::SystemConfig& cfg, double h = 1e-3)
{
    std::vector<Eigen::Vector4d> out(cand.size());
    for (std::size_t k = 0; k < cand.size(); ++k)
        for (int d = 0; d < 4; ++d) {
            auto shifted = [&](double s) {
                superloc::CandidateSolution c = cand;
                double* coord[4] = {&c.atoms[k].mobile.x, &c.atoms[k].mobile.y, &c.atoms[k].scatter.x,
                                    &c.atoms[k].scatter.y};
                *coord[d] += s;
                return superloc::data_fit(c, meas, cfg);
            };
            out[k](d) = (shifted(h) - shifted(-h)) / (2 * h);
        }
    return out;
}

} // namespace oracle
