#include "superloc/minimise.hpp"

#include <cmath>
#include <limits>

namespace superloc {

MinimiseResult minimise_bfgs(const Objective& f, Eigen::VectorXd x0, const MinimiseOptions& opts)
{
    const Eigen::Index n = x0.size();
    MinimiseResult res;
    res.x = std::move(x0);
    Eigen::VectorXd g(n);
    res.value = f(res.x, &g);
    if (!std::isfinite(res.value) || n == 0)
        return res;

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool identity = true;
    Eigen::VectorXd g_new(n);

    for (int it = 0; it < opts.max_steps; ++it) {
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
        double alpha = identity ? opts.step_init / d.lpNorm<Eigen::Infinity>() : 1.0;

        bool accepted = false;
        Eigen::VectorXd x_new;
        double f_new = std::numeric_limits<double>::infinity();
        for (int bt = 0; bt < 60; ++bt) {
            x_new = res.x + alpha * d;
            f_new = f(x_new, &g_new);
            if (f_new <= res.value + opts.armijo_c * alpha * slope) {
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

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double f_old = res.value;
        res.x = x_new;
        res.value = f_new;
        g = g_new;
        ++res.steps;

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (identity)
                h *= sy / y.dot(y);
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            h = v * h * v.transpose() + rho * s * s.transpose();
            identity = false;
        }

        if (s.lpNorm<Eigen::Infinity>() < opts.tol)
            break;
        if (std::abs(f_old - f_new) <= 1e-15 * std::abs(f_old))
            break;
    }
    return res;
}

} // namespace superloc
