#pragma once

#include <functional>

#include <Eigen/Dense>

namespace superloc {

struct MinimiseOptions
{
    int max_steps = 200;
    double step_init = 5.0; ///< largest coordinate move of the first trial step
    double armijo_c = 1e-4;
    double tol = 1e-7; ///< stop when the accepted step is below this (inf-norm)
};

struct MinimiseResult
{
    Eigen::VectorXd x;
    double value = 0.0;
    int steps = 0;
};

/// Value-and-gradient callback. Returning +inf marks the point infeasible; the
/// line search then backtracks.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// BFGS directions with Armijo backtracking. Falls back to steepest descent
/// whenever the quasi-Newton direction fails the line search, so the returned
/// value never exceeds the starting value.
MinimiseResult minimise_bfgs(const Objective& f, Eigen::VectorXd x0, const MinimiseOptions& opts);

} // namespace superloc
