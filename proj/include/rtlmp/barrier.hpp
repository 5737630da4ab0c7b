#pragma once

#include "rtlmp/types.hpp"

#include <optional>
#include <vector>

namespace rtlmp::convex {

/// 0.5 y'Py + q'y + r <= 0 with P symmetric positive semidefinite.
struct QuadraticConstraint {
    Matrix p;
    Vector q;
    double r = 0.0;

    double value(const Vector& y) const { return 0.5 * y.dot(p * y) + q.dot(y) + r; }
    Vector gradient(const Vector& y) const { return p * y + q; }
};

/// minimize 0.5 y'Qy + c'y  s.t.  G y <= h  and the quadratic constraints.
/// An empty Q means a linear objective.
struct Problem {
    Matrix q_obj;
    Vector c;
    Matrix g;
    Vector h;
    std::vector<QuadraticConstraint> quadratic;

    Eigen::Index dim() const { return c.size(); }
    double objective(const Vector& y) const;
};

struct Options {
    double gap_tolerance = 1e-7;   // stop when (#constraints)/t falls below this
    double mu = 20.0;
    int max_newton = 5000;
    /// Stop early once the answer to "is the optimum <= value?" is known.
    std::optional<double> decide_below;
};

struct Result {
    bool feasible = false;
    bool converged = false;
    Vector y;
    double objective = 0.0;
    double lower_bound = -kInf;   // duality-gap bound on the optimum
    int newton_steps = 0;
};

/// Log-barrier interior-point method. A phase-1 problem finds a strictly
/// feasible point when `start` is absent or not strictly feasible; the
/// problem is reported infeasible when no such point exists.
Result solve(const Problem& problem, const std::optional<Vector>& start = std::nullopt,
             const Options& options = {});

/// Largest constraint value at y (negative means strictly feasible).
double max_violation(const Problem& problem, const Vector& y);

}  // namespace rtlmp::convex
