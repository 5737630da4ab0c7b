#pragma once

#include "rtlmp/types.hpp"

#include <vector>

namespace rtlmp::lp {

enum class Sense { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

/// minimize cost'x  s.t.  rows x (sense) rhs,  lower <= x <= upper.
/// Bounds may be infinite.
struct Problem {
    Vector cost;
    Vector lower;
    Vector upper;
    Matrix rows;
    std::vector<Sense> senses;
    Vector rhs;

    explicit Problem(Eigen::Index variables = 0);
    void add_row(const Vector& coefficients, Sense sense, double value);
    Eigen::Index variable_count() const { return cost.size(); }
    Eigen::Index row_count() const { return rows.rows(); }
};

struct Solution {
    Status status = Status::Infeasible;
    Vector x;
    double objective = 0.0;
    /// Shadow prices: derivative of the optimal objective with respect to
    /// each row's right-hand side, read from the optimal basis.
    Vector row_duals;
    /// Some basic variable sits at zero; row duals may not be unique.
    bool degenerate = false;
    int iterations = 0;
};

/// Dense two-phase tableau simplex with Bland's rule throughout, so the
/// optimal basis (and with it the duals) is a deterministic function of the
/// input.
Solution solve(const Problem& problem);

const char* to_string(Status status);

}  // namespace rtlmp::lp
