#include "rtlmp/simplex.hpp"

#include <cmath>

namespace rtlmp::lp {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr double kFeasTol = 1e-7;

// x_j = offset + sum(coef * y_col) over the standard-form columns it owns.
struct VariableMap {
    double offset = 0.0;
    int col = -1;
    double sign = 1.0;
    int col_neg = -1;   // free variables: x = y+ - y-
};

class Tableau {
public:
    Tableau(Eigen::Index rows, Eigen::Index structural)
        : m_(rows), n_(structural), t_(Matrix::Zero(rows + 1, structural + rows + 1)), basis_(rows) {}

    double& at(Eigen::Index r, Eigen::Index c) { return t_(r, c); }
    double rhs(Eigen::Index r) const { return t_(r, t_.cols() - 1); }
    double& rhs(Eigen::Index r) { return t_(r, t_.cols() - 1); }
    Eigen::Index artificial(Eigen::Index r) const { return n_ + r; }
    Eigen::Index objective_row() const { return m_; }
    std::vector<Eigen::Index>& basis() { return basis_; }
    const Matrix& data() const { return t_; }

    void pivot(Eigen::Index r, Eigen::Index c) {
        const double p = t_(r, c);
        t_.row(r) /= p;
        for (Eigen::Index i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[r] = c;
    }

    /// Runs Bland's rule on the current objective row. Columns >= `limit`
    /// may not enter.
    Status run(Eigen::Index limit, int& iterations, int max_iterations) {
        while (iterations < max_iterations) {
            Eigen::Index enter = -1;
            for (Eigen::Index c = 0; c < limit; ++c) {
                if (t_(m_, c) < -kCostTol) {
                    enter = c;
                    break;
                }
            }
            if (enter < 0) return Status::Optimal;
            Eigen::Index leave = -1;
            double best = 0.0;
            for (Eigen::Index r = 0; r < m_; ++r) {
                const double a = t_(r, enter);
                if (a <= kPivotTol) continue;
                const double ratio = rhs(r) / a;
                if (leave < 0 || ratio < best - 1e-12 * (1.0 + std::abs(best)) ||
                    (std::abs(ratio - best) <= 1e-12 * (1.0 + std::abs(best)) && basis_[r] < basis_[leave])) {
                    leave = r;
                    best = ratio;
                }
            }
            if (leave < 0) return Status::Unbounded;
            pivot(leave, enter);
            ++iterations;
        }
        return Status::IterationLimit;
    }

    void set_objective(const Vector& cost) {
        t_.row(m_).setZero();
        t_.row(m_).head(cost.size()) = cost.transpose();
        for (Eigen::Index r = 0; r < m_; ++r) {
            const double cb = basis_[r] < cost.size() ? cost[basis_[r]] : 0.0;
            if (cb != 0.0) t_.row(m_) -= cb * t_.row(r);
        }
    }

private:
    Eigen::Index m_;
    Eigen::Index n_;
    Matrix t_;
    std::vector<Eigen::Index> basis_;
};

}  // namespace

Problem::Problem(Eigen::Index variables)
    : cost(Vector::Zero(variables)),
      lower(Vector::Zero(variables)),
      upper(Vector::Constant(variables, kInf)),
      rows(0, variables) {}

void Problem::add_row(const Vector& coefficients, Sense sense, double value) {
    if (coefficients.size() != cost.size()) throw ModelError("LP row has wrong length");
    rows.conservativeResize(rows.rows() + 1, cost.size());
    rows.row(rows.rows() - 1) = coefficients.transpose();
    senses.push_back(sense);
    rhs.conservativeResize(rhs.size() + 1);
    rhs[rhs.size() - 1] = value;
}

const char* to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::IterationLimit: return "iteration-limit";
    }
    return "unknown";
}

Solution solve(const Problem& problem) {
    const Eigen::Index nv = problem.variable_count();
    const Eigen::Index nr = problem.row_count();

    // Standard-form columns for the original variables.
    std::vector<VariableMap> vars(static_cast<std::size_t>(nv));
    Eigen::Index cols = 0;
    std::vector<std::pair<Eigen::Index, double>> bound_rows;   // (column, width)
    for (Eigen::Index j = 0; j < nv; ++j) {
        auto& v = vars[j];
        const double lo = problem.lower[j], hi = problem.upper[j];
        if (lo > hi) {
            Solution s;
            s.status = Status::Infeasible;
            return s;
        }
        if (std::isfinite(lo)) {
            v.offset = lo;
            v.col = static_cast<int>(cols++);
            if (std::isfinite(hi)) bound_rows.emplace_back(v.col, hi - lo);
        } else if (std::isfinite(hi)) {
            v.offset = hi;
            v.sign = -1.0;
            v.col = static_cast<int>(cols++);
        } else {
            v.col = static_cast<int>(cols++);
            v.col_neg = static_cast<int>(cols++);
        }
    }
    const Eigen::Index structural_vars = cols;
    const Eigen::Index total_rows = nr + static_cast<Eigen::Index>(bound_rows.size());

    // Row data in terms of standard-form columns, before slacks.
    Matrix a = Matrix::Zero(total_rows, structural_vars);
    Vector b(total_rows);
    std::vector<Sense> sense(static_cast<std::size_t>(total_rows));
    for (Eigen::Index r = 0; r < nr; ++r) {
        double shift = 0.0;
        for (Eigen::Index j = 0; j < nv; ++j) {
            const double coef = problem.rows(r, j);
            if (coef == 0.0) continue;
            const auto& v = vars[j];
            shift += coef * v.offset;
            a(r, v.col) += coef * v.sign;
            if (v.col_neg >= 0) a(r, v.col_neg) -= coef;
        }
        b[r] = problem.rhs[r] - shift;
        sense[r] = problem.senses[r];
    }
    for (std::size_t k = 0; k < bound_rows.size(); ++k) {
        const Eigen::Index r = nr + static_cast<Eigen::Index>(k);
        a(r, bound_rows[k].first) = 1.0;
        b[r] = bound_rows[k].second;
        sense[r] = Sense::LessEqual;
    }

    Eigen::Index slacks = 0;
    for (auto s : sense) slacks += s == Sense::Equal ? 0 : 1;
    const Eigen::Index n = structural_vars + slacks;

    Tableau tab(total_rows, n);
    std::vector<double> flip(static_cast<std::size_t>(total_rows), 1.0);
    Eigen::Index slack_col = structural_vars;
    for (Eigen::Index r = 0; r < total_rows; ++r) {
        for (Eigen::Index c = 0; c < structural_vars; ++c) tab.at(r, c) = a(r, c);
        if (sense[r] == Sense::LessEqual) tab.at(r, slack_col++) = 1.0;
        if (sense[r] == Sense::GreaterEqual) tab.at(r, slack_col++) = -1.0;
        tab.rhs(r) = b[r];
        if (b[r] < 0) {
            flip[r] = -1.0;
            for (Eigen::Index c = 0; c < n; ++c) tab.at(r, c) = -tab.at(r, c);
            tab.rhs(r) = -b[r];
        }
        tab.at(r, tab.artificial(r)) = 1.0;
        tab.basis()[r] = tab.artificial(r);
    }

    Solution sol;
    const int max_iterations = 50000;

    // Phase 1: minimize the sum of artificials.
    Vector phase1 = Vector::Zero(n + total_rows);
    phase1.tail(total_rows).setOnes();
    tab.set_objective(phase1);
    Status st = tab.run(n, sol.iterations, max_iterations);
    if (st == Status::IterationLimit) {
        sol.status = st;
        return sol;
    }
    if (-tab.data()(total_rows, tab.data().cols() - 1) > kFeasTol * (1.0 + (b.size() ? b.cwiseAbs().maxCoeff() : 0.0))) {
        sol.status = Status::Infeasible;
        return sol;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (Eigen::Index r = 0; r < total_rows; ++r) {
        if (tab.basis()[r] < n) continue;
        for (Eigen::Index c = 0; c < n; ++c) {
            if (std::abs(tab.data()(r, c)) > kPivotTol) {
                tab.pivot(r, c);
                break;
            }
        }
    }

    // Phase 2.
    Vector phase2 = Vector::Zero(n + total_rows);
    for (Eigen::Index j = 0; j < nv; ++j) {
        const auto& v = vars[j];
        phase2[v.col] += problem.cost[j] * v.sign;
        if (v.col_neg >= 0) phase2[v.col_neg] -= problem.cost[j];
    }
    tab.set_objective(phase2);
    st = tab.run(n, sol.iterations, max_iterations);
    if (st != Status::Optimal) {
        sol.status = st;
        return sol;
    }

    Vector y = Vector::Zero(n);
    for (Eigen::Index r = 0; r < total_rows; ++r) {
        const Eigen::Index c = tab.basis()[r];
        const double value = tab.rhs(r);
        if (c < n) {
            y[c] = value;
            if (std::abs(value) <= 1e-9) sol.degenerate = true;
        }
    }
    sol.x = Vector(nv);
    for (Eigen::Index j = 0; j < nv; ++j) {
        const auto& v = vars[j];
        double x = v.offset + v.sign * y[v.col];
        if (v.col_neg >= 0) x -= y[v.col_neg];
        sol.x[j] = x;
    }
    sol.objective = problem.cost.dot(sol.x);
    // Reduced cost of artificial r equals -(c_B' B^-1)_r.
    sol.row_duals = Vector(nr);
    for (Eigen::Index r = 0; r < nr; ++r)
        sol.row_duals[r] = -tab.data()(total_rows, tab.artificial(r)) * flip[r];
    sol.status = Status::Optimal;
    return sol;
}

}  // namespace rtlmp::lp
