#include "rtlmp/barrier.hpp"

#include <algorithm>
#include <cmath>

namespace rtlmp::convex {

double Problem::objective(const Vector& y) const {
    double value = c.dot(y);
    if (q_obj.size() > 0) value += 0.5 * y.dot(q_obj * y);
    return value;
}

double max_violation(const Problem& problem, const Vector& y) {
    double worst = -kInf;
    if (problem.g.rows() > 0) worst = std::max(worst, (problem.g * y - problem.h).maxCoeff());
    for (const auto& qc : problem.quadratic) worst = std::max(worst, qc.value(y));
    return worst;
}

namespace {

constexpr int kCenteringBudget = 200;

struct Centering {
    const Problem& pb;
    double t = 1.0;

    // Returns +inf outside the domain.
    double phi(const Vector& y) const {
        double value = t * pb.objective(y);
        if (pb.g.rows() > 0) {
            Vector slack = pb.h - pb.g * y;
            if ((slack.array() <= 0).any()) return kInf;
            value -= slack.array().log().sum();
        }
        for (const auto& qc : pb.quadratic) {
            double v = qc.value(y);
            if (v >= 0) return kInf;
            value -= std::log(-v);
        }
        return value;
    }

    void derivatives(const Vector& y, Vector& grad, Matrix& hess) const {
        const Eigen::Index n = y.size();
        grad = t * pb.c;
        hess = Matrix::Zero(n, n);
        if (pb.q_obj.size() > 0) {
            grad += t * (pb.q_obj * y);
            hess += t * pb.q_obj;
        }
        if (pb.g.rows() > 0) {
            Vector inv = (pb.h - pb.g * y).cwiseInverse();
            grad += pb.g.transpose() * inv;
            hess += pb.g.transpose() * inv.cwiseAbs2().asDiagonal() * pb.g;
        }
        for (const auto& qc : pb.quadratic) {
            const double v = qc.value(y);
            Vector dv = qc.gradient(y);
            grad += dv / (-v);
            hess += qc.p / (-v) + (dv * dv.transpose()) / (v * v);
        }
    }

    // Newton iterations to the central point for the current t.
    int center(Vector& y, int budget) const {
        int steps = 0;
        Vector grad;
        Matrix hess;
        while (steps < budget) {
            derivatives(y, grad, hess);
            const double scale = std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
            hess.diagonal().array() += 1e-13 * scale;
            Eigen::LDLT<Matrix> ldlt(hess);
            Vector step = -ldlt.solve(grad);
            if (!step.allFinite()) break;
            const double decrement = -grad.dot(step);
            ++steps;
            if (decrement / 2.0 <= 1e-11) break;
            double alpha = 1.0;
            const double f0 = phi(y);
            while (alpha > 1e-14) {
                Vector trial = y + alpha * step;
                double f1 = phi(trial);
                if (std::isfinite(f1) && f1 <= f0 - 0.01 * alpha * decrement) {
                    y = trial;
                    break;
                }
                alpha *= 0.5;
            }
            if (alpha <= 1e-14) break;
        }
        return steps;
    }
};

Eigen::Index constraint_count(const Problem& pb) {
    return pb.g.rows() + static_cast<Eigen::Index>(pb.quadratic.size());
}

// Path following from a strictly feasible y. `stop` lets phase 1 exit early.
// Returns the final gap bound m/t through `gap`.
template <class Stop>
int follow_path(const Problem& pb, Vector& y, const Options& opt, Stop stop, double& gap) {
    const double m = static_cast<double>(std::max<Eigen::Index>(1, constraint_count(pb)));
    Centering cen{pb, 1.0};
    int steps = 0;
    while (steps < opt.max_newton) {
        const int taken = cen.center(y, std::min(kCenteringBudget, opt.max_newton - steps));
        steps += taken;
        gap = m / cen.t;
        if (stop(y, gap)) break;
        // A centering that cannot finish means roundoff dominates: stop here.
        if (gap < opt.gap_tolerance || taken >= kCenteringBudget) break;
        cen.t *= opt.mu;
    }
    return steps;
}

}  // namespace

Result solve(const Problem& problem, const std::optional<Vector>& start, const Options& options) {
    const Eigen::Index n = problem.dim();
    Result res;

    // Row-normalize the linear constraints; the feasible set is unchanged.
    Problem pb = problem;
    for (Eigen::Index i = 0; i < pb.g.rows(); ++i) {
        const double norm = pb.g.row(i).norm();
        if (norm > 0) {
            pb.g.row(i) /= norm;
            pb.h[i] /= norm;
        } else if (pb.h[i] <= 0) {
            return res;   // 0 <= h fails: infeasible (or no interior)
        } else {
            pb.h[i] = 1.0;   // trivially satisfied row; keep it harmless
        }
    }

    Vector y = start ? *start : Vector::Zero(n);
    if (max_violation(pb, y) >= 0) {
        // Phase 1: minimize s subject to constraints relaxed by s, s >= -1.
        Problem p1;
        p1.c = Vector::Zero(n + 1);
        p1.c[n] = 1.0;
        p1.g = Matrix::Zero(pb.g.rows() + 1, n + 1);
        p1.h = Vector::Zero(pb.g.rows() + 1);
        if (pb.g.rows() > 0) {
            p1.g.topLeftCorner(pb.g.rows(), n) = pb.g;
            p1.g.col(n).head(pb.g.rows()).setConstant(-1.0);
            p1.h.head(pb.g.rows()) = pb.h;
        }
        p1.g(pb.g.rows(), n) = -1.0;
        p1.h[pb.g.rows()] = 1.0;
        for (const auto& qc : pb.quadratic) {
            QuadraticConstraint ext;
            ext.p = Matrix::Zero(n + 1, n + 1);
            ext.p.topLeftCorner(n, n) = qc.p;
            ext.q = Vector::Zero(n + 1);
            ext.q.head(n) = qc.q;
            ext.q[n] = -1.0;
            ext.r = qc.r;
            p1.quadratic.push_back(ext);
        }
        Vector y1(n + 1);
        y1.head(n) = y;
        y1[n] = std::max(max_violation(pb, y), 0.0) + 1.0;
        double gap1 = 0.0;
        res.newton_steps += follow_path(p1, y1, options, [&](const Vector& v, double gap) {
            if (v[n] < 0 && max_violation(pb, v.head(n)) < 0) return true;
            return v[n] - gap > 0;   // certified infeasible
        }, gap1);
        y = y1.head(n);
        if (!(max_violation(pb, y) < 0)) {
            res.y = y;
            return res;
        }
    }

    res.feasible = true;
    double gap = kInf;
    bool decided = false;
    res.newton_steps += follow_path(pb, y, options, [&](const Vector& v, double g) {
        if (!options.decide_below) return false;
        const double f = pb.objective(v);
        decided = f <= *options.decide_below || f - g > *options.decide_below;
        return decided;
    }, gap);
    res.converged = decided || gap < options.gap_tolerance;
    res.y = y;
    res.objective = problem.objective(y);
    res.lower_bound = res.objective - gap;
    return res;
}

}  // namespace rtlmp::convex
