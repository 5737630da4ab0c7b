#include "rtlmp/meter_attacks.hpp"

#include "rtlmp/barrier.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/state_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace rtlmp {

Vector SuspectSpace::embed(const Vector& local, Eigen::Index meter_count) const {
    Vector a = Vector::Zero(meter_count);
    for (std::size_t s = 0; s < meters.size(); ++s) a[meters[s]] = local[static_cast<Eigen::Index>(s)];
    return a;
}

const char* to_string(AttackModel model) {
    switch (model) {
        case AttackModel::M1: return "m1";
        case AttackModel::M2: return "m2";
        case AttackModel::M3: return "m3";
    }
    return "?";
}

AttackModel parse_attack_model(const std::string& text) {
    if (text == "m1" || text == "M1") return AttackModel::M1;
    if (text == "m2" || text == "M2") return AttackModel::M2;
    if (text == "m3" || text == "M3") return AttackModel::M3;
    throw ModelError("unknown attack model '" + text + "' (expected m1, m2 or m3)");
}

const char* to_string(SearchMethod method) { return method == SearchMethod::Greedy ? "greedy" : "exhaustive"; }

SearchMethod parse_search_method(const std::string& text) {
    if (text == "exhaustive") return SearchMethod::Exhaustive;
    if (text == "greedy") return SearchMethod::Greedy;
    throw ModelError("unknown search method '" + text + "' (expected exhaustive or greedy)");
}

Vector mmse_state(const StatePrior& prior, const Matrix& h0, const Vector& z0, const Vector& noise_var0) {
    if (h0.rows() == 0) return prior.mean;
    if (h0.cols() != prior.mean.size() || z0.size() != h0.rows())
        throw ModelError("observation matrix does not match the prior or the observations");
    if (noise_var0.size()) {
        if (noise_var0.size() != h0.rows()) throw ModelError("observation noise has the wrong length");
        // Information form; equal to the covariance form by the matrix
        // inversion lemma and better conditioned for vague priors.
        Eigen::LDLT<Matrix> prior_ldlt(prior.covariance);
        if (prior_ldlt.info() != Eigen::Success || (prior_ldlt.vectorD().array() <= 0).any())
            throw NumericalError("prior covariance is not positive definite");
        Matrix info = prior_ldlt.solve(Matrix::Identity(h0.cols(), h0.cols()));
        Vector inv_var = noise_var0.cwiseInverse();
        info += h0.transpose() * inv_var.asDiagonal() * h0;
        Vector innovation = z0 - h0 * prior.mean;
        return prior.mean + info.ldlt().solve(h0.transpose() * inv_var.cwiseProduct(innovation));
    }
    Matrix s = h0 * prior.covariance * h0.transpose();
    Eigen::LDLT<Matrix> ldlt(s);
    const double scale = std::max(1e-300, s.diagonal().cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array().abs() <= 1e-12 * scale).any())
        throw NumericalError("innovation covariance is singular");
    return prior.mean + prior.covariance * h0.transpose() * ldlt.solve(z0 - h0 * prior.mean);
}

std::vector<int> observed_half(const DcModel& model) {
    std::vector<int> active;
    for (std::size_t i = 0; i < model.active_meter.size(); ++i)
        if (model.active_meter[i]) active.push_back(static_cast<int>(i));
    std::vector<int> out;
    for (std::size_t i = 0; i < active.size(); i += 2) out.push_back(active[i]);
    return out;
}

namespace {

struct Restricted {
    Matrix k_s;   // n x |S|
    Matrix w_s;   // |S| x |S|
};

Restricted restrict(const Matrix& gain, const Matrix& kernel, const SuspectSpace& s) {
    const auto d = static_cast<Eigen::Index>(s.dim());
    Restricted r{Matrix(gain.rows(), d), Matrix(d, d)};
    for (Eigen::Index c = 0; c < d; ++c) {
        r.k_s.col(c) = gain.col(s.meters[c]);
        for (Eigen::Index c2 = 0; c2 < d; ++c2) r.w_s(c, c2) = kernel(s.meters[c], s.meters[c2]);
    }
    return r;
}

// Rows "coef' a + beta_coef * beta <= rhs" for the pattern and the box, where
// the expected state is base + ks a.
void pattern_rows(const DcModel& model, const CongestionPattern& pattern, const Vector& base, const Matrix& ks,
                  double beta_coef, double congested_gap, Matrix& g, Vector& h) {
    const auto d = ks.cols();
    const auto n = base.size();
    std::vector<std::pair<Vector, double>> rows;
    Vector f0 = model.flow * base;
    Matrix fk = model.flow * ks;
    for (int k : model.limited) {
        Vector row(d + 1);
        const bool in = std::binary_search(pattern.begin(), pattern.end(), k);
        if (in) {
            row.head(d) = -fk.row(k).transpose();
            row[d] = beta_coef;
            rows.emplace_back(row, f0[k] - model.limits[k] - congested_gap);
        } else {
            row.head(d) = fk.row(k).transpose();
            row[d] = beta_coef;
            rows.emplace_back(row, model.limits[k] - kStrictGap - f0[k]);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector row = Vector::Zero(d + 1);
        row.head(d) = ks.row(i).transpose();
        rows.emplace_back(row, std::numbers::pi - base[i]);
        rows.emplace_back(-row, std::numbers::pi + base[i]);
    }
    g = Matrix(static_cast<Eigen::Index>(rows.size()), d + 1);
    h = Vector(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        g.row(static_cast<Eigen::Index>(r)) = rows[r].first.transpose();
        h[static_cast<Eigen::Index>(r)] = rows[r].second;
    }
}

void check_pattern(const DcModel& model, const CongestionPattern& pattern) {
    for (int k : pattern)
        if (!std::binary_search(model.limited.begin(), model.limited.end(), k))
            throw ModelError("pattern names branch index " + std::to_string(k) + ", which is not a limited line");
}

}  // namespace

CenterAttack center_attack(const DcModel& model, const Matrix& gain, const Matrix& kernel,
                           const CongestionPattern& pattern, const Vector& anchor, const SuspectSpace& suspects,
                           double epsilon) {
    if (epsilon < 0) throw ModelError("attack budget must be nonnegative");
    check_pattern(model, pattern);
    const auto m = kernel.rows();
    Restricted r = restrict(gain, kernel, suspects);

    // With a zero budget the attack lives in the kernel's nullspace.
    Matrix basis;
    if (epsilon == 0.0) {
        if (suspects.dim() > 0) {
            Eigen::SelfAdjointEigenSolver<Matrix> eig(r.w_s);
            const double tol = 1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
            std::vector<Eigen::Index> null;
            for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
                if (std::abs(eig.eigenvalues()[i]) <= tol) null.push_back(i);
            basis = Matrix(r.w_s.rows(), static_cast<Eigen::Index>(null.size()));
            for (std::size_t c = 0; c < null.size(); ++c)
                basis.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(null[c]);
        } else {
            basis = Matrix(0, 0);
        }
    } else {
        basis = Matrix::Identity(r.w_s.rows(), r.w_s.rows());
    }
    const Matrix ks = r.k_s * basis;
    const auto d = ks.cols();

    convex::Problem prob;
    pattern_rows(model, pattern, anchor, ks, 1.0, 0.0, prob.g, prob.h);
    // beta <= cap keeps the program bounded when no pattern row limits it.
    Vector cap_row = Vector::Zero(d + 1);
    cap_row[d] = 1.0;
    prob.g.conservativeResize(prob.g.rows() + 1, Eigen::NoChange);
    prob.g.row(prob.g.rows() - 1) = cap_row.transpose();
    prob.h.conservativeResize(prob.h.size() + 1);
    prob.h[prob.h.size() - 1] = 1e6;
    prob.c = Vector::Zero(d + 1);
    prob.c[d] = -1.0;

    CenterAttack out;
    const Eigen::Index pattern_count = static_cast<Eigen::Index>(model.limited.size());
    if (d == 0) {
        out.beta = pattern_count ? prob.h.head(pattern_count).minCoeff() : 1e6;
        out.a = Vector::Zero(m);
        out.feasible = out.beta >= 0.0;
        return out;
    }
    if (epsilon > 0.0) {
        convex::QuadraticConstraint qc;
        qc.p = Matrix::Zero(d + 1, d + 1);
        qc.p.topLeftCorner(d, d) = 2.0 * r.w_s;
        qc.q = Vector::Zero(d + 1);
        qc.r = -epsilon;
        prob.quadratic.push_back(qc);
    }
    Vector start = Vector::Zero(d + 1);
    start[d] = prob.h.head(prob.h.size() - 1).minCoeff() - 1.0;
    auto res = convex::solve(prob, start);
    if (!res.feasible) return out;
    out.beta = res.y[d];
    out.a = suspects.embed(basis * res.y.head(d), m);
    out.feasible = out.beta >= 0.0;
    return out;
}

AdaptiveAttack m3_attack(const DcModel& model, const Matrix& gain, const Matrix& kernel, const Vector& z,
                         const CongestionPattern& pattern, const SuspectSpace& suspects, double tau,
                         bool decide_only) {
    check_pattern(model, pattern);
    const auto m = kernel.rows();
    Restricted r = restrict(gain, kernel, suspects);
    const auto d = static_cast<Eigen::Index>(suspects.dim());
    const Vector wz = kernel * z;
    const double base_stat = z.dot(wz);
    Vector base = gain * z;

    AdaptiveAttack out;
    out.a = Vector::Zero(m);
    out.statistic = base_stat;
    if (d == 0) {
        const bool in_region = congestion_of_flows(model, model.flow * base) == pattern;
        out.feasible = in_region && base_stat <= tau;
        return out;
    }

    // Variables (a_S, slot); the slot column is unused in this program.
    convex::Problem prob;
    Matrix g;
    Vector h;
    constexpr double kCongestedGap = 1e-6;
    pattern_rows(model, pattern, base, r.k_s, 0.0, kCongestedGap, g, h);
    prob.g = g.leftCols(d);
    prob.h = h;
    prob.q_obj = 2.0 * r.w_s;
    prob.c = Vector(d);
    for (Eigen::Index c = 0; c < d; ++c) prob.c[c] = 2.0 * wz[suspects.meters[c]];
    convex::Options opt;
    opt.gap_tolerance = 1e-8;
    // objective excludes the constant z'Wz
    if (decide_only) opt.decide_below = tau - base_stat;
    auto res = convex::solve(prob, Vector::Zero(d), opt);
    if (!res.feasible) return out;
    out.a = suspects.embed(res.y, m);
    out.statistic = (z + out.a).dot(kernel * (z + out.a));
    out.feasible = out.statistic <= tau;
    return out;
}

namespace {

struct Search {
    const AttackContext& ctx;
    const MeterAttackInputs& in;
    Vector reference;   // prices of the attack-free pattern
    std::map<CongestionPattern, std::optional<double>> objective_memo;
    int feasibility_checks = 0;
    int price_solves = 0;

    std::optional<double> objective(const CongestionPattern& p) {
        auto it = objective_memo.find(p);
        if (it != objective_memo.end()) return it->second;
        ++price_solves;
        auto s = solve_expost_lmp(ctx.grid, ctx.market, ctx.model, p);
        std::optional<double> v;
        if (s.priced) v = relative_perturbation(reference, s.lambda);
        objective_memo.emplace(p, v);
        return v;
    }

    // Returns the attack vector and its beta (or statistic) when feasible.
    std::optional<std::pair<Vector, double>> feasible(const CongestionPattern& p) {
        ++feasibility_checks;
        if (in.model == AttackModel::M3) {
            auto r = m3_attack(ctx.model, ctx.gain, ctx.kernel, in.z, p, ctx.suspects, in.tau, true);
            if (!r.feasible) return std::nullopt;
            return std::make_pair(r.a, r.statistic);
        }
        auto r = center_attack(ctx.model, ctx.gain, ctx.kernel, p, in.anchor, ctx.suspects, in.epsilon);
        if (!r.feasible) return std::nullopt;
        return std::make_pair(r.a, r.beta);
    }
};

}  // namespace

MeterAttackPlan worst_meter_attack(const AttackContext& ctx, const MeterAttackInputs& inputs,
                                   const CandidateSet& candidates, SearchMethod method) {
    const auto m = ctx.model.measurement.rows();
    MeterAttackPlan plan;
    plan.model = inputs.model;
    plan.a = Vector::Zero(m);
    plan.budget = inputs.model == AttackModel::M3 ? inputs.tau : inputs.epsilon;

    const Vector expected = inputs.model == AttackModel::M3 ? Vector(ctx.gain * inputs.z) : inputs.anchor;
    const CongestionPattern current = region_of_state(ctx.model, expected);
    plan.target = current;

    auto base = solve_expost_lmp(ctx.grid, ctx.market, ctx.model, current);
    plan.price_solves = 1;
    if (!base.priced) return plan;
    Search search{ctx, inputs, base.lambda, {}, 0, 0};
    search.objective_memo.emplace(current, 0.0);

    double best = -1.0;
    auto consider = [&](const CongestionPattern& p, double value) {
        if (value <= best) return false;
        auto f = search.feasible(p);
        if (!f) return false;
        best = value;
        plan.target = p;
        plan.a = f->first;
        plan.beta = f->second;
        plan.predicted_arpp = value;
        plan.attacked = p != current;
        return true;
    };

    if (method == SearchMethod::Exhaustive) {
        // Every candidate is priced. Walking them by decreasing value (ties
        // in canonical order, the attack-free pattern first) the first
        // feasible one is the optimum.
        auto all = expand_candidates(candidates);
        std::vector<std::pair<CongestionPattern, double>> scored;
        scored.emplace_back(current, 0.0);
        for (auto& p : all) {
            if (p == current) continue;
            if (auto v = search.objective(p)) scored.emplace_back(p, *v);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        for (auto& [p, value] : scored)
            if (consider(p, value)) break;
    } else {
        // Steepest ascent over single-line flips.
        CongestionPattern at = current;
        consider(current, 0.0);
        if (best < 0) best = 0.0;
        while (true) {
            std::vector<std::tuple<double, int, CongestionPattern>> moves;
            for (int line : candidates.lines) {
                CongestionPattern next = at;
                auto pos = std::lower_bound(next.begin(), next.end(), line);
                if (pos != next.end() && *pos == line) next.erase(pos);
                else next.insert(pos, line);
                auto v = search.objective(next);
                if (v && *v > best) moves.emplace_back(*v, line, std::move(next));
            }
            std::sort(moves.begin(), moves.end(), [](const auto& x, const auto& y) {
                if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
                return std::get<1>(x) < std::get<1>(y);
            });
            bool moved = false;
            for (auto& [value, line, next] : moves) {
                if (consider(next, value)) {
                    at = next;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
    }
    if (!plan.attacked) {
        plan.a = Vector::Zero(m);
        plan.target = current;
        plan.predicted_arpp = 0.0;
        plan.beta = 0.0;
    }
    plan.feasibility_checks = search.feasibility_checks;
    plan.price_solves += search.price_solves;
    return plan;
}

}  // namespace rtlmp
