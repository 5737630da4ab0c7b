#include "rtlmp/price_geometry.hpp"

#include "rtlmp/simplex.hpp"
#include "rtlmp/state_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rtlmp {

CongestionPattern region_of_state(const DcModel& model, const Vector& x) {
    return congestion_of_flows(model, branch_flows(model, x));
}

RegionWitness region_witness(const DcModel& model, const CongestionPattern& pattern) {
    const auto n = static_cast<Eigen::Index>(model.state_dim);
    lp::Problem prob(n + 1);
    prob.lower.head(n).setConstant(-std::numbers::pi);
    prob.upper.head(n).setConstant(std::numbers::pi);
    prob.lower[n] = -kInf;
    prob.upper[n] = 1e6;   // keeps the program bounded without limited lines
    prob.cost[n] = -1.0;
    for (int k : model.limited) {
        const bool in = std::binary_search(pattern.begin(), pattern.end(), k);
        Vector row(n + 1);
        row.head(n) = model.flow.row(k).transpose();
        row[n] = 1.0;
        if (in) {
            row.head(n) *= -1.0;
            prob.add_row(row, lp::Sense::LessEqual, -model.limits[k]);
        } else {
            prob.add_row(row, lp::Sense::LessEqual, model.limits[k] - kStrictGap);
        }
    }
    for (int k : pattern)
        if (!std::binary_search(model.limited.begin(), model.limited.end(), k))
            throw ModelError("pattern names branch index " + std::to_string(k) + ", which is not a limited line");

    RegionWitness out;
    const lp::Solution sol = lp::solve(prob);
    if (sol.status != lp::Status::Optimal) return out;
    out.margin = sol.x[n];
    out.state = sol.x.head(n);
    out.nonempty = out.margin > 0.0;
    return out;
}

double boundary_margin(const DcModel& model, const Vector& x) {
    Vector f = branch_flows(model, x);
    double best = kInf;
    for (int k : model.limited) best = std::min(best, std::abs(f[k] - model.limits[k]));
    return best;
}

CandidateSet candidate_lines(const DcModel& model, const Vector& flows, double threshold, std::size_t cap) {
    if (!(threshold > 0.0)) throw ModelError("candidate threshold must be positive");
    CandidateSet set;
    std::vector<std::pair<double, int>> near;
    for (int k : model.limited) {
        const double gap = flows[k] - model.limits[k];
        if (std::abs(gap) <= threshold) near.emplace_back(std::abs(gap), k);
        else if (gap > threshold) set.fixed.push_back(k);
    }
    std::sort(near.begin(), near.end());
    if (near.size() > cap) {
        // Lines dropped by the cap keep their current side.
        for (std::size_t i = cap; i < near.size(); ++i)
            if (flows[near[i].second] >= model.limits[near[i].second]) set.fixed.push_back(near[i].second);
        near.resize(cap);
    }
    for (const auto& [gap, k] : near) set.lines.push_back(k);
    std::sort(set.lines.begin(), set.lines.end());
    std::sort(set.fixed.begin(), set.fixed.end());
    return set;
}

std::vector<CongestionPattern> expand_candidates(const CandidateSet& set) {
    const std::size_t c = set.lines.size();
    std::vector<CongestionPattern> out;
    out.reserve(std::size_t{1} << c);
    for (std::size_t mask = 0; mask < (std::size_t{1} << c); ++mask) {
        CongestionPattern p = set.fixed;
        for (std::size_t b = 0; b < c; ++b)
            if (mask & (std::size_t{1} << b)) p.push_back(set.lines[b]);
        std::sort(p.begin(), p.end());
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<CongestionPattern> candidate_patterns(const DcModel& model, const Vector& flows, double threshold,
                                                  std::size_t cap) {
    return expand_candidates(candidate_lines(model, flows, threshold, cap));
}

}  // namespace rtlmp
