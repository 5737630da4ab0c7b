#include "rtlmp/topology_attacks.hpp"

#include <algorithm>

namespace rtlmp {

Capabilities Capabilities::of_lines(const PowerCase& grid, const MeterConfig& meters, const std::vector<int>& lines) {
    Capabilities caps;
    caps.meters = meters_of_branches(grid, meters, lines);
    caps.breakers = lines;
    std::sort(caps.breakers.begin(), caps.breakers.end());
    caps.breakers.erase(std::unique(caps.breakers.begin(), caps.breakers.end()), caps.breakers.end());
    return caps;
}

Vector incidence_column(const PowerCase& grid, const MeterConfig& meters, int branch) {
    Vector col = Vector::Zero(static_cast<Eigen::Index>(meters.size()));
    const auto& br = grid.branches.at(static_cast<std::size_t>(branch));
    col[meters.flow_meter(branch, false)] = 1.0;
    col[meters.flow_meter(branch, true)] = -1.0;
    col[meters.injection_meter(grid.bus_index(br.from))] += 1.0;
    col[meters.injection_meter(grid.bus_index(br.to))] -= 1.0;
    return col;
}

namespace {

bool has(const std::vector<int>& sorted, int v) { return std::binary_search(sorted.begin(), sorted.end(), v); }

// Empty string when the adversary can act on every listed line.
std::string access_problem(const PowerCase& grid, const MeterConfig& meters, const std::vector<int>& removed,
                           const Capabilities& caps) {
    std::vector<int> mtr = caps.meters, brk = caps.breakers;
    std::sort(mtr.begin(), mtr.end());
    std::sort(brk.begin(), brk.end());
    for (int k : removed) {
        if (k < 0 || static_cast<std::size_t>(k) >= grid.branch_count()) return "unknown branch index";
        const std::string label = grid.branch_label(k);
        if (!grid.branches[k].closed) return "line " + label + " is already open";
        if (!has(brk, k)) return "no access to the breaker of line " + label;
        for (int m : meters_of_branches(grid, meters, {k}))
            if (!has(mtr, m)) return "no access to meter " + meters.meters[m].label;
    }
    return {};
}

std::string topology_problem(const PowerCase& grid, const std::vector<int>& removed) {
    PowerCase target = grid;
    for (int k : removed) target.branches[k].closed = false;
    if (!target.connected()) return "target topology is disconnected";
    try {
        build_dc_model(target);
    } catch (const NumericalError&) {
        return "target topology is unobservable";
    }
    return {};
}

}  // namespace

TopologyAttackPlan line_removal_attack(const PowerCase& grid, const MeterConfig& meters, const Vector& z,
                                       const std::vector<int>& removed, const Capabilities& caps) {
    TopologyAttackPlan plan;
    plan.removed = removed;
    std::sort(plan.removed.begin(), plan.removed.end());
    plan.breaker_flips.assign(grid.branch_count(), 0);
    plan.a = Vector::Zero(static_cast<Eigen::Index>(meters.size()));
    if (z.size() != plan.a.size()) throw ModelError("measurement vector does not match the meter set");
    plan.reason = access_problem(grid, meters, plan.removed, caps);
    if (plan.reason.empty()) plan.reason = topology_problem(grid, plan.removed);
    if (!plan.reason.empty()) return plan;
    // Move each removed line's flows out of its endpoint injections and
    // zero the flow meters. In noiseless data z_ji = -z_ij, so this equals
    // -z_ij m_(i,j).
    for (int k : plan.removed) {
        plan.breaker_flips[k] = 1;
        const int fwd = meters.flow_meter(k, false), rev = meters.flow_meter(k, true);
        plan.a[meters.injection_meter(grid.bus_index(grid.branches[k].from))] -= z[fwd];
        plan.a[meters.injection_meter(grid.bus_index(grid.branches[k].to))] -= z[rev];
        plan.a[fwd] = -z[fwd];
        plan.a[rev] = -z[rev];
    }
    plan.feasible = true;
    return plan;
}

std::vector<std::vector<int>> feasible_targets(const PowerCase& grid, const MeterConfig& meters,
                                               const Capabilities& caps, int max_removals) {
    if (max_removals < 1) throw ModelError("max_removals must be at least 1");
    std::vector<int> removable;
    for (std::size_t k = 0; k < grid.branch_count(); ++k)
        if (access_problem(grid, meters, {static_cast<int>(k)}, caps).empty()) removable.push_back(static_cast<int>(k));

    std::vector<std::vector<int>> out;
    std::vector<int> pick;
    // depth-first over increasing index sets
    auto visit = [&](auto&& self, std::size_t from) -> void {
        for (std::size_t i = from; i < removable.size(); ++i) {
            pick.push_back(removable[i]);
            if (topology_problem(grid, pick).empty()) out.push_back(pick);
            if (static_cast<int>(pick.size()) < max_removals) self(self, i + 1);
            pick.pop_back();
        }
    };
    visit(visit, 0);
    std::sort(out.begin(), out.end());
    return out;
}

TopologyAttackPlan worst_topology_attack(const PowerCase& grid, const MarketConfig& market,
                                         const MeterConfig& meters, const Vector& z, const Capabilities& caps,
                                         int max_removals, const DetectorConfig& detector) {
    TopologyAttackPlan best;
    best.breaker_flips.assign(grid.branch_count(), 0);
    best.a = Vector::Zero(static_cast<Eigen::Index>(meters.size()));
    best.feasible = true;

    const Vector var = meters.variances();
    const DcModel model = build_dc_model(grid);
    const auto base_rep = estimate(model, var, z, detector);
    const auto base = solve_expost_lmp(grid, market, model, base_rep.congestion);
    if (!base.priced) return best;

    double best_value = -1.0;
    for (const auto& target : feasible_targets(grid, meters, caps, max_removals)) {
        auto plan = line_removal_attack(grid, meters, z, target, caps);
        TargetScore score;
        score.removed = target;
        const DcModel tm = build_dc_model(apply_topology(grid, target));
        const auto rep = StateEstimator(tm, var, detector).estimate(z + plan.a);
        score.detected = rep.detected;
        const auto lmp = solve_expost_lmp(grid, market, tm, rep.congestion);
        score.priced = lmp.priced;
        if (lmp.priced) score.perturbation = relative_perturbation(base.lambda, lmp.lambda);
        best.table.push_back(score);
        if (score.priced && score.perturbation > best_value) {
            best_value = score.perturbation;
            auto table = std::move(best.table);
            best = std::move(plan);
            best.table = std::move(table);
            best.perturbation = score.perturbation;
        }
    }
    return best;
}

}  // namespace rtlmp
