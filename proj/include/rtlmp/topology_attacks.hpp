#pragma once

#include "rtlmp/case_model.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/state_estimation.hpp"

#include <string>
#include <vector>

namespace rtlmp {

/// What the adversary controls: meter indices and breakers (branch indices).
struct Capabilities {
    std::vector<int> meters;
    std::vector<int> breakers;

    /// Every meter and breaker of the listed branches.
    static Capabilities of_lines(const PowerCase& grid, const MeterConfig& meters, const std::vector<int>& lines);
};

struct TargetScore {
    std::vector<int> removed;
    bool priced = false;
    bool detected = false;
    double perturbation = 0.0;
};

struct TopologyAttackPlan {
    bool feasible = false;
    std::string reason;              // why the requested target was rejected
    std::vector<int> removed;        // E_delta, branch indices
    std::vector<char> breaker_flips; // one per branch
    Vector a;                        // meter modification, m-vector
    double perturbation = 0.0;       // predicted relative price change
    std::vector<TargetScore> table;  // every evaluated target
};

/// m_(i,j): +1 at flow i->j and injection i, -1 at flow j->i and injection j.
Vector incidence_column(const PowerCase& grid, const MeterConfig& meters, int branch);

/// Breaker flips plus meter edits that make z consistent with the network
/// without the removed lines: subtract z_ij from z_i and z_ji from z_j,
/// then zero z_ij and z_ji.
TopologyAttackPlan line_removal_attack(const PowerCase& grid, const MeterConfig& meters, const Vector& z,
                                       const std::vector<int>& removed, const Capabilities& caps);

/// Subsets of at most `max_removals` lines that the adversary can remove
/// and that leave a connected, observable network. Canonical order.
std::vector<std::vector<int>> feasible_targets(const PowerCase& grid, const MeterConfig& meters,
                                               const Capabilities& caps, int max_removals);

/// Evaluates every feasible target through estimation and pricing and
/// returns the one that moves prices the most.
TopologyAttackPlan worst_topology_attack(const PowerCase& grid, const MarketConfig& market,
                                         const MeterConfig& meters, const Vector& z, const Capabilities& caps,
                                         int max_removals, const DetectorConfig& detector = {});

}  // namespace rtlmp
