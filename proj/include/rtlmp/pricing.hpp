#pragma once

#include "rtlmp/dc_network.hpp"
#include "rtlmp/simplex.hpp"

#include <vector>

namespace rtlmp {

struct LmpSolution {
    bool priced = false;          // false when the LP is infeasible or unbounded
    lp::Status status = lp::Status::Infeasible;
    CongestionPattern pattern;
    Vector dp;                    // per generator, MW
    Vector dd;                    // per dispatchable load, MW
    double eta = 0.0;             // energy price, $/MWh
    Vector mu;                    // one per pattern entry, >= 0
    Vector lambda_raw;            // per bus, before the price caps
    Vector lambda;                // per bus, clamped
    double objective = 0.0;       // $/h
    bool degenerate = false;
};

/// Incremental ex-post OPF around the estimated operating point, with the
/// lines of `pattern` held at their limits. `demand_shift` (MW per bus,
/// optional) perturbs the load for sensitivity checks.
LmpSolution solve_expost_lmp(const PowerCase& grid, const MarketConfig& market, const DcModel& model,
                             const CongestionPattern& pattern, const Vector& demand_shift = {});

struct PriceMetrics {
    Vector rpp;                 // per bus; NaN for excluded buses
    double arpp = 0.0;
    std::size_t samples = 0;
    std::vector<int> excluded;  // buses whose reference price was ~0
};

/// Relative price perturbation per bus averaged over trials, and its bus
/// mean. A bus is excluded when any reference price has |lambda| < 1e-6.
PriceMetrics price_metrics(const std::vector<Vector>& base, const std::vector<Vector>& perturbed);

/// Mean over included buses of |perturbed - base| / |base| for one trial;
/// returns 0 when every bus is excluded.
double relative_perturbation(const Vector& base, const Vector& perturbed);

/// Least-cost dispatch (generator capacities, all line limits enforced in
/// both directions) serving the case load, as a state vector.
Vector nominal_dispatch_state(const PowerCase& grid, const DcModel& model);
/// Generator outputs of the same dispatch, MW.
Vector nominal_dispatch(const PowerCase& grid, const DcModel& model);

}  // namespace rtlmp
