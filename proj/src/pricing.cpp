#include "rtlmp/pricing.hpp"

#include <cmath>
#include <limits>

namespace rtlmp {

LmpSolution solve_expost_lmp(const PowerCase& grid, const MarketConfig& market, const DcModel& model,
                             const CongestionPattern& pattern, const Vector& demand_shift) {
    const auto ng = static_cast<Eigen::Index>(grid.generators.size());
    const auto nd = static_cast<Eigen::Index>(grid.loads.size());
    const auto nb = static_cast<Eigen::Index>(model.bus_count);
    if (market.generator_bounds.size() != grid.generators.size() || market.load_bounds.size() != grid.loads.size())
        throw ModelError("market bounds do not match the participants of the case");
    if (demand_shift.size() != 0 && demand_shift.size() != nb)
        throw ModelError("demand shift must have one entry per bus");
    for (int k : pattern) {
        if (k < 0 || static_cast<std::size_t>(k) >= model.branch_count() || !model.closed[k] ||
            !std::isfinite(model.limits[k]))
            throw ModelError("congestion pattern names branch index " + std::to_string(k) +
                             ", which is not a closed limited line");
    }

    lp::Problem prob(ng + nd);
    std::vector<int> bus_of_var(static_cast<std::size_t>(ng + nd));
    for (Eigen::Index g = 0; g < ng; ++g) {
        prob.cost[g] = grid.generators[g].offer;
        prob.lower[g] = market.generator_bounds[g].min;
        prob.upper[g] = market.generator_bounds[g].max;
        bus_of_var[g] = grid.bus_index(grid.generators[g].bus);
    }
    for (Eigen::Index l = 0; l < nd; ++l) {
        prob.cost[ng + l] = -grid.loads[l].bid;
        prob.lower[ng + l] = market.load_bounds[l].min;
        prob.upper[ng + l] = market.load_bounds[l].max;
        bus_of_var[ng + l] = grid.bus_index(grid.loads[l].bus);
    }
    auto sign = [&](Eigen::Index v) { return v < ng ? 1.0 : -1.0; };

    Vector shift = demand_shift.size() ? demand_shift : Vector::Zero(nb);
    Vector balance(ng + nd);
    for (Eigen::Index v = 0; v < ng + nd; ++v) balance[v] = sign(v);
    prob.add_row(balance, lp::Sense::Equal, shift.sum());
    for (int k : pattern) {
        Vector row(ng + nd);
        for (Eigen::Index v = 0; v < ng + nd; ++v) row[v] = sign(v) * model.ptdf(k, bus_of_var[v]);
        prob.add_row(row, lp::Sense::LessEqual, model.ptdf.row(k).dot(shift));
    }

    LmpSolution out;
    out.pattern = pattern;
    const lp::Solution sol = lp::solve(prob);
    out.status = sol.status;
    if (sol.status == lp::Status::Unbounded)
        throw ModelError("ex-post pricing LP is unbounded; check the incremental bounds");
    if (sol.status != lp::Status::Optimal) return out;

    out.priced = true;
    out.dp = sol.x.head(ng);
    out.dd = sol.x.tail(nd);
    out.objective = sol.objective;
    out.degenerate = sol.degenerate;
    out.eta = sol.row_duals[0];
    out.mu = Vector(static_cast<Eigen::Index>(pattern.size()));
    for (std::size_t c = 0; c < pattern.size(); ++c)
        out.mu[static_cast<Eigen::Index>(c)] = std::max(0.0, -sol.row_duals[static_cast<Eigen::Index>(c) + 1]);
    out.lambda_raw = Vector::Constant(nb, out.eta);
    for (std::size_t c = 0; c < pattern.size(); ++c)
        out.lambda_raw -= out.mu[static_cast<Eigen::Index>(c)] * model.ptdf.row(pattern[c]).transpose();
    out.lambda = out.lambda_raw.cwiseMax(market.price_floor).cwiseMin(market.price_ceiling);
    return out;
}

double relative_perturbation(const Vector& base, const Vector& perturbed) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < base.size(); ++i) {
        if (std::abs(base[i]) < 1e-6) continue;
        sum += std::abs(perturbed[i] - base[i]) / std::abs(base[i]);
        ++count;
    }
    return count ? sum / count : 0.0;
}

PriceMetrics price_metrics(const std::vector<Vector>& base, const std::vector<Vector>& perturbed) {
    if (base.empty()) throw ModelError("price metrics need at least one trial");
    if (base.size() != perturbed.size()) throw ModelError("base and perturbed trial counts differ");
    const auto nb = base.front().size();
    PriceMetrics pm;
    pm.samples = base.size();
    pm.rpp = Vector::Zero(nb);
    std::vector<char> skip(static_cast<std::size_t>(nb), 0);
    for (std::size_t t = 0; t < base.size(); ++t) {
        if (base[t].size() != nb || perturbed[t].size() != nb) throw ModelError("price vectors differ in length");
        for (Eigen::Index i = 0; i < nb; ++i) {
            if (std::abs(base[t][i]) < 1e-6) skip[i] = 1;
            else pm.rpp[i] += std::abs(perturbed[t][i] - base[t][i]) / std::abs(base[t][i]);
        }
    }
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < nb; ++i) {
        if (skip[i]) {
            pm.rpp[i] = std::numeric_limits<double>::quiet_NaN();
            pm.excluded.push_back(static_cast<int>(i));
            continue;
        }
        pm.rpp[i] /= static_cast<double>(base.size());
        sum += pm.rpp[i];
        ++count;
    }
    pm.arpp = count ? sum / count : 0.0;
    return pm;
}

Vector nominal_dispatch(const PowerCase& grid, const DcModel& model) {
    const auto ng = static_cast<Eigen::Index>(grid.generators.size());
    lp::Problem prob(ng);
    Vector load = Vector::Zero(static_cast<Eigen::Index>(model.bus_count));
    for (std::size_t i = 0; i < grid.buses.size(); ++i) load[static_cast<Eigen::Index>(i)] = grid.buses[i].load_mw;
    std::vector<int> gbus(static_cast<std::size_t>(ng));
    for (Eigen::Index g = 0; g < ng; ++g) {
        prob.cost[g] = grid.generators[g].offer;
        prob.upper[g] = grid.generators[g].capacity_mw;
        gbus[g] = grid.bus_index(grid.generators[g].bus);
    }
    prob.add_row(Vector::Ones(ng), lp::Sense::Equal, load.sum());
    for (int k : model.limited) {
        Vector row(ng);
        for (Eigen::Index g = 0; g < ng; ++g) row[g] = model.ptdf(k, gbus[g]);
        const double base_flow = -model.ptdf.row(k).dot(load);
        prob.add_row(row, lp::Sense::LessEqual, model.limits[k] - base_flow);
        prob.add_row(row, lp::Sense::GreaterEqual, -model.limits[k] - base_flow);
    }
    const lp::Solution sol = lp::solve(prob);
    if (sol.status != lp::Status::Optimal)
        throw ModelError(std::string("nominal dispatch is ") + lp::to_string(sol.status));
    return sol.x;
}

Vector nominal_dispatch_state(const PowerCase& grid, const DcModel& model) {
    Vector p = nominal_dispatch(grid, model);
    Vector inj = Vector::Zero(static_cast<Eigen::Index>(model.bus_count));
    for (std::size_t i = 0; i < grid.buses.size(); ++i) inj[static_cast<Eigen::Index>(i)] -= grid.buses[i].load_mw;
    for (std::size_t g = 0; g < grid.generators.size(); ++g)
        inj[grid.bus_index(grid.generators[g].bus)] += p[static_cast<Eigen::Index>(g)];
    return state_from_injections(model, inj);
}

}  // namespace rtlmp
