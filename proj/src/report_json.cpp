#include "rtlmp/report_json.hpp"

#include "rtlmp/price_geometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rtlmp {

using nlohmann::ordered_json;

namespace {

ordered_json numbers(const Vector& v) {
    ordered_json out = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(std::isfinite(v[i]) ? ordered_json(v[i]) : ordered_json(nullptr));
    return out;
}

ordered_json labels(const PowerCase& grid, const std::vector<int>& branches) {
    ordered_json out = ordered_json::array();
    for (int k : branches) out.push_back(grid.branch_label(k));
    return out;
}

// Nonzero entries only, keyed by meter label.
ordered_json sparse(const MeterConfig& meters, const Vector& a) {
    ordered_json out = ordered_json::object();
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] != 0.0) out[meters.meters[static_cast<std::size_t>(i)].label] = a[i];
    return out;
}

ordered_json prices(const PowerCase& grid, const Vector& lambda) {
    ordered_json out = ordered_json::object();
    for (std::size_t b = 0; b < grid.buses.size(); ++b)
        out[std::to_string(grid.buses[b].id)] = lambda[static_cast<Eigen::Index>(b)];
    return out;
}

}  // namespace

std::string case_summary_json(const CaseBundle& bundle) {
    const auto& g = bundle.grid;
    ordered_json doc;
    doc["name"] = g.name;
    doc["buses"] = g.bus_count();
    doc["branches"] = g.branch_count();
    doc["generators"] = g.generators.size();
    doc["dispatchable_loads"] = g.loads.size();
    doc["reference_bus"] = g.reference_bus;
    doc["meters"] = bundle.meters.size();
    doc["limited_lines"] = labels(g, g.limited_branches());
    std::vector<int> open;
    for (std::size_t k = 0; k < g.branch_count(); ++k)
        if (!g.branches[k].closed) open.push_back(static_cast<int>(k));
    doc["open_lines"] = labels(g, open);
    doc["connected"] = g.connected();
    doc["total_load_mw"] = [&] {
        double s = 0.0;
        for (const auto& b : g.buses) s += b.load_mw;
        return s;
    }();
    ordered_json suspects = ordered_json::array();
    for (int m : bundle.meters.suspects) suspects.push_back(bundle.meters.meters[static_cast<std::size_t>(m)].label);
    doc["suspects"] = suspects;
    return doc.dump(2) + "\n";
}

std::string estimate_json(const CaseBundle& bundle, const EstimateReport& report) {
    const auto& g = bundle.grid;
    ordered_json doc;
    doc["state_rad"] = numbers(report.state);
    ordered_json flows = ordered_json::object();
    for (std::size_t k = 0; k < g.branch_count(); ++k)
        flows[g.branch_label(static_cast<int>(k))] = report.flows[static_cast<Eigen::Index>(k)];
    doc["flows_mw"] = flows;
    doc["congestion"] = labels(g, report.congestion);
    doc["statistic"] = report.statistic;
    doc["threshold"] = report.threshold;
    doc["dof"] = report.dof;
    doc["detected"] = report.detected;
    return doc.dump(2) + "\n";
}

std::string lmp_json(const PowerCase& grid, const LmpSolution& s) {
    ordered_json doc;
    doc["pattern"] = labels(grid, s.pattern);
    doc["priced"] = s.priced;
    doc["status"] = lp::to_string(s.status);
    if (s.priced) {
        doc["eta"] = s.eta;
        ordered_json mu = ordered_json::object();
        for (std::size_t c = 0; c < s.pattern.size(); ++c)
            mu[grid.branch_label(s.pattern[c])] = s.mu[static_cast<Eigen::Index>(c)];
        doc["mu"] = mu;
        doc["lambda"] = prices(grid, s.lambda);
        doc["lambda_raw"] = prices(grid, s.lambda_raw);
        doc["dp_mw"] = numbers(s.dp);
        doc["objective"] = s.objective;
        doc["degenerate"] = s.degenerate;
    }
    return doc.dump(2) + "\n";
}

std::string partition_json(const CaseBundle& bundle, const DcModel& model, const Vector& state, double threshold_mw) {
    const auto& g = bundle.grid;
    const Vector flows = branch_flows(model, state);
    const auto pattern = region_of_state(model, state);
    ordered_json doc;
    doc["pattern"] = labels(g, pattern);
    doc["margin_mw"] = std::isfinite(boundary_margin(model, state)) ? ordered_json(boundary_margin(model, state))
                                                                     : ordered_json(nullptr);
    auto own = solve_expost_lmp(g, bundle.market, model, pattern);
    doc["lambda"] = own.priced ? prices(g, own.lambda) : ordered_json(nullptr);
    ordered_json regions = ordered_json::array();
    for (const auto& p : candidate_patterns(model, flows, threshold_mw)) {
        auto w = region_witness(model, p);
        if (!w.nonempty) continue;
        ordered_json r;
        r["pattern"] = labels(g, p);
        r["margin_mw"] = w.margin;
        auto s = solve_expost_lmp(g, bundle.market, model, p);
        r["lambda"] = s.priced ? prices(g, s.lambda) : ordered_json(nullptr);
        regions.push_back(r);
    }
    doc["nearby_regions"] = regions;
    return doc.dump(2) + "\n";
}

std::string meter_plan_json(const CaseBundle& bundle, const MeterAttackPlan& plan) {
    ordered_json doc;
    doc["kind"] = "meter";
    doc["model"] = to_string(plan.model);
    doc["attacked"] = plan.attacked;
    doc["budget"] = plan.budget;
    doc["target"] = labels(bundle.grid, plan.target);
    doc[plan.model == AttackModel::M3 ? "statistic" : "beta"] = plan.beta;
    doc["predicted_arpp"] = plan.predicted_arpp;
    doc["a"] = sparse(bundle.meters, plan.a);
    doc["feasibility_checks"] = plan.feasibility_checks;
    doc["price_solves"] = plan.price_solves;
    return doc.dump(2) + "\n";
}

std::string topology_plan_json(const CaseBundle& bundle, const TopologyAttackPlan& plan) {
    const auto& g = bundle.grid;
    ordered_json doc;
    doc["kind"] = "topology";
    doc["feasible"] = plan.feasible;
    if (!plan.reason.empty()) doc["reason"] = plan.reason;
    doc["removed"] = labels(g, plan.removed);
    std::vector<int> flips;
    for (std::size_t k = 0; k < plan.breaker_flips.size(); ++k)
        if (plan.breaker_flips[k]) flips.push_back(static_cast<int>(k));
    doc["breaker_flips"] = labels(g, flips);
    doc["a"] = sparse(bundle.meters, plan.a);
    doc["perturbation"] = plan.perturbation;
    ordered_json table = ordered_json::array();
    for (const auto& t : plan.table)
        table.push_back({{"removed", labels(g, t.removed)},
                         {"priced", t.priced},
                         {"detected", t.detected},
                         {"perturbation", t.perturbation}});
    doc["targets"] = table;
    return doc.dump(2) + "\n";
}

std::string comparison_json(const SearchComparison& c) {
    auto timing = [](const TimingStats& t) {
        return ordered_json{{"samples", t.samples}, {"mean_s", t.mean_s}, {"std_s", t.std_s}};
    };
    ordered_json doc{{"trials", c.trials},
                     {"compared", c.compared},
                     {"agreement", c.agreement},
                     {"value_agreement", c.value_agreement},
                     {"mean_candidates", c.mean_candidates},
                     {"exhaustive", timing(c.exhaustive)},
                     {"greedy", timing(c.greedy)}};
    return doc.dump(2) + "\n";
}

Vector attack_vector_from_json(const std::string& text, const MeterConfig& meters) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("plan", e.what());
    }
    if (!doc.is_object() || !doc.contains("a") || !doc.at("a").is_object())
        throw ParseError("plan", "expected an object with an 'a' map of meter labels");
    Vector a = Vector::Zero(static_cast<Eigen::Index>(meters.size()));
    for (auto it = doc.at("a").begin(); it != doc.at("a").end(); ++it) {
        if (!it.value().is_number()) throw ParseError("plan/a/" + it.key(), "expected a number");
        a[meters.meter_index(it.key())] = it.value().get<double>();
    }
    return a;
}

CongestionPattern parse_pattern(const PowerCase& grid, const std::string& text) {
    CongestionPattern out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        std::stringstream inner(item);
        std::string part;
        while (std::getline(inner, part, ';')) {
            auto b = part.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            auto e = part.find_last_not_of(" \t");
            out.push_back(grid.find_branch(part.substr(b, e - b + 1)));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace rtlmp
