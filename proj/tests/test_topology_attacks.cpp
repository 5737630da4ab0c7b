#include "rtlmp/topology_attacks.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace rtlmp;
using Catch::Approx;

namespace {

std::vector<int> all_lines(const PowerCase& g) {
    std::vector<int> v;
    for (std::size_t k = 0; k < g.branch_count(); ++k) v.push_back(static_cast<int>(k));
    return v;
}

}  // namespace

TEST_CASE("incidence column") {
    auto c = testing::load("t3.json");
    Vector m = incidence_column(c.grid, c.meters, 1);   // line 1-3
    REQUIRE(m[0] == 1.0);
    REQUIRE(m[2] == -1.0);
    REQUIRE(m[5] == 1.0);
    REQUIRE(m[6] == -1.0);
    REQUIRE((m.array() != 0).count() == 4);
}

TEST_CASE("empty removal is the identity") {
    auto c = testing::load("t3.json");
    auto caps = Capabilities::of_lines(c.grid, c.meters, all_lines(c.grid));
    auto plan = line_removal_attack(c.grid, c.meters, Vector::Ones(9), {}, caps);
    REQUIRE(plan.feasible);
    REQUIRE(plan.a.isZero());
    for (char b : plan.breaker_flips) REQUIRE(b == 0);
}

TEST_CASE("noiseless removal preserves the estimate exactly") {
    for (const char* name : {"t3.json", "ieee14.json"}) {
        auto c = testing::load(name);
        auto model = build_dc_model(c.grid);
        auto var = c.meters.variances();
        auto caps = Capabilities::of_lines(c.grid, c.meters, all_lines(c.grid));
        std::mt19937_64 rng(12);
        Vector x = testing::gaussian(rng, model.state_dim, 0.03);
        Vector z = model.measurement * x;
        for (const auto& target : feasible_targets(c.grid, c.meters, caps, 2)) {
            auto plan = line_removal_attack(c.grid, c.meters, z, target, caps);
            REQUIRE(plan.feasible);
            auto tm = build_dc_model(apply_topology(c.grid, target));
            REQUIRE(((z + plan.a) - tm.measurement * x).cwiseAbs().maxCoeff() < 1e-10);
            auto rep = topo_estimate(c.grid, target, var, z + plan.a);
            REQUIRE((rep.state - x).cwiseAbs().maxCoeff() < 1e-10);
            REQUIRE(rep.statistic < 1e-12);
            REQUIRE((plan.a.array() != 0).count() <= static_cast<long>(4 * target.size()));
            for (int k : target) REQUIRE(plan.breaker_flips[k] == 1);
        }
    }
}

TEST_CASE("t3 removal of 1-3 edits four meters without bias") {
    auto c = testing::load("t3.json");
    auto model = build_dc_model(c.grid);
    auto caps = Capabilities::of_lines(c.grid, c.meters, all_lines(c.grid));
    auto tm = build_dc_model(apply_topology(c.grid, {1}));
    Vector x(2);
    x << -0.01, -0.02;
    std::mt19937_64 rng(13);
    const int n = 10000;
    Vector mean = Vector::Zero(9);
    for (int t = 0; t < n; ++t) {
        Vector z = model.measurement * x + testing::gaussian(rng, 9, 1.0);
        auto plan = line_removal_attack(c.grid, c.meters, z, {1}, caps);
        REQUIRE((plan.a.array() != 0).count() == 4);
        REQUIRE(plan.a[0] == -z[5]);
        REQUIRE(plan.a[2] == -z[6]);
        REQUIRE(plan.a[5] == -z[5]);
        REQUIRE(plan.a[6] == -z[6]);
        mean += plan.a;
    }
    mean /= n;
    Vector expected = tm.measurement * x - model.measurement * x;
    // each entry of a has unit noise, so the mean has std 1/sqrt(n)
    REQUIRE((mean - expected).cwiseAbs().maxCoeff() < 3.0 / std::sqrt(n) * 1.5);
}

TEST_CASE("feasible targets") {
    auto c = testing::load("t3.json");
    REQUIRE(feasible_targets(c.grid, c.meters, Capabilities{}, 2).empty());
    auto caps = Capabilities::of_lines(c.grid, c.meters, all_lines(c.grid));
    auto one = feasible_targets(c.grid, c.meters, caps, 1);
    REQUIRE(one == std::vector<std::vector<int>>{{0}, {1}, {2}});
    auto two = feasible_targets(c.grid, c.meters, caps, 2);
    REQUIRE(two == one);
    // breaker access without the meters is not enough
    Capabilities partial{{}, {0, 1, 2}};
    REQUIRE(feasible_targets(c.grid, c.meters, partial, 1).empty());
    auto plan = line_removal_attack(c.grid, c.meters, Vector::Zero(9), {0}, partial);
    REQUIRE_FALSE(plan.feasible);
    REQUIRE(plan.reason.find("meter") != std::string::npos);
    auto cut = line_removal_attack(c.grid, c.meters, Vector::Zero(9), {0, 1}, caps);
    REQUIRE_FALSE(cut.feasible);
    REQUIRE(cut.reason.find("disconnected") != std::string::npos);
}

TEST_CASE("worst topology attack") {
    auto c = testing::load("ieee14.json");
    auto model = build_dc_model(c.grid);
    Vector x = nominal_dispatch_state(c.grid, model);
    Vector z = model.measurement * x;
    const int l611 = c.grid.find_branch("6-11");
    // push 6-11 over its limit so prices are congested
    Vector xs = x;
    xs[model.state_of_bus[c.grid.bus_index(11)]] -= 0.002;
    z = model.measurement * xs;

    auto single = Capabilities::of_lines(c.grid, c.meters, {c.grid.find_branch("9-10")});
    auto p1 = worst_topology_attack(c.grid, c.market, c.meters, z, single, 2);
    REQUIRE(p1.removed == std::vector<int>{c.grid.find_branch("9-10")});
    REQUIRE(p1.table.size() == 1);

    auto caps = Capabilities::of_lines(c.grid, c.meters, all_lines(c.grid));
    auto best = worst_topology_attack(c.grid, c.market, c.meters, z, caps, 1);
    REQUIRE(best.perturbation > 0);
    for (const auto& row : best.table)
        if (row.priced) REQUIRE(row.perturbation <= best.perturbation);
    // the estimate is unchanged, so any price change comes from the network
    auto rep = topo_estimate(c.grid, best.removed, c.meters.variances(), z + best.a);
    REQUIRE((rep.state - xs).cwiseAbs().maxCoeff() < 1e-9);
    (void)l611;
}
