#include "rtlmp/price_geometry.hpp"
#include "rtlmp/pricing.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace rtlmp;
using Catch::Approx;

namespace {

// T3 with every line limited, used where one limited line is too few.
CaseBundle t3_all_limited() {
    auto c = testing::load("t3.json");
    c.grid.branches[0].limit_mw = 15.0;
    c.grid.branches[2].limit_mw = 10.0;
    return c;
}

}  // namespace

TEST_CASE("pattern of a state") {
    auto c = testing::load("t3.json");
    auto m = build_dc_model(c.grid);
    REQUIRE(region_of_state(m, Vector::Zero(2)).empty());
    Vector x(2);
    x << 0.0, -0.02;   // f_13 = 20 exactly
    REQUIRE(region_of_state(m, x) == CongestionPattern{1});

    auto c14 = testing::load("ieee14.json");
    auto m14 = build_dc_model(c14.grid);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        Vector s = testing::gaussian(rng, 13, 0.05);
        Vector f = m14.flow * s;
        CongestionPattern brute;
        for (std::size_t k = 0; k < c14.grid.branch_count(); ++k)
            if (c14.grid.branches[k].limited() && f[k] >= c14.grid.branches[k].limit_mw) brute.push_back(static_cast<int>(k));
        REQUIRE(region_of_state(m14, s) == brute);
    }
}

TEST_CASE("raising limits can only shrink the pattern") {
    auto c = testing::load("ieee14.json");
    auto m = build_dc_model(c.grid);
    auto raised = c.grid;
    for (auto& br : raised.branches)
        if (br.limited()) br.limit_mw += 5;
    auto m2 = build_dc_model(raised);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        Vector s = testing::gaussian(rng, 13, 0.05);
        auto a = region_of_state(m, s), b = region_of_state(m2, s);
        REQUIRE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
    }
}

TEST_CASE("witness programs") {
    auto c = testing::load("t3.json");
    auto m = build_dc_model(c.grid);
    auto empty = region_witness(m, {});
    REQUIRE(empty.nonempty);
    auto cong = region_witness(m, {1});
    REQUIRE(cong.nonempty);
    REQUIRE(region_of_state(m, cong.state) == CongestionPattern{1});

    auto t = t3_all_limited();
    auto ma = build_dc_model(t.grid);
    // LP oracle by hand: f_13 = 1000 (-th3), f_12 = -1000 th2, f_23 = 1000 (th2 - th3).
    // All three congested: -th2 >= .015, th2 - th3 >= .01, -th3 >= .02: feasible.
    auto all = region_witness(ma, {0, 1, 2});
    REQUIRE(all.nonempty);
    REQUIRE(region_of_state(ma, all.state) == CongestionPattern{0, 1, 2});
    // Congested 1-2 and 2-3 force f_13 = f_12 + f_23 >= 25 > 20, so the
    // pattern {0, 2} without 1-3 is empty.
    auto conflict = region_witness(ma, {0, 2});
    REQUIRE_FALSE(conflict.nonempty);
    // each nonempty witness lands in its own region
    for (const auto& p : std::vector<CongestionPattern>{{}, {0}, {1}, {2}, {0, 1}, {1, 2}, {0, 1, 2}}) {
        auto w = region_witness(ma, p);
        if (w.nonempty) REQUIRE(region_of_state(ma, w.state) == p);
    }
}

TEST_CASE("boundary margin") {
    auto c = testing::load("t3.json");
    auto m = build_dc_model(c.grid);
    Vector x(2);
    x << 0.0, -0.015;   // f_13 = 15
    REQUIRE(boundary_margin(m, x) == Approx(5.0));
    x << 0.0, -0.02;
    REQUIRE(boundary_margin(m, x) == Approx(0.0).margin(1e-9));
    // moving theta_2 changes only unlimited flows plus f_13 stays
    Vector y(2);
    y << 0.01, -0.015;
    REQUIRE(boundary_margin(m, y) == Approx(5.0));
}

TEST_CASE("candidate patterns") {
    auto t = t3_all_limited();
    auto m = build_dc_model(t.grid);
    Vector f(3);
    f << 0, 0, 0;
    auto none = candidate_patterns(m, f, 1.0);
    REQUIRE(none.size() == 1);
    REQUIRE(none[0].empty());
    f << 14, 21, -40;
    auto two = candidate_patterns(m, f, 2.0);
    REQUIRE(two.size() == 4);
    REQUIRE(two == std::vector<CongestionPattern>{{}, {0}, {0, 1}, {1}});
    f << 14, 30, -40;
    auto fixed = candidate_patterns(m, f, 2.0);
    REQUIRE(fixed == std::vector<CongestionPattern>{{0, 1}, {1}});
    auto capped = candidate_lines(m, (Vector(3) << 14.5, 21.5, 9).finished(), 2.0, 2);
    REQUIRE(capped.lines == std::vector<int>{0, 2});
    REQUIRE(capped.fixed == CongestionPattern{1});
    REQUIRE_THROWS_AS(candidate_lines(m, f, 0.0), ModelError);
}

TEST_CASE("sampled partition: one pattern, one price vector") {
    auto c = testing::load("ieee14.json");
    auto m = build_dc_model(c.grid);
    Vector x0 = nominal_dispatch_state(c.grid, m);
    std::mt19937_64 rng(4);
    std::map<CongestionPattern, Vector> seen;
    for (int t = 0; t < 300; ++t) {
        Vector x = x0 + testing::gaussian(rng, 13, 0.01);
        auto p = region_of_state(m, x);
        auto s = solve_expost_lmp(c.grid, c.market, m, p);
        REQUIRE(s.priced);
        auto [it, fresh] = seen.emplace(p, s.lambda);
        if (!fresh) REQUIRE(it->second == s.lambda);
    }
    REQUIRE(seen.size() >= 2);
}
