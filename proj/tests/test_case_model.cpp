#include "rtlmp/case_model.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>


using namespace rtlmp;

TEST_CASE("ieee14 native case has the published market data") {
    auto c = testing::load("ieee14.json");
    REQUIRE(c.grid.bus_count() == 14);
    REQUIRE(c.grid.branch_count() == 20);
    REQUIRE(c.grid.limited_branches().size() == 3);
    REQUIRE(c.grid.generators.size() == 5);
    std::vector<double> offers;
    for (const auto& g : c.grid.generators) offers.push_back(g.offer);
    REQUIRE(offers == std::vector<double>{15, 31, 30, 10, 20});
    REQUIRE(c.grid.branches[c.grid.find_branch("6-11")].limit_mw == 20.0);
    REQUIRE(c.grid.branches[c.grid.find_branch("2-3")].limit_mw == 50.0);
    REQUIRE(c.grid.branches[c.grid.find_branch("4-5")].limit_mw == 50.0);
    REQUIRE(c.meters.size() == 54);
}

TEST_CASE("matpower file with sidecar matches the native case") {
    auto m = testing::load("case14.m");
    auto n = testing::load("ieee14.json");
    REQUIRE(m.grid.bus_count() == n.grid.bus_count());
    REQUIRE(m.grid.branch_count() == n.grid.branch_count());
    for (std::size_t k = 0; k < m.grid.branch_count(); ++k) {
        REQUIRE(m.grid.branches[k].from == n.grid.branches[k].from);
        REQUIRE(m.grid.branches[k].reactance == n.grid.branches[k].reactance);
        REQUIRE(m.grid.branches[k].limit_mw == n.grid.branches[k].limit_mw);
    }
    REQUIRE(m.grid.generators.size() == 5);
    REQUIRE(m.grid.generators[0].capacity_mw == 330.0);
    REQUIRE(m.grid.reference_bus == 1);
}

TEST_CASE("t3 fixture") {
    auto c = testing::load("t3.json");
    REQUIRE(c.grid.bus_count() == 3);
    REQUIRE(c.meters.size() == 9);
    REQUIRE(c.meters.meters[0].label == "P1");
    REQUIRE(c.meters.meters[3].label == "P1-2");
    REQUIRE(c.meters.meters[4].label == "P2-1");
    REQUIRE(c.grid.reference_index() == 0);
}

TEST_CASE("invalid cases name the offending element") {
    std::string bad = R"({"reference_bus": 1, "buses": [{"id": 1}, {"id": 2}],
        "branches": [{"id": 1, "from": 1, "to": 9, "x": 0.1}]})";
    try {
        parse_case(bad, CaseFormat::Native);
        FAIL("expected an error");
    } catch (const ModelError& e) {
        REQUIRE(std::string(e.what()).find("9") != std::string::npos);
    }
    std::string neg = R"({"reference_bus": 1, "buses": [{"id": 1}, {"id": 2}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": -0.1}]})";
    REQUIRE_THROWS_AS(parse_case(neg, CaseFormat::Native), ModelError);
    std::string noref = R"({"reference_bus": 5, "buses": [{"id": 1}, {"id": 2}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": 0.1}]})";
    REQUIRE_THROWS_AS(parse_case(noref, CaseFormat::Native), ModelError);
    std::string island = R"({"reference_bus": 1, "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": 0.1}]})";
    REQUIRE_THROWS_AS(parse_case(island, CaseFormat::Native), ModelError);
}

TEST_CASE("parse errors carry a location") {
    try {
        parse_case("{\"buses\": [", CaseFormat::Native);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE_FALSE(e.where().empty());
    }
    try {
        parse_case(R"({"reference_bus": 1, "buses": [{"id": "one"}]})", CaseFormat::Native);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.where().find("/buses/0") != std::string::npos);
    }
    std::string mp = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0;\n2 1 x;\n];\n";
    try {
        parse_case(mp, CaseFormat::Matpower);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.where() == "line 4");
    }
}

TEST_CASE("measurement model construction") {
    auto c = testing::load("t3.json");
    auto cfg = build_measurement_model(c.grid, {0.01});
    REQUIRE(cfg.size() == 9);
    Matrix r = cfg.covariance();
    REQUIRE(r.rows() == 9);
    REQUIRE(r.isApprox(Matrix::Identity(9, 9) * 1e-4));
    REQUIRE_THROWS_AS(build_measurement_model(c.grid, {0.0}), ModelError);
    REQUIRE_THROWS_AS(build_measurement_model(c.grid, {1.0, 2.0}), ModelError);

    auto s = select_meters(c.grid, cfg, "lines:1-3");
    std::vector<std::string> labels;
    for (int i : s) labels.push_back(cfg.meters[i].label);
    REQUIRE(labels == std::vector<std::string>{"P1", "P3", "P1-3", "P3-1"});
    REQUIRE(select_meters(c.grid, cfg, "all").size() == 9);
    REQUIRE(select_meters(c.grid, cfg, "none").empty());
    REQUIRE(select_meters(c.grid, cfg, "meters:P2,P2-3") == std::vector<int>{1, 7});
    REQUIRE_THROWS(select_meters(c.grid, cfg, "lines:1-9"));
}

TEST_CASE("native serialization round-trips") {
    for (const char* name : {"t3.json", "ieee14.json", "ieee118.json", "case14.m"}) {
        auto a = testing::load(name);
        auto text = to_native_json(a);
        auto b = parse_case(text, CaseFormat::Native);
        REQUIRE(to_native_json(b) == text);
        REQUIRE(b.meters.size() == a.meters.size());
        for (std::size_t i = 0; i < a.meters.size(); ++i) REQUIRE(a.meters.meters[i].label == b.meters.meters[i].label);
    }
}

TEST_CASE("meter order does not depend on input order") {
    std::string a = R"({"reference_bus": 1, "buses": [{"id": 1}, {"id": 2}, {"id": 3}],
        "branches": [{"id": 1, "from": 1, "to": 2, "x": 0.1}, {"id": 2, "from": 2, "to": 3, "x": 0.1}]})";
    std::string b = R"({"reference_bus": 1, "buses": [{"id": 3}, {"id": 1}, {"id": 2}],
        "branches": [{"id": 2, "from": 2, "to": 3, "x": 0.1}, {"id": 1, "from": 1, "to": 2, "x": 0.1}]})";
    auto ca = parse_case(a, CaseFormat::Native);
    auto cb = parse_case(b, CaseFormat::Native);
    for (std::size_t i = 0; i < ca.meters.size(); ++i) REQUIRE(ca.meters.meters[i].label == cb.meters.meters[i].label);
}

TEST_CASE("market validation") {
    auto c = testing::load("t3.json");
    MarketConfig m = c.market;
    m.generator_bounds[0] = {1.0, 0.0};
    REQUIRE_THROWS_AS(m.validate(c.grid), ModelError);
    m = c.market;
    m.price_floor = 600;
    REQUIRE_THROWS_AS(m.validate(c.grid), ModelError);
}
