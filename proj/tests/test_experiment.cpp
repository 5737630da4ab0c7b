#include "rtlmp/experiment.hpp"
#include "rtlmp/state_estimation.hpp"

#include "catch_amalgamated.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace rtlmp;
using Catch::Approx;

namespace {

ScenarioConfig scenario(const std::string& body) {
    return ScenarioConfig::parse(body, RTLMP_DATA_DIR);
}

std::size_t line_count(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("scenario documents are validated") {
    auto c = scenario(R"({"case": "t3.json", "trials": 5, "seed": 3,
                          "attack": {"type": "meter", "model": "m2", "epsilon": [0.5, 2]}})");
    REQUIRE(c.trials == 5);
    REQUIRE(c.attack.kind == AttackKind::Meter);
    REQUIRE(c.attack.model == AttackModel::M2);
    REQUIRE(c.point_count() == 2);
    REQUIRE(std::filesystem::path(c.case_path).filename() == "t3.json");

    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "trails": 5})"), ParseError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "trials": 0})"), ModelError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "alpha": 1.0})"), ModelError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "attack": {"type": "meter", "epsilon": [2, 1]}})"),
                      ModelError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "attack": {"type": "meter", "epsilon": [0, 1]}})"),
                      ModelError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "attack": {"type": "fuse"}})"), ParseError);
    REQUIRE_THROWS_AS(scenario(R"({"case": "t3.json", "attack": {"capability": "some"}})"), ModelError);
    REQUIRE_THROWS_AS(scenario("[1, 2]"), ParseError);

    // the serialized form parses back to the same document
    auto again = ScenarioConfig::parse(c.to_json(), "/");
    REQUIRE(again.to_json() == c.to_json());
}

TEST_CASE("null scenario has zero ARPP and calibrated detection") {
    auto c = scenario(R"({"case": "ieee14.json", "trials": 4000, "seed": 21})");
    auto r = run_scenario(c);
    REQUIRE(r.points.size() == 1);
    const auto& p = r.points[0];
    REQUIRE(p.trials == 4000);
    REQUIRE(p.failed == 0);
    REQUIRE(p.attacked == 0);
    REQUIRE(p.arpp == 0.0);
    // 4 sigma of a binomial(4000, 0.1)
    REQUIRE(std::abs(p.detection_probability - 0.1) < 4 * std::sqrt(0.09 / 4000));
    REQUIRE(r.dof == 41);
}

TEST_CASE("results do not depend on seed reuse or thread count") {
    auto c = scenario(R"({"case": "t3.json", "trials": 60, "seed": 5,
                          "attack": {"type": "meter", "model": "m3", "capability": "random:2"}})");
    c.threads = 1;
    auto a = run_scenario(c);
    c.threads = 3;
    auto b = run_scenario(c);
    REQUIRE(results_json(a) == results_json(b));
    REQUIRE(trials_csv(a) == trials_csv(b));
    REQUIRE(results_json(run_scenario(c)) == results_json(b));

    c.seed = 6;
    REQUIRE(trials_csv(run_scenario(c)) != trials_csv(b));
}

TEST_CASE("trial draws match standalone snapshots") {
    auto c = scenario(R"({"case": "t3.json", "trials": 3, "seed": 77})");
    auto r = run_scenario(c);
    auto bundle = testing::load("t3.json");
    auto model = build_dc_model(bundle.grid);
    for (int t = 0; t < 3; ++t) {
        auto snap = sample_snapshot(bundle, model, 77, t);
        REQUIRE(snap.seed == r.trials[static_cast<std::size_t>(t)].seed);
        StateEstimator est(model, bundle.meters.variances());
        REQUIRE(est.statistic(snap.z) == Approx(r.trials[static_cast<std::size_t>(t)].statistic).epsilon(1e-12));
    }
    // zero rows stay noise free
    auto open = testing::load("ieee14.json");
    open.grid.branches[open.grid.find_branch("6-11")].closed = false;
    auto om = build_dc_model(open.grid);
    auto snap = sample_snapshot(open, om, 1, 0);
    int zero_rows = 0;
    for (std::size_t i = 0; i < om.meter_count(); ++i)
        if (!om.active_meter[i]) {
            ++zero_rows;
            REQUIRE(snap.z[static_cast<Eigen::Index>(i)] == 0.0);
        }
    REQUIRE(zero_rows == 2);
}

TEST_CASE("budget sweep") {
    auto c = scenario(R"({"case": "ieee14.json", "trials": 80, "seed": 9,
                          "attack": {"type": "meter", "model": "m1", "epsilon": [4]}})");
    auto single = run_scenario(c);
    auto swept = sweep_budget(c, {4.0});
    REQUIRE(swept.size() == 1);
    REQUIRE(swept[0].arpp == single.points[0].arpp);
    REQUIRE(swept[0].detected == single.points[0].detected);

    // a vanishing budget barely moves the estimate
    auto tiny = sweep_budget(c, {1e-8, 32.0});
    REQUIRE(tiny[0].arpp < 1e-3);
    REQUIRE(tiny[0].detection_probability <= tiny[1].detection_probability);
    REQUIRE_THROWS_AS(sweep_budget(c, {}), ModelError);
}

TEST_CASE("topology scenario on a fixed capability") {
    auto c = scenario(R"({"case": "ieee14.json", "trials": 40, "seed": 2,
                          "attack": {"type": "topology", "capability": "lines:6-11,2-3", "max_removals": 1}})");
    auto r = run_scenario(c);
    REQUIRE(r.points[0].trials == 40);
    REQUIRE(r.points[0].attacked > 0);
    for (const auto& t : r.trials)
        if (t.attacked) REQUIRE(t.note.rfind("removed ", 0) == 0);
    REQUIRE(r.aggregate.arpp == r.points[0].arpp);
}

TEST_CASE("search comparison with a single candidate line agrees") {
    auto c = scenario(R"({"case": "ieee14.json", "trials": 30, "seed": 4, "candidate_cap": 1,
                          "attack": {"type": "meter", "model": "m3", "capability": "random:2"}})");
    auto cmp = compare_search_methods(c);
    REQUIRE(cmp.compared == 30);
    REQUIRE(cmp.agreement == 1.0);
    REQUIRE(cmp.mean_candidates <= 1.0);
    REQUIRE(cmp.exhaustive.samples == 30);

    auto none = scenario(R"({"case": "t3.json", "trials": 2})");
    REQUIRE_THROWS_AS(compare_search_methods(none), ModelError);
}

TEST_CASE("output files") {
    auto c = scenario(R"({"case": "t3.json", "trials": 7, "seed": 1,
                          "attack": {"type": "meter", "model": "m1", "epsilon": [1, 2, 4]}})");
    auto r = run_scenario(c);
    const auto dir = std::filesystem::temp_directory_path() / "rtlmp_test_outputs";
    std::filesystem::remove_all(dir);
    write_outputs(r, dir.string());
    for (const char* f : {"results.json", "trials.csv", "curve.csv", "timing.json"})
        REQUIRE(std::filesystem::exists(dir / f));
    REQUIRE(line_count(trials_csv(r)) == 1 + 7 * 3);
    REQUIRE(line_count(curve_csv(r)) == 1 + 3);
    const auto summary = results_json(r);
    REQUIRE(summary.find("mean") == std::string::npos);   // no timings
    REQUIRE(summary.find("\"threads\"") == std::string::npos);
    std::filesystem::remove_all(dir);
}
