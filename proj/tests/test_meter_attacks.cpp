#include "rtlmp/meter_attacks.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/state_estimation.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace rtlmp;
using Catch::Approx;

namespace {

struct Fixture {
    CaseBundle bundle;
    DcModel model;
    EstimatorOperators ops;

    explicit Fixture(CaseBundle b) : bundle(std::move(b)), model(build_dc_model(bundle.grid)) {
        ops = StateEstimator(model, bundle.meters.variances()).operators();
    }
};

CaseBundle t3_all_limited() {
    auto c = testing::load("t3.json");
    c.grid.branches[0].limit_mw = 15.0;
    c.grid.branches[2].limit_mw = 10.0;
    return c;
}

SuspectSpace suspects_of(const CaseBundle& c, const std::string& selector) {
    return {select_meters(c.grid, c.meters, selector)};
}

}  // namespace

TEST_CASE("mmse estimate") {
    Fixture fx(testing::load("ieee14.json"));
    StatePrior prior{Vector::Constant(13, 0.01), Matrix::Identity(13, 13) * 1e-4};
    auto obs = observed_half(fx.model);
    REQUIRE(obs.size() == 27);
    Matrix h0(obs.size(), 13);
    for (std::size_t r = 0; r < obs.size(); ++r) h0.row(r) = fx.model.measurement.row(obs[r]);
    Vector var0 = Vector::Ones(obs.size());
    REQUIRE((mmse_state(prior, h0, h0 * prior.mean, var0) - prior.mean).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(mmse_state(prior, Matrix(0, 13), Vector(0)) == prior.mean);
    REQUIRE_THROWS_AS(mmse_state(prior, h0, h0 * prior.mean), NumericalError);

    // a vague prior reproduces WLS on the full meter set
    std::mt19937_64 rng(3);
    StatePrior vague{Vector::Zero(13), Matrix::Identity(13, 13) * 1e6};
    Vector z = fx.model.measurement * testing::gaussian(rng, 13, 0.05) + testing::gaussian(rng, 54, 1.0);
    Vector wls = fx.ops.gain * z;
    Vector post = mmse_state(vague, fx.model.measurement, z, Vector::Ones(54));
    REQUIRE((post - wls).norm() <= 1e-3 * wls.norm());
}

TEST_CASE("zero attack on the current pattern") {
    Fixture fx(testing::load("t3.json"));
    Vector anchor(2);
    anchor << 0.0, -0.015;   // f_13 = 15, uncongested
    auto s = suspects_of(fx.bundle, "lines:1-3");
    auto r = center_attack(fx.model, fx.ops.gain, fx.ops.kernel, {}, anchor, s, 0.0);
    REQUIRE(r.feasible);
    REQUIRE(r.a.isZero());
    REQUIRE(r.beta == Approx(5.0).margin(1e-5));

    auto none = center_attack(fx.model, fx.ops.gain, fx.ops.kernel, {1}, anchor, SuspectSpace{}, 10.0);
    REQUIRE_FALSE(none.feasible);
}

TEST_CASE("center attack matches the grid oracle") {
    Fixture fx(testing::load("t3.json"));
    auto s = suspects_of(fx.bundle, "lines:1-3");
    REQUIRE(s.dim() == 4);
    Matrix w = oracle::restrict_kernel(fx.ops.kernel, s);
    for (double eps : {0.5, 2.0, 8.0, 50.0}) {
        for (double f13 : {12.0, 17.0, 19.5}) {
            Vector anchor(2);
            anchor << 0.003, -f13 / 1000.0;
            auto r = center_attack(fx.model, fx.ops.gain, fx.ops.kernel, {1}, anchor, s, eps);
            oracle::Rows obj, box;
            oracle::center_rows(fx.model, fx.ops.gain, {1}, anchor, s, obj, box);
            const double ref = oracle::grid_center(obj, box, w, eps);
            INFO("eps " << eps << " f13 " << f13 << " beta " << r.beta << " oracle " << ref);
            REQUIRE(r.beta == Approx(ref).epsilon(0.01).margin(1e-6));
            REQUIRE(r.a.dot(fx.ops.kernel * r.a) <= eps + 1e-8);
            REQUIRE(r.feasible == (ref >= 0));
            for (int i = 0; i < 9; ++i)
                if (!std::binary_search(s.meters.begin(), s.meters.end(), i)) REQUIRE(r.a[i] == 0.0);
        }
    }
}

TEST_CASE("more suspects or budget never lowers beta") {
    Fixture fx(t3_all_limited());
    Vector anchor(2);
    anchor << -0.005, -0.012;
    const CongestionPattern target{1};
    auto small = suspects_of(fx.bundle, "meters:P1,P3,P1-3");
    auto large = suspects_of(fx.bundle, "lines:1-3");
    double prev = -kInf;
    for (double eps : {0.1, 1.0, 4.0, 16.0}) {
        auto a = center_attack(fx.model, fx.ops.gain, fx.ops.kernel, target, anchor, small, eps);
        auto b = center_attack(fx.model, fx.ops.gain, fx.ops.kernel, target, anchor, large, eps);
        REQUIRE(b.beta >= a.beta - 1e-6);
        REQUIRE(b.beta >= prev - 1e-6);
        prev = b.beta;
    }
}

TEST_CASE("fully adaptive attack") {
    Fixture fx(t3_all_limited());
    const double tau = detector_threshold(fx.model.degrees_of_freedom(), 0.1);
    std::mt19937_64 rng(21);
    Vector x(2);
    x << -0.005, -0.012;
    Vector z = fx.model.measurement * x + testing::gaussian(rng, 9, 1.0);
    auto current = congestion_of_flows(fx.model, fx.model.flow * (fx.ops.gain * z));
    auto none = suspects_of(fx.bundle, "none");
    auto r0 = m3_attack(fx.model, fx.ops.gain, fx.ops.kernel, z, current, none, tau);
    REQUIRE(r0.feasible == (z.dot(fx.ops.kernel * z) <= tau));

    auto all = suspects_of(fx.bundle, "all");
    for (const auto& p : std::vector<CongestionPattern>{{}, {0}, {1}, {2}, {0, 1}, {1, 2}, {0, 1, 2}}) {
        auto r = m3_attack(fx.model, fx.ops.gain, fx.ops.kernel, z, p, all, tau);
        REQUIRE(r.feasible);
        REQUIRE(congestion_of_flows(fx.model, fx.model.flow * (fx.ops.gain * (z + r.a))) == p);
        REQUIRE(r.statistic <= tau + 1e-8);
    }
    // {0, 2} is an empty region, so no attack reaches it
    REQUIRE_FALSE(m3_attack(fx.model, fx.ops.gain, fx.ops.kernel, z, {0, 2}, all, tau).feasible);
}

TEST_CASE("fully adaptive verdicts match the active-set oracle") {
    Fixture fx(t3_all_limited());
    const double tau = detector_threshold(fx.model.degrees_of_freedom(), 0.1);
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<int> pick(0, 6);
    const std::vector<CongestionPattern> patterns{{}, {0}, {1}, {2}, {0, 1}, {1, 2}, {0, 1, 2}};
    int feasible = 0;
    for (int t = 0; t < 50; ++t) {
        Vector x = testing::gaussian(rng, 2, 0.012);
        Vector z = fx.model.measurement * x + testing::gaussian(rng, 9, 1.0);
        std::vector<int> meters;
        for (int i = 0; i < 9; ++i)
            if (std::bernoulli_distribution(0.45)(rng)) meters.push_back(i);
        SuspectSpace s{meters};
        const auto& target = patterns[pick(rng)];
        auto r = m3_attack(fx.model, fx.ops.gain, fx.ops.kernel, z, target, s, tau);

        const bool expected = oracle::adaptive_verdict(fx.model, fx.ops.gain, fx.ops.kernel, z, target, s, tau);
        INFO("trial " << t);
        REQUIRE(r.feasible == expected);
        feasible += expected ? 1 : 0;
    }
    REQUIRE(feasible > 5);
    REQUIRE(feasible < 45);
}

TEST_CASE("worst meter attack search") {
    Fixture fx(t3_all_limited());
    auto& c = fx.bundle;
    const double tau = detector_threshold(fx.model.degrees_of_freedom(), 0.1);
    AttackContext ctx{c.grid, c.market, fx.model, fx.ops.gain, fx.ops.kernel, suspects_of(c, "all")};
    Vector x(2);
    x << -0.005, -0.012;
    MeterAttackInputs in;
    in.model = AttackModel::M3;
    in.z = fx.model.measurement * x;
    in.tau = tau;

    // only the current pattern
    CandidateSet only;
    only.fixed = region_of_state(fx.model, x);
    auto p0 = worst_meter_attack(ctx, in, only, SearchMethod::Exhaustive);
    REQUIRE_FALSE(p0.attacked);
    REQUIRE(p0.a.isZero());

    CandidateSet two;
    two.lines = {0, 1};
    auto ex = worst_meter_attack(ctx, in, two, SearchMethod::Exhaustive);
    auto gr = worst_meter_attack(ctx, in, two, SearchMethod::Greedy);
    REQUIRE(ex.target == gr.target);
    REQUIRE(ex.predicted_arpp == Approx(gr.predicted_arpp));
    REQUIRE(ex.predicted_arpp > 0);
    REQUIRE(ex.price_solves == 4);   // every pattern priced once
    REQUIRE(ex.feasibility_checks >= 1);
    // the realized estimate lands in the target pattern
    REQUIRE(congestion_of_flows(fx.model, fx.model.flow * (fx.ops.gain * (in.z + ex.a))) == ex.target);

    // M1 with a budget
    MeterAttackInputs m1;
    m1.model = AttackModel::M1;
    m1.anchor = x;
    m1.epsilon = 4.0;
    auto plan = worst_meter_attack(ctx, m1, two, SearchMethod::Exhaustive);
    REQUIRE(plan.a.dot(fx.ops.kernel * plan.a) <= 4.0 + 1e-8);
    REQUIRE(plan.beta >= 0);
}

TEST_CASE("greedy climbs through two flips") {
    // Prices for each pattern of the two candidate lines on the fixture,
    // then check that greedy reaches the exhaustive optimum.
    Fixture fx(t3_all_limited());
    auto& c = fx.bundle;
    AttackContext ctx{c.grid, c.market, fx.model, fx.ops.gain, fx.ops.kernel, suspects_of(c, "all")};
    Vector x(2);
    x << -0.005, -0.012;
    MeterAttackInputs in;
    in.model = AttackModel::M3;
    in.z = fx.model.measurement * x;
    in.tau = 1e6;
    CandidateSet cand;
    cand.lines = {0, 1, 2};
    auto ex = worst_meter_attack(ctx, in, cand, SearchMethod::Exhaustive);
    auto gr = worst_meter_attack(ctx, in, cand, SearchMethod::Greedy);
    REQUIRE(gr.predicted_arpp == Approx(ex.predicted_arpp));
    REQUIRE(ex.price_solves == 8);
    REQUIRE(gr.price_solves <= ex.price_solves);
}

TEST_CASE("model and search names") {
    REQUIRE(parse_attack_model("m2") == AttackModel::M2);
    REQUIRE(std::string(to_string(AttackModel::M3)) == "m3");
    REQUIRE(parse_search_method("greedy") == SearchMethod::Greedy);
    REQUIRE_THROWS_AS(parse_attack_model("m4"), ModelError);
}
