#include "rtlmp/state_estimation.hpp"
#include "support.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <catch_amalgamated.hpp>

using namespace rtlmp;
using Catch::Approx;

namespace {

StateEstimator make(const std::string& name) {
    auto c = testing::load(name);
    return StateEstimator(build_dc_model(c.grid), c.meters.variances());
}

}  // namespace

TEST_CASE("operator identities") {
    for (const char* name : {"t3.json", "ieee14.json", "ieee118.json"}) {
        auto est = make(name);
        auto ops = est.operators();
        const Matrix& h = est.model().measurement;
        const auto n = h.cols();
        REQUIRE((ops.gain * h - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((ops.residual * h).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((ops.kernel * h).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE((ops.kernel - ops.kernel.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(ops.kernel);
        REQUIRE(eig.eigenvalues().minCoeff() > -1e-8);
    }
}

TEST_CASE("noiseless data is recovered exactly") {
    auto est = make("ieee14.json");
    std::mt19937_64 rng(5);
    Vector x = testing::gaussian(rng, 13, 0.05);
    auto rep = est.estimate(est.model().measurement * x);
    REQUIRE((rep.state - x).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(rep.statistic < 1e-12);
    REQUIRE_FALSE(rep.detected);
    REQUIRE(rep.dof == 41);
}

TEST_CASE("bad data acts linearly on the estimate") {
    auto est = make("ieee14.json");
    std::mt19937_64 rng(6);
    Vector z = testing::gaussian(rng, 54, 30.0);
    for (int t = 0; t < 50; ++t) {
        Vector a = testing::gaussian(rng, 54, 10.0);
        Vector diff = est.solve(z + a) - est.solve(z);
        REQUIRE((diff - est.gain() * a).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("statistic equals the weighted residual") {
    auto est = make("ieee14.json");
    auto ops = est.operators();
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        Vector z = testing::gaussian(rng, 54, 20.0);
        const double quad = z.dot(ops.kernel * z);
        REQUIRE(est.statistic(z) == Approx(quad).epsilon(1e-10));
    }
}

TEST_CASE("congestion follows the threshold rule") {
    auto c = testing::load("t3.json");
    auto model = build_dc_model(c.grid);
    StateEstimator est(model, c.meters.variances());
    // f_13 = -1000 theta_3 on the fixture; pick theta so f_13 = 21
    Vector x(2);
    x << 0.0, -0.021;
    auto rep = est.estimate(model.measurement * x);
    REQUIRE(rep.flows[1] == Approx(21.0));
    REQUIRE(rep.congestion == CongestionPattern{1});
    x[1] = -0.020;
    REQUIRE(congestion_of_flows(model, model.flow * x) == CongestionPattern{1});
    x[1] = -0.0199;
    REQUIRE(congestion_of_flows(model, model.flow * x).empty());
}

TEST_CASE("chi-square threshold") {
    for (int dof : {1, 2, 3, 7, 41, 100, 373}) {
        for (double alpha : {0.01, 0.1, 0.5, 0.9}) {
            const double tau = detector_threshold(dof, alpha);
            boost::math::chi_squared dist(dof);
            const double ref = boost::math::quantile(boost::math::complement(dist, alpha));
            REQUIRE(tau == Approx(ref).epsilon(1e-7));
            REQUIRE(std::abs(chi_square_upper_tail(dof, tau) - alpha) < 1e-6);
        }
    }
    // two-tail normal identity: P(|N| >= sqrt(tau)) = 0.5
    REQUIRE(detector_threshold(1, 0.5) == Approx(0.454936423).epsilon(1e-7));
    REQUIRE(detector_threshold(5, 1.0 - 1e-9) < 1e-2);
    REQUIRE_THROWS_AS(detector_threshold(0, 0.1), ModelError);
    REQUIRE_THROWS_AS(detector_threshold(3, 1.0), ModelError);
    REQUIRE_THROWS_AS(detector_threshold(3, 0.0), ModelError);
}

TEST_CASE("topology estimate") {
    auto c = testing::load("ieee14.json");
    auto model = build_dc_model(c.grid);
    Vector var = c.meters.variances();
    std::mt19937_64 rng(8);
    Vector x = testing::gaussian(rng, 13, 0.05);
    Vector z = model.measurement * x + testing::gaussian(rng, 54, 1.0);
    auto plain = estimate(model, var, z);
    auto same = topo_estimate(c.grid, {}, var, z);
    REQUIRE(plain.state == same.state);
    REQUIRE(plain.statistic == same.statistic);

    const int line = c.grid.find_branch("4-9");
    auto target = build_dc_model(apply_topology(c.grid, {line}));
    auto rep = topo_estimate(c.grid, {line}, var, target.measurement * x);
    REQUIRE((rep.state - x).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(rep.statistic < 1e-12);
    REQUIRE(rep.dof == 39);
    REQUIRE_THROWS_AS(topo_estimate(c.grid, {c.grid.find_branch("7-8")}, var, z), ModelError);
}

TEST_CASE("null detection rate is calibrated") {
    auto c = testing::load("ieee14.json");
    auto model = build_dc_model(c.grid);
    StateEstimator est(model, c.meters.variances(), {0.1, std::nullopt});
    std::mt19937_64 rng(9);
    const int n = 10000;
    int hits = 0;
    for (int t = 0; t < n; ++t) {
        Vector x = testing::gaussian(rng, 13, 0.01);
        Vector z = model.measurement * x + testing::gaussian(rng, 54, 1.0);
        hits += est.estimate(z).detected ? 1 : 0;
    }
    const double rate = static_cast<double>(hits) / n;
    REQUIRE(std::abs(rate - 0.1) <= 3 * std::sqrt(0.09 / n));
}

TEST_CASE("input checks") {
    auto c = testing::load("t3.json");
    auto model = build_dc_model(c.grid);
    REQUIRE_THROWS_AS(StateEstimator(model, Vector::Ones(3)), ModelError);
    StateEstimator est(model, c.meters.variances());
    REQUIRE_THROWS_AS(est.solve(Vector::Zero(4)), ModelError);
}
