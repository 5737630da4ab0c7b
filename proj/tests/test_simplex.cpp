#include "rtlmp/simplex.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace rtlmp;
using Catch::Approx;

namespace {

// Brute force over every basis of {rows} U {box bounds} for a box-bounded
// problem with <= rows. Returns +inf when infeasible.
double vertex_oracle(const lp::Problem& p) {
    const auto n = p.variable_count();
    Matrix a(p.row_count() + 2 * n, n);
    Vector b(p.row_count() + 2 * n);
    a.topRows(p.row_count()) = p.rows;
    b.head(p.row_count()) = p.rhs;
    for (Eigen::Index j = 0; j < n; ++j) {
        a.row(p.row_count() + 2 * j) = -Vector::Unit(n, j).transpose();
        b[p.row_count() + 2 * j] = -p.lower[j];
        a.row(p.row_count() + 2 * j + 1) = Vector::Unit(n, j).transpose();
        b[p.row_count() + 2 * j + 1] = p.upper[j];
    }
    const auto total = a.rows();
    double best = kInf;
    std::vector<int> pick(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = static_cast<int>(i);
    while (true) {
        Matrix sa(n, n);
        Vector sb(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            sa.row(r) = a.row(pick[r]);
            sb[r] = b[pick[r]];
        }
        Eigen::FullPivLU<Matrix> lu(sa);
        if (lu.isInvertible()) {
            Vector x = lu.solve(sb);
            if (((a * x - b).array() <= 1e-9).all()) best = std::min(best, p.cost.dot(x));
        }
        int i = static_cast<int>(n) - 1;
        while (i >= 0 && pick[i] == total - n + i) --i;
        if (i < 0) break;
        ++pick[i];
        for (int j = i + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
    }
    return best;
}

}  // namespace

TEST_CASE("textbook problem") {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    lp::Problem p(2);
    p.cost << -3, -5;
    p.add_row((Vector(2) << 1, 0).finished(), lp::Sense::LessEqual, 4);
    p.add_row((Vector(2) << 0, 2).finished(), lp::Sense::LessEqual, 12);
    p.add_row((Vector(2) << 3, 2).finished(), lp::Sense::LessEqual, 18);
    auto s = lp::solve(p);
    REQUIRE(s.status == lp::Status::Optimal);
    REQUIRE(s.objective == Approx(-36));
    REQUIRE(s.x[0] == Approx(2));
    REQUIRE(s.x[1] == Approx(6));
    // shadow prices of the classic example: 0, -3/2, -1
    REQUIRE(s.row_duals[0] == Approx(0).margin(1e-12));
    REQUIRE(s.row_duals[1] == Approx(-1.5));
    REQUIRE(s.row_duals[2] == Approx(-1.0));
}

TEST_CASE("status reporting") {
    lp::Problem inf(1);
    inf.add_row(Vector::Ones(1), lp::Sense::GreaterEqual, 2);
    inf.add_row(Vector::Ones(1), lp::Sense::LessEqual, 1);
    REQUIRE(lp::solve(inf).status == lp::Status::Infeasible);

    lp::Problem unb(1);
    unb.cost << -1;
    REQUIRE(lp::solve(unb).status == lp::Status::Unbounded);

    lp::Problem bad(1);
    bad.lower << 1;
    bad.upper << 0;
    REQUIRE(lp::solve(bad).status == lp::Status::Infeasible);
}

TEST_CASE("free and upper-bounded variables") {
    lp::Problem p(2);
    p.lower << -kInf, -kInf;
    p.upper << kInf, 3;
    p.cost << 1, -1;
    p.add_row((Vector(2) << 1, 1).finished(), lp::Sense::Equal, 1);
    auto s = lp::solve(p);
    REQUIRE(s.status == lp::Status::Optimal);
    REQUIRE(s.x[1] == Approx(3));
    REQUIRE(s.x[0] == Approx(-2));
    REQUIRE(s.row_duals[0] == Approx(1));
}

TEST_CASE("random boxed problems agree with vertex enumeration") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        lp::Problem p(3);
        for (int j = 0; j < 3; ++j) {
            p.cost[j] = u(rng);
            p.lower[j] = -1 - std::abs(u(rng));
            p.upper[j] = 1 + std::abs(u(rng));
        }
        for (int r = 0; r < 3; ++r) {
            Vector row(3);
            for (int j = 0; j < 3; ++j) row[j] = u(rng);
            p.add_row(row, lp::Sense::LessEqual, 0.5 * u(rng));
        }
        auto s = lp::solve(p);
        double oracle = vertex_oracle(p);
        if (!std::isfinite(oracle)) {
            REQUIRE(s.status == lp::Status::Infeasible);
            continue;
        }
        REQUIRE(s.status == lp::Status::Optimal);
        REQUIRE(s.objective == Approx(oracle).margin(1e-9));
        // Shadow prices against finite differences when the basis is stable.
        if (s.degenerate) continue;
        for (Eigen::Index r = 0; r < p.row_count(); ++r) {
            lp::Problem q = p;
            const double h = 1e-6;
            q.rhs[r] += h;
            double up = vertex_oracle(q);
            q.rhs[r] -= 2 * h;
            double down = vertex_oracle(q);
            if (!std::isfinite(up) || !std::isfinite(down)) continue;
            REQUIRE(s.row_duals[r] == Approx((up - down) / (2 * h)).margin(1e-5));
        }
    }
}

TEST_CASE("deterministic tie breaking") {
    lp::Problem p(3);
    p.cost << 1, 1, 1;
    p.upper << 5, 5, 5;
    p.add_row(Vector::Ones(3), lp::Sense::GreaterEqual, 2);
    auto a = lp::solve(p);
    auto b = lp::solve(p);
    REQUIRE(a.x == b.x);
    REQUIRE(a.row_duals == b.row_duals);
    REQUIRE(a.objective == Approx(2));
}
