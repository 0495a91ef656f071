#include <catch_amalgamated.hpp>

#include "docalign/assignment.hpp"
#include "docalign/rng.hpp"
#include "oracles.hpp"

using docalign::brute_force_assignment;
using docalign::Error;
using docalign::Mat;
using docalign::Rng;
using docalign::solve_assignment;
using docalign::solve_assignment_capped;

namespace {

Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m(0, 0) = a;
    m(0, 1) = b;
    m(1, 0) = c;
    m(1, 1) = d;
    return m;
}

}  // namespace

TEST_CASE("unique optimum on a 2x2") {
    const auto sol = solve_assignment(mat2(0.9, 0.1, 0.2, 0.8));
    REQUIRE(sol.r == 2);
    REQUIRE(sol.total == Catch::Approx(1.7));
    REQUIRE(sol.matches == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});
}

TEST_CASE("identity matrix picks the diagonal") {
    Mat m(3, 3);
    for (int i = 0; i < 3; ++i) m(i, i) = 1.0;
    const auto sol = solve_assignment(m);
    REQUIRE(sol.r == 3);
    REQUIRE(sol.total == Catch::Approx(3.0));
    for (auto [i, j] : sol.matches) REQUIRE(i == j);
}

TEST_CASE("solver matches the exhaustive oracle on rectangular instances") {
    Rng rng(101);
    for (int t = 0; t < 500; ++t) {
        const Mat m = oracles::random_matrix(5, 7, rng, -1.0, 1.0);
        const auto fast = solve_assignment(m);
        const auto slow = brute_force_assignment(m);
        REQUIRE(fast.r == 5);
        REQUIRE(std::abs(fast.total - slow.total) < 1e-9);
    }
}

TEST_CASE("cap of one keeps only the heaviest edge") {
    const auto sol = solve_assignment_capped(mat2(0.9, 0.1, 0.2, 0.8), 1);
    REQUIRE(sol.r == 1);
    REQUIRE(sol.total == Catch::Approx(0.9));
    REQUIRE(sol.matches == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
}

TEST_CASE("cap at full rank equals the uncapped solve") {
    Rng rng(55);
    for (int t = 0; t < 100; ++t) {
        const Mat m = oracles::random_matrix(4, 6, rng, -1.0, 1.0);
        const auto capped = solve_assignment_capped(m, 4);
        const auto full = solve_assignment(m);
        REQUIRE(capped.total == Catch::Approx(full.total).margin(1e-12));
        REQUIRE(capped.r == full.r);
    }
}

TEST_CASE("capped totals match the at-most-k oracle on non-negative matrices") {
    Rng rng(77);
    for (int t = 0; t < 500; ++t) {
        const Mat m = oracles::random_matrix(6, 6, rng);
        const auto sol = solve_assignment_capped(m, 3);
        const auto oracle = brute_force_assignment(m, 3);
        REQUIRE(std::abs(sol.total - oracle.total) < 1e-9);
        REQUIRE(std::abs(sol.total - oracles::best_total_at_most(m, 3)) < 1e-9);
    }
}

TEST_CASE("capped solver returns the best exactly-k matching under negative entries") {
    Rng rng(78);
    for (int t = 0; t < 200; ++t) {
        const Mat m = oracles::random_matrix(5, 5, rng, -1.0, 0.2);
        for (std::size_t k = 1; k <= 5; ++k) {
            const auto sol = solve_assignment_capped(m, k);
            REQUIRE(sol.r == k);
            REQUIRE(std::abs(sol.total - oracles::best_total_exactly(m, k)) < 1e-9);
        }
    }
}

TEST_CASE("brute force agrees with the solver on all 2x2 sign patterns") {
    for (int bits = 0; bits < 16; ++bits) {
        const auto v = [&](int k) { return (bits >> k) & 1 ? 1.0 : -1.0; };
        const Mat m = mat2(v(0), v(1), v(2), v(3));
        const auto fast = solve_assignment(m);
        const auto slow = brute_force_assignment(m);
        REQUIRE(fast.r == slow.r);
        REQUIRE(std::abs(fast.total - slow.total) < 1e-12);
    }
}

TEST_CASE("singleton matrix") {
    Mat m(1, 1, 1.0);
    const auto sol = brute_force_assignment(m);
    REQUIRE(sol.matches == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
    REQUIRE(sol.total == 1.0);
}

TEST_CASE("parameter validation") {
    const Mat m = mat2(1, 2, 3, 4);
    REQUIRE_THROWS_AS(solve_assignment_capped(m, 0), Error);
    REQUIRE_THROWS_AS(solve_assignment_capped(m, 3), Error);
    REQUIRE_THROWS_AS(brute_force_assignment(m, 0), Error);
    Mat bad = m;
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(solve_assignment(bad), Error);
    Mat big(9, 9, 1.0);
    REQUIRE_THROWS_AS(brute_force_assignment(big), Error);
}

TEST_CASE("transpose symmetry of the optimal total") {
    Rng rng(303);
    for (int t = 0; t < 100; ++t) {
        const Mat m = oracles::random_matrix(3, 6, rng, -2.0, 2.0);
        Mat mt(m.cols(), m.rows());
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) mt(j, i) = m(i, j);
        REQUIRE(solve_assignment(m).total == Catch::Approx(solve_assignment(mt).total).margin(1e-9));
    }
}

TEST_CASE("capped totals are non-decreasing in k on non-negative matrices") {
    Rng rng(404);
    for (int t = 0; t < 100; ++t) {
        const Mat m = oracles::random_matrix(5, 6, rng);
        double prev = -1.0;
        for (std::size_t k = 1; k <= 5; ++k) {
            const double total = solve_assignment_capped(m, k).total;
            REQUIRE(total >= prev - 1e-12);
            prev = total;
        }
    }
}

TEST_CASE("a constant shift moves the full-rank total by c * min(n,m)") {
    Rng rng(505);
    for (int t = 0; t < 50; ++t) {
        const Mat m = oracles::random_matrix(4, 7, rng, -1.0, 1.0);
        const double c = rng.uniform(-2.0, 2.0);
        Mat shifted = m;
        for (auto& v : shifted.data()) v += c;
        REQUIRE(solve_assignment(shifted).total ==
                Catch::Approx(solve_assignment(m).total + 4.0 * c).margin(1e-9));
    }
}

TEST_CASE("brute-force tie break is the lexicographically smallest match set") {
    Mat m(3, 3, 0.5);  // every full matching ties
    const auto sol = brute_force_assignment(m);
    REQUIRE(sol.matches ==
            std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}});
}
