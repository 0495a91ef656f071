#include <catch_amalgamated.hpp>

#include "docalign/simfn.hpp"
#include "oracles.hpp"

using docalign::cosine_matrix;
using docalign::Error;
using docalign::KPolicy;
using docalign::KPolicyKind;
using docalign::Mat;
using docalign::Rng;
using docalign::sim_ap;
using docalign::sim_dc;
using docalign::sim_tk;
using docalign::SimValue;

namespace {

Mat mat2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m(0, 0) = a;
    m(0, 1) = b;
    m(1, 0) = c;
    m(1, 1) = d;
    return m;
}

std::vector<double> unit(std::size_t d, Rng& rng) {
    std::vector<double> v(d);
    double n = 0.0;
    for (auto& x : v) {
        x = rng.gaussian();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

// Perturbs matrix entries along a random direction and compares the
// directional finite difference with grad . direction.
template <typename SimF>
void directional_check(SimF&& f, const Mat& m, Rng& rng, double tol) {
    const SimValue base = f(m);
    Mat dir(m.rows(), m.cols());
    for (auto& v : dir.data()) v = rng.uniform(-1.0, 1.0);
    const double h = 1e-6;
    Mat plus = m, minus = m;
    for (std::size_t i = 0; i < m.size(); ++i) {
        plus.data()[i] += h * dir.data()[i];
        minus.data()[i] -= h * dir.data()[i];
    }
    const double fd = (f(plus).value - f(minus).value) / (2.0 * h);
    double analytic = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) analytic += base.grad.data()[i] * dir.data()[i];
    REQUIRE(oracles::rel_err(fd, analytic) < tol);
}

// Rejects matrices whose argmax decisions sit within `gap` of a tie, so the
// finite-difference step cannot flip a selection.
bool has_tight_ties(const Mat& m, double gap) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::vector<double> row(m.row(i), m.row(i) + m.cols());
        std::sort(row.begin(), row.end());
        if (row.size() >= 2 && row[row.size() - 1] - row[row.size() - 2] < gap) return true;
    }
    for (std::size_t j = 0; j < m.cols(); ++j) {
        std::vector<double> col;
        for (std::size_t i = 0; i < m.rows(); ++i) col.push_back(m(i, j));
        std::sort(col.begin(), col.end());
        if (col.size() >= 2 && col[col.size() - 1] - col[col.size() - 2] < gap) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("cosine matrix basics") {
    REQUIRE(cosine_matrix({{1, 0}}, {{0, 1}})(0, 0) == 0.0);
    REQUIRE(cosine_matrix({{1, 0}}, {{1, 0}})(0, 0) == 1.0);
    REQUIRE_THROWS_AS(cosine_matrix({{1, 0}}, {{1, 0, 0}}), Error);
    REQUIRE_THROWS_AS(cosine_matrix({{0, 0}}, {{1, 0}}), Error);
}

TEST_CASE("cosine matrix matches independent dot products") {
    Rng rng(1);
    std::vector<std::vector<double>> s, v;
    for (int i = 0; i < 4; ++i) s.push_back(unit(16, rng));
    for (int i = 0; i < 5; ++i) v.push_back(unit(16, rng));
    const Mat m = cosine_matrix(s, v);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < 16; ++k) d += s[i][k] * v[j][k];
            REQUIRE(std::abs(m(i, j) - d) < 1e-12);
        }
}

TEST_CASE("dense correspondence on toy matrices") {
    REQUIRE(sim_dc(Mat(1, 1, 1.0)).value == Catch::Approx(2.0));
    REQUIRE(sim_dc(mat2(0.9, 0.1, 0.2, 0.8)).value == Catch::Approx(1.7));
}

TEST_CASE("dense correspondence gradient against finite differences") {
    Rng rng(2);
    int done = 0;
    while (done < 200) {
        const Mat m = oracles::random_matrix(4, 6, rng, -1.0, 1.0);
        if (has_tight_ties(m, 1e-3)) continue;
        directional_check([](const Mat& x) { return sim_dc(x); }, m, rng, 1e-6);
        ++done;
    }
}

TEST_CASE("top-k on toy matrices") {
    const KPolicy half{KPolicyKind::half_min};
    const auto v = sim_tk(mat2(0.9, 0.1, 0.2, 0.8), half);  // k = 1
    REQUIRE(v.value == Catch::Approx(1.8));
}

TEST_CASE("top-k with k = min(n,m) equals dense correspondence on square matrices") {
    Rng rng(3);
    const KPolicy full{KPolicyKind::full_min};
    for (int t = 0; t < 200; ++t) {
        const Mat m = oracles::random_matrix(5, 5, rng, -1.0, 1.0);
        const auto a = sim_dc(m);
        const auto b = sim_tk(m, full);
        REQUIRE(std::abs(a.value - b.value) <= 1e-12);
        REQUIRE(a.grad == b.grad);
    }
}

TEST_CASE("top-k gradient against finite differences") {
    Rng rng(4);
    const KPolicy half{KPolicyKind::half_min};
    int done = 0;
    while (done < 200) {
        const Mat m = oracles::random_matrix(4, 6, rng, -1.0, 1.0);
        if (has_tight_ties(m, 1e-3)) continue;
        directional_check([&](const Mat& x) { return sim_tk(x, half); }, m, rng, 1e-6);
        ++done;
    }
}

TEST_CASE("assignment similarity on toy matrices") {
    REQUIRE(sim_ap(mat2(0.9, 0.1, 0.2, 0.8)).value == Catch::Approx(0.85));
    REQUIRE(sim_ap(Mat(1, 1, 1.0)).value == Catch::Approx(1.0));
}

TEST_CASE("assignment similarity equals the brute-force matching mean") {
    Rng rng(5);
    for (int t = 0; t < 500; ++t) {
        const Mat m = oracles::random_matrix(5, 5, rng, -1.0, 1.0);
        const double expect = oracles::best_total_exactly(m, 5) / 5.0;
        REQUIRE(sim_ap(m).value == Catch::Approx(expect).margin(1e-9));
    }
}

TEST_CASE("assignment similarity gradient against finite differences") {
    Rng rng(6);
    int done = 0;
    while (done < 200) {
        const Mat m = oracles::random_matrix(5, 5, rng, -1.0, 1.0);
        // a near-tied optimal matching could flip under the perturbation
        if (oracles::optimal_gap_exactly(m, 5) < 1e-3) continue;
        directional_check([](const Mat& x) { return sim_ap(x); }, m, rng, 1e-6);
        ++done;
    }
}

TEST_CASE("all similarity values are invariant under row and column permutation") {
    Rng rng(7);
    const KPolicy half{KPolicyKind::half_min};
    for (int t = 0; t < 50; ++t) {
        const Mat m = oracles::random_matrix(4, 5, rng, -1.0, 1.0);
        std::vector<std::size_t> rp{2, 0, 3, 1}, cp{4, 2, 0, 1, 3};
        Mat p(4, 5);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 5; ++j) p(i, j) = m(rp[i], cp[j]);
        REQUIRE(sim_dc(p).value == Catch::Approx(sim_dc(m).value).margin(1e-12));
        REQUIRE(sim_tk(p, half).value == Catch::Approx(sim_tk(m, half).value).margin(1e-12));
        REQUIRE(sim_ap(p).value == Catch::Approx(sim_ap(m).value).margin(1e-9));
    }
}

TEST_CASE("gradient mass sums to 2 for dc/tk and 1 for ap") {
    Rng rng(8);
    const KPolicy half{KPolicyKind::half_min};
    for (int t = 0; t < 50; ++t) {
        const Mat m = oracles::random_matrix(3, 7, rng, -1.0, 1.0);
        auto total = [](const Mat& g) {
            double s = 0.0;
            for (double v : g.data()) s += v;
            return s;
        };
        REQUIRE(total(sim_dc(m).grad) == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(total(sim_tk(m, half).grad) == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(total(sim_ap(m).grad) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("capping at full rank does not change the assignment similarity") {
    Rng rng(9);
    const KPolicy full{KPolicyKind::full_min};
    for (int t = 0; t < 100; ++t) {
        const Mat m = oracles::random_matrix(4, 6, rng, -1.0, 1.0);
        REQUIRE(sim_ap(m, full).value == sim_ap(m).value);
    }
}

TEST_CASE("directional subgradients agree with finite differences in bulk") {
    Rng rng(10);
    const KPolicy half{KPolicyKind::half_min};
    int done = 0;
    while (done < 1000) {
        const Mat m = oracles::random_matrix(4, 6, rng, -1.0, 1.0);
        if (has_tight_ties(m, 1e-3)) continue;
        directional_check([](const Mat& x) { return sim_dc(x); }, m, rng, 1e-6);
        directional_check([&](const Mat& x) { return sim_tk(x, half); }, m, rng, 1e-6);
        ++done;
    }
}
