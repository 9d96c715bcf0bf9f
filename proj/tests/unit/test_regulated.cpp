#include <cmath>
#include <random>

#include "doctest.h"
#include "rbsde/error.hpp"
#include "rbsde/regulated.hpp"

using namespace rbsde;

namespace {

RegulatedPath step_path(const TimeGrid& g, double c, double t_jump, double jump) {
    std::vector<Triple> tr;
    for (double t : g.times()) {
        if (t < t_jump - 1e-12) tr.push_back({c, c, c});
        else if (std::abs(t - t_jump) <= 1e-12) tr.push_back({c, c, c + jump});
        else tr.push_back({c + jump, c + jump, c + jump});
    }
    return RegulatedPath(g, tr);
}

// Random regulated path: random values and independent left/right jumps.
RegulatedPath random_path(const TimeGrid& g, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.4);
    std::vector<Triple> tr;
    double x = nd(rng);
    for (std::size_t k = 0; k <= g.steps(); ++k) {
        Triple t;
        t.left = x;
        t.value = (k > 0 && coin(rng)) ? x + nd(rng) : x;
        t.right = (k < g.steps() && coin(rng)) ? t.value + nd(rng) : t.value;
        tr.push_back(t);
        x = t.right + 0.3 * nd(rng);
    }
    return RegulatedPath(g, tr);
}

}  // namespace

TEST_CASE("limits and jump conventions") {
    auto g = build_grid(1.0, 4);
    auto flat = RegulatedPath::continuous(g, [](double t) { return 2.0 * t; });
    for (std::size_t k = 0; k < flat.size(); ++k) {
        CHECK(flat.at(k).left_jump() == 0.0);
        CHECK(flat.at(k).right_jump() == 0.0);
    }
    auto p = step_path(g, 1.0, 0.5, 1.0);
    CHECK(limits_at(p, 0.5).right_jump() == doctest::Approx(1.0));
    CHECK(limits_at(p, 1.0).right_jump() == 0.0);
    CHECK_THROWS_AS(limits_at(p, 0.4), InvalidInput);
    CHECK_THROWS_AS(RegulatedPath(g, std::vector<Triple>(5, Triple{0, 1, 1})), InvalidInput);
}

TEST_CASE("right jump times") {
    auto g = build_grid(1.0, 10);
    auto p = step_path(g, 0.0, 0.5, 0.6);
    CHECK(right_jump_times(p, 1.0).empty());
    CHECK(right_jump_times(p, 0.5) == std::vector<double>{0.5});

    std::vector<Triple> tr(11, Triple{0, 0, 0});
    tr[3] = {0, 0, 0.6};
    for (int k = 4; k <= 10; ++k) tr[k] = {0.6, 0.6, 0.6};
    tr[7] = {0.6, 0.6, 0.8};
    for (int k = 8; k <= 10; ++k) tr[k] = {0.8, 0.8, 0.8};
    RegulatedPath two(g, tr);
    CHECK(right_jump_times(two, 0.25).size() == 1);
    CHECK(right_jump_times(two, 1.0 / 6.0).size() == 2);
    CHECK_THROWS_AS(right_jump_times(two, 0.0), InvalidInput);
}

TEST_CASE("rho arrays") {
    auto g = build_grid(1.0, 10);
    auto cont = RegulatedPath::continuous(g, [](double t) { return t * t; });
    for (const auto& level : build_rho_arrays(cont, 5)) CHECK(level == std::vector<double>{0.0, 1.0});

    auto one = build_rho_arrays(step_path(g, 0.0, 0.5, 0.6), 4);
    CHECK(one[0] == std::vector<double>{0.0, 1.0});
    for (std::size_t n = 1; n < 4; ++n) CHECK(one[n] == std::vector<double>{0.0, 0.5, 1.0});

    std::vector<Triple> tr(11);
    double v = 0.0;
    for (std::size_t k = 0; k <= 10; ++k) {
        const double jump = k == 2 ? 1.5 : (k == 6 ? 0.4 : 0.0);
        tr[k] = {v, v, v + jump};
        v += jump;
    }
    auto rho = build_rho_arrays(RegulatedPath(g, tr), 5);
    // level n holds the times with Δ₊ > 1/n
    CHECK(rho[0] == std::vector<double>{0.0, 0.2, 1.0});
    CHECK(rho[1] == std::vector<double>{0.0, 0.2, 1.0});
    CHECK(rho[2] == std::vector<double>{0.0, 0.2, 0.6, 1.0});
    CHECK(rho[4] == std::vector<double>{0.0, 0.2, 0.6, 1.0});
    CHECK(rho_nested(rho));
    CHECK_THROWS_AS(build_rho_arrays(RegulatedPath(g, tr), 0), InvalidInput);
}

TEST_CASE("finite-variation decomposition") {
    auto g = build_grid(1.0, 10);
    auto lin = RegulatedPath::continuous(g, [](double t) { return t; });
    auto d = decompose_fv(lin.triples());
    for (std::size_t k = 0; k <= 10; ++k) {
        CHECK(d.continuous[k] == doctest::Approx(g.time(k)));
        CHECK(d.left_jumps[k] == 0.0);
        CHECK(d.right_jumps[k] == 0.0);
    }

    std::vector<Triple> rj(11);
    for (std::size_t k = 0; k <= 10; ++k) rj[k] = k < 4 ? Triple{0, 0, 0} : (k == 4 ? Triple{0, 0, 2} : Triple{2, 2, 2});
    auto dr = decompose_fv(rj);
    for (std::size_t k = 0; k <= 10; ++k) {
        CHECK(dr.right_jumps[k] == (k > 4 ? 2.0 : 0.0));
        CHECK(dr.continuous[k] == 0.0);
        CHECK(dr.left_jumps[k] == 0.0);
    }

    // t + left jump 1 at .3 + right jump 1 at .6
    std::vector<Triple> mix(11);
    for (std::size_t k = 0; k <= 10; ++k) {
        const double t = g.time(k);
        const double base = t + (k >= 3 ? 1.0 : 0.0) + (k > 6 ? 1.0 : 0.0);
        mix[k] = {k == 3 ? base - 1.0 : base, base, k == 6 ? base + 1.0 : base};
    }
    auto dm = decompose_fv(mix);
    for (std::size_t k = 0; k <= 10; ++k) {
        CHECK(dm.continuous[k] == doctest::Approx(g.time(k)));
        CHECK(dm.left_jumps[k] == (k >= 3 ? 1.0 : 0.0));
        CHECK(dm.right_jumps[k] == (k > 6 ? 1.0 : 0.0));
        CHECK(dm.rcll[k] == doctest::Approx(dm.continuous[k] + dm.left_jumps[k]));
    }
    const auto back = dm.reconstruct();
    for (std::size_t k = 0; k <= 10; ++k) {
        CHECK(std::abs(back[k].left - mix[k].left) <= 1e-12);
        CHECK(std::abs(back[k].value - mix[k].value) <= 1e-12);
        CHECK(std::abs(back[k].right - mix[k].right) <= 1e-12);
    }
    std::vector<Triple> dec(11, Triple{0, 0, 0});
    dec[5] = {0, 0, -1};
    for (std::size_t k = 6; k <= 10; ++k) dec[k] = {-1, -1, -1};
    CHECK_THROWS_AS(decompose_fv(dec), InvalidInput);
}

TEST_CASE("r.u.s.c. detection") {
    auto g = build_grid(1.0, 10);
    CHECK(is_rusc(RegulatedPath::continuous(g, [](double t) { return t; })));
    CHECK_FALSE(is_rusc(step_path(g, 0.0, 0.5, 0.3)));
    CHECK(is_rusc(step_path(g, 0.0, 0.5, -0.3)));
}

TEST_CASE("integration by parts, weighted square and Tanaka identities") {
    auto g = build_grid(1.0, 25, std::vector<double>{0.33});
    std::mt19937_64 rng(11);
    std::vector<double> A(g.steps() + 1, 0.0);
    for (std::size_t k = 1; k < A.size(); ++k) A[k] = A[k - 1] + 1.7 * g.dt(k - 1);
    for (int trial = 0; trial < 50; ++trial) {
        auto x1 = random_path(g, rng);
        auto x2 = random_path(g, rng);
        CHECK(integration_by_parts_check(x1, x2) <= 1e-12);
        CHECK(ito_weighted_square_check(x1, A, 0.9) <= 1e-12);

        auto sq = tanaka_check(x1, [](double v) { return v * v; }, [](double v) { return 2 * v; });
        CHECK(sq.monotone);
        CHECK(sq.jump_residual <= 1e-12);
        auto pos = tanaka_check(x1, [](double v) { return std::max(v, 0.0); }, [](double v) { return v > 0 ? 1.0 : 0.0; });
        CHECK(pos.monotone);
        auto id = tanaka_check(x1, [](double v) { return v; }, [](double) { return 1.0; });
        for (const Triple& t : id.local_time) CHECK(std::abs(t.right) <= 1e-12);
    }
    auto c = RegulatedPath::continuous(g, [](double) { return 3.0; });
    CHECK(integration_by_parts_check(c, c) == 0.0);

    // x⁺ along a path crossing zero once: a single positive increment
    auto cross = RegulatedPath::continuous(g, [](double t) { return t - 0.5; });
    auto tp = tanaka_check(cross, [](double v) { return std::max(v, 0.0); }, [](double v) { return v > 0 ? 1.0 : 0.0; });
    int positive = 0;
    for (std::size_t k = 1; k < tp.local_time.size(); ++k)
        if (tp.local_time[k].value - tp.local_time[k - 1].value > 1e-15) ++positive;
    CHECK(positive == 1);

    // a concave Φ is reported through a negative increment
    auto bad = tanaka_check(random_path(g, rng), [](double v) { return -v * v; }, [](double v) { return -2 * v; });
    CHECK_FALSE(bad.monotone);
}
