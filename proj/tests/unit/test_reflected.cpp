#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle.hpp"
#include "rbsde/constants.hpp"
#include "rbsde/error.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/stopping.hpp"

using namespace rbsde;

namespace {

double max_gap(const ScenarioTree& tree, const NodeField& a, const NodeField& b, double sign = 1.0) {
    double m = 0.0;
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) m = std::max(m, std::abs(a[k][i] - sign * b[k][i]));
    return m;
}

// Upper barrier 1.2 + 0.3 t with a jump of size `jump` right after t = 0.5.
Barrier jump_barrier(const ScenarioTree& tree, double base, double jump) {
    return Barrier(tree, [&, base, jump](const NodeState& s) {
        const double v = base + 0.3 * s.t;
        return Triple{v, v, std::abs(s.t - 0.5) < 1e-12 ? v + jump : v};
    });
}

}  // namespace

TEST_CASE("barrier that never binds") {
    auto tree = build_tree(build_grid(1.0, 40), 0.2);
    const auto d = nonlinear_driver(0.05, 0.1, 0.3, 0.5);
    auto xi = tree.make_layer(40, [](const NodeState& s) { return std::sin(s.b) + s.h(); });
    auto plain = solve_bsde(tree, d, xi);
    auto low = solve_reflected_lower(tree, d, xi, Barrier::constant(tree, -1e6));
    CHECK(max_gap(tree, low.y, plain.y) <= 1e-12);
    CHECK(low.k_mean == 0.0);
    CHECK(low.k_second_moment == 0.0);
    auto up = solve_reflected_upper(tree, d, xi, Barrier::constant(tree, 1e6));
    CHECK(max_gap(tree, up.y, plain.y) <= 1e-12);
    CHECK(up.k_mean == 0.0);
    auto pen = solve_penalized(tree, d, xi, Barrier::constant(tree, 1e6), 64.0);
    CHECK(max_gap(tree, pen.bsde.y, plain.y) <= 1e-12);
    CHECK(pen.k_mean == 0.0);
}

TEST_CASE("constant barrier equal to the terminal value") {
    auto tree = build_tree(build_grid(1.0, 20), 0.3);
    auto sol = solve_reflected_lower(tree, zero_driver(), std::vector<double>(tree.layer_size(20), 2.5),
                                     Barrier::constant(tree, 2.5));
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            CHECK(sol.y[k][i] == 2.5);
            CHECK(sol.k_interval[k][i] == 0.0);
            CHECK(sol.k_jump[k][i] == 0.0);
        }
    CHECK_THROWS_AS(solve_reflected_lower(tree, zero_driver(), std::vector<double>(tree.layer_size(20), 2.0),
                                          Barrier::constant(tree, 2.5)),
                    InvalidInput);
}

TEST_CASE("American put") {
    const double s0 = 1.0, strike = 1.1, vol = 0.3;
    auto tree = build_tree(build_grid(1.0, 200), 0.0);
    auto put = [&](const NodeState& s) {
        return std::max(strike - s0 * std::exp(vol * s.b - 0.5 * vol * vol * s.t), 0.0);
    };
    Barrier lower(tree, [&](const NodeState& s) {
        const double v = put(s);
        return Triple{v, v, v};
    });
    auto xi = tree.make_layer(200, put);
    auto sol = solve_reflected_lower(tree, zero_driver(), xi, lower);
    const double ref = oracle::american_put_lattice(s0, strike, vol, 1.0, 200);
    CHECK(std::abs(sol.y[0][0] - ref) <= 1e-12);
    auto snell = snell_envelope_linear(tree, stopping_gain(tree, lower, xi));
    CHECK(std::abs(sol.y[0][0] - snell.value[0][0]) <= 1e-12);
    CHECK(sol.y[0][0] > 0.1 - 1e-12);  // early exercise premium keeps it above intrinsic
    CHECK(skorokhod_residual(tree, sol, lower) <= 1e-10);
    CHECK(constraint_violation(tree, sol, lower) <= 1e-12);
}

TEST_CASE("duality between lower and upper barriers") {
    auto tree = build_tree(build_grid(1.0, 30), 0.3);
    const auto d = nonlinear_driver(0.05, 0.2, 0.3, 0.5);
    Barrier lower(tree, [](const NodeState& s) {
        const double v = 0.2 - 0.5 * s.t + 0.1 * s.b;
        return Triple{v, v, std::abs(s.t - 0.5) < 1e-12 ? v - 0.3 : v};
    });
    auto xi = tree.make_layer(30, [](const NodeState& s) { return std::max(s.b, -0.3 + 0.1 * s.b) + 0.5 * s.h(); });
    auto low = solve_reflected_lower(tree, d, xi, lower);
    auto neg_xi = xi;
    for (double& v : neg_xi) v = -v;
    auto up = solve_reflected_upper(tree, d.mirrored(), neg_xi, lower.negated());
    CHECK(max_gap(tree, up.y, low.y, -1.0) <= 1e-12);
    CHECK(max_gap(tree, up.z, low.z, -1.0) <= 1e-12);
    CHECK(max_gap(tree, up.u, low.u, -1.0) <= 1e-12);
    CHECK(max_gap(tree, up.k_jump, low.k_jump) <= 1e-12);
    CHECK(max_gap(tree, up.k_interval, low.k_interval) <= 1e-12);
    CHECK(up.upper);
    CHECK(skorokhod_residual(tree, up, lower.negated()) <= 1e-10);
    CHECK(low.max_residual <= 1e-9);
}

TEST_CASE("right jump formula for an upper barrier") {
    auto tree = build_tree(build_grid(1.0, 40), 0.2);
    auto xi = tree.make_layer(40, [](const NodeState& s) { return std::min(1.0 + s.b, 1.3) - 0.5 * s.h(); });
    for (double jump : {-0.4, 0.4}) {
        auto zeta = jump_barrier(tree, 1.05, jump);
        auto sol = solve_reflected_upper(tree, zero_driver(), xi, zeta);
        CHECK(jump_formula_residual(tree, sol, zeta) <= 1e-12);
        std::size_t positive = 0;
        for (std::size_t i = 0; i < tree.layer_size(20); ++i) {
            const double y = sol.y[20][i], yp = sol.y_plus[20][i];
            const double expect = y == zeta.at(20, i).value ? std::max(yp - zeta.at(20, i).value, 0.0) : 0.0;
            CHECK(std::abs(sol.k_jump[20][i] - expect) <= 1e-12);
            positive += sol.k_jump[20][i] > 0.0;
        }
        if (jump < 0) CHECK(positive == 0);
        else CHECK(positive > 0);
        for (std::size_t k = 0; k < tree.layer_count(); ++k)
            if (k != 20)
                for (std::size_t i = 0; i < tree.layer_size(k); ++i) CHECK(sol.k_jump[k][i] == 0.0);
        CHECK(skorokhod_residual(tree, sol, zeta) <= 1e-10);
        CHECK(constraint_violation(tree, sol, zeta) <= 1e-12);
    }
}

TEST_CASE("Skorokhod residual flags a spurious push") {
    auto tree = build_tree(build_grid(1.0, 20), 0.1);
    Barrier lower(tree, [](const NodeState& s) {
        const double v = 0.3 - s.t;
        return Triple{v, v, v};
    });
    auto xi = tree.make_layer(20, [](const NodeState& s) { return std::abs(s.b) - 0.7; });
    auto sol = solve_reflected_lower(tree, zero_driver(), xi, lower);
    CHECK(skorokhod_residual(tree, sol, lower) <= 1e-10);
    CHECK(sol.k_mean > 0.0);

    auto bad = sol;
    std::size_t k = 5, i = 0;
    while (sol.y[k][i] - lower.at(k, i).value < 0.05) ++i;
    bad.k_jump[k][i] += 0.1;
    CHECK(skorokhod_residual(tree, bad, lower) > 1e-6);

    auto zero = sol;
    zero.k_jump = tree.make_field(0.0);
    zero.k_interval = tree.make_field(0.0);
    CHECK(skorokhod_residual(tree, zero, lower) == 0.0);
}

TEST_CASE("K along paths") {
    auto tree = build_tree(build_grid(1.0, 30), 0.3);
    const auto d = nonlinear_driver(0.05, 0.1, 0.2, 0.4);
    Barrier lower(tree, [](const NodeState& s) {
        const double v = 0.1 * s.b - 0.2 * s.t;
        return Triple{v, v, std::abs(s.t - 0.4) < 1e-12 ? v - 0.5 : v};
    });
    auto xi = tree.make_layer(30, [](const NodeState& s) { return std::max(0.1 * s.b - 0.2, s.b - 0.5) + 0.1 * s.h(); });
    auto sol = solve_reflected_lower(tree, d, xi, lower);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        auto nodes = sample_path(tree, rng);
        auto kp = k_path(sol, nodes);
        CHECK(kp[0].value == 0.0);
        CHECK(kp[0].left == 0.0);
        auto parts = decompose_fv(kp);
        double star = 0.0, g = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            CHECK(kp[k].left <= kp[k].value);
            CHECK(kp[k].value <= kp[k].right);
            if (k > 0) CHECK(kp[k - 1].right <= kp[k].left);
            CHECK(std::abs(parts.rcll[k] - star) <= 1e-12);
            CHECK(std::abs(parts.right_jumps[k] - g) <= 1e-12);
            CHECK(parts.continuous[k] == 0.0);
            // Δ₊Y = -Δ₊K
            CHECK(std::abs((sol.y_plus[k][nodes[k]] - sol.y[k][nodes[k]]) + sol.k_jump[k][nodes[k]]) <= 1e-12);
            g += sol.k_jump[k][nodes[k]];
            if (k + 1 < nodes.size()) star += sol.k_interval[k][nodes[k]];
        }
    }
    CHECK(sol.right_jump_square <= sol.k_second_moment + 1e-12);
    CHECK(sol.k_second_moment >= sol.k_mean * sol.k_mean - 1e-12);
}

TEST_CASE("penalization") {
    auto tree = build_tree(build_grid(1.0, 60), 0.2);
    const auto d = nonlinear_driver(0.05, 0.1, 0.2, 0.4);
    auto xi = tree.make_layer(60, [](const NodeState& s) { return std::min(1.0 + s.b, 1.3) - 0.3 * s.h(); });
    std::vector<double> ns;
    for (double n = 1; n <= 256; n *= 2) ns.push_back(n);

    SUBCASE("continuous binding barrier") {
        auto zeta = jump_barrier(tree, 1.0, 0.0);
        auto rep = penalization_convergence(tree, d, xi, zeta, ns);
        CHECK(rep.monotone());
        CHECK(rep.violation_decreasing());
        CHECK(rep.gap_decreasing());
        for (std::size_t j = 1; j < rep.levels.size(); ++j) CHECK(rep.levels[j].y0 <= rep.levels[j - 1].y0 + 1e-12);
        const auto& last = rep.levels.back();
        CHECK(last.above_limit);
        CHECK(std::abs(last.y0 - rep.direct_y0) <= 10.0 * last.sup_gap + 1e-15);
        CHECK(std::abs(last.y0 - rep.direct_y0) <= 2e-2);
        CHECK(last.sup_violation > 0.0);
    }
    SUBCASE("inactive barrier") {
        auto rep = penalization_convergence(tree, d, xi, Barrier::constant(tree, 1e6), ns);
        for (const auto& l : rep.levels) {
            CHECK(l.sup_gap <= 1e-12);
            CHECK(l.sup_violation == 0.0);
            CHECK(l.k_terminal_mean == 0.0);
        }
    }
    SUBCASE("upward right jump: K jumps only at active rho nodes") {
        auto zeta = jump_barrier(tree, 1.0, 0.3);
        for (double n : {2.0, 4.0, 64.0}) {
            auto lvl = solve_penalized(tree, d, xi, zeta, n);
            auto rho = build_rho_arrays(tree, zeta, static_cast<std::size_t>(n));
            const auto& times = rho[static_cast<std::size_t>(n) - 1];
            const bool half = std::find_if(times.begin(), times.end(),
                                           [](double t) { return std::abs(t - 0.5) < 1e-12; }) != times.end();
            CHECK(half == (0.3 > 1.0 / n));
            std::size_t hits = 0;
            for (std::size_t k = 1; k < tree.layer_count(); ++k)
                for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
                    if (lvl.k_jump[k][i] > 0.0) {
                        CHECK(lvl.rho_nodes[k][i]);
                        CHECK(k == 30);
                        ++hits;
                    }
                    CHECK(static_cast<bool>(lvl.rho_nodes[k][i]) == rho_active(zeta, k, i, n));
                }
            CHECK((hits > 0) == half);
            auto pos = penalty_positivity_check(tree, lvl, zeta);
            CHECK(pos.ok);
            CHECK(pos.continuous >= 0.0);
            CHECK(pos.jump >= -1e-12);
        }
    }
    SUBCASE("downward right jump") {
        auto zeta = jump_barrier(tree, 1.0, -0.3);
        auto rep = penalization_convergence(tree, d, xi, zeta, ns);
        CHECK(rep.monotone());
        CHECK(rep.violation_decreasing());
        CHECK(std::abs(rep.levels.back().y0 - rep.direct_y0) <= 2e-2);
    }
    SUBCASE("downward step") {
        const Barrier zeta(tree, [](const NodeState& s) {
            const double v = 1.0 + 0.3 * s.t;
            if (s.layer > 30) return Triple{v - 0.3, v - 0.3, v - 0.3};
            return Triple{v, v, s.layer == 30 ? v - 0.3 : v};
        });
        auto x = xi;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(x[i], zeta.at(60, i).value);
        auto rep = penalization_convergence(tree, d, x, zeta, ns);
        CHECK(rep.monotone());
        CHECK(rep.violation_decreasing());
        CHECK(rep.gap_decreasing());
        CHECK(std::abs(rep.levels.back().y0 - rep.direct_y0) <= 1e-2);
    }
    SUBCASE("uniform estimate") {
        for (double jump : {0.0, -0.3, 0.3}) {
            auto zeta = jump_barrier(tree, 1.0, jump);
            const double data = uniform_data_norm(tree, d, xi, zeta, 3.0);
            for (double n : ns) {
                auto lvl = solve_penalized(tree, d, xi, zeta, n);
                const double sol = uniform_solution_norm(tree, d, lvl.bsde.y, lvl.bsde.z, lvl.bsde.u,
                                                         lvl.k_second_moment, 3.0);
                CHECK(sol <= constants::uniform_estimate * data);
            }
        }
    }
    CHECK_THROWS_AS(solve_penalized(tree, d, xi, Barrier::constant(tree, 2.0), 0.5), InvalidInput);
}

TEST_CASE("reflected comparison") {
    auto tree = build_tree(build_grid(1.0, 24), 0.3);
    const auto d = nonlinear_driver(0.05, 0.1, 0.2, 0.4);
    Barrier l1(tree, [](const NodeState& s) {
        const double v = 0.2 * s.b - 0.3;
        return Triple{v, v, std::abs(s.t - 0.5) < 1e-12 ? v - 0.2 : v};
    });
    auto xi = tree.make_layer(24, [](const NodeState& s) { return std::max(0.2 * s.b - 0.3, s.b) + 0.2 * s.h(); });
    auto s1 = solve_reflected_lower(tree, d, xi, l1);
    auto same = compare_reflected(tree, s1, s1, certify_reflected(tree, d, d, xi, xi, l1, l1, s1));
    CHECK(same.ok());

    auto l2 = l1.shifted(0.5);
    auto xi2 = xi;
    for (std::size_t i = 0; i < xi2.size(); ++i) xi2[i] = std::max(xi2[i], l2.at(24, i).value);
    auto s2 = solve_reflected_lower(tree, d, xi2, l2);
    auto rep = compare_reflected(tree, s1, s2, certify_reflected(tree, d, d, xi, xi2, l1, l2, s2));
    CHECK(rep.ok());
    std::size_t strict = 0;
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            if (s2.y[k][i] == l2.at(k, i).value) strict += s2.y[k][i] > s1.y[k][i];
    CHECK(strict > 0);
    CHECK_THROWS_AS(compare_reflected(tree, s1, s2, std::nullopt), InvalidInput);
    CHECK_FALSE(certify_reflected(tree, d, d, xi2, xi, l2, l1, s1).valid());
}
