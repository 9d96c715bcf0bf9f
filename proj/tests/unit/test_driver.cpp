#include <cmath>
#include <random>

#include "doctest.h"
#include "rbsde/bsde.hpp"
#include "rbsde/driver.hpp"
#include "rbsde/error.hpp"

using namespace rbsde;

TEST_CASE("Lipschitz sampling") {
    auto tree = build_tree(build_grid(1.0, 10), 0.3);
    CHECK(check_lipschitz(tree, zero_driver(), 1000, 1).max_violation <= 0.0);
    CHECK(check_lipschitz(tree, linear_driver(0.7, 0.0, 0.0, 0.0), 1000, 2).max_violation <= 0.0);
    Driver cheat("cheat", [](double, const NodeState&, double y, double, double) { return 1.4 * y; }, 0.7, 0.0, 0.0);
    CHECK(check_lipschitz(tree, cheat, 1000, 3).max_violation > 0.0);

    for (const Driver& d : {linear_driver(-0.3, 0.4, 0.5, 1.0), linear_driver(0.2, -0.5, -1.0, 0.0),
                            nonlinear_driver(0.05, 0.1, 0.3, 0.8), nonlinear_driver(0.02, 0.0, 0.2, -0.5),
                            market_driver(0.05, 0.1, 0.2)})
        CHECK(check_lipschitz(tree, d, 10000, 4).max_violation <= 0.0);
}

TEST_CASE("monotonicity map") {
    auto tree = build_tree(build_grid(1.0, 4), 0.5);
    const NodeState alive = tree.state(0, 0);
    CHECK(estimate_lambda(linear_driver(0, 0, 0.6, 0), 1.0, -2.0, 0.0, alive, 0.3, 0.1) == doctest::Approx(0.6));
    CHECK(estimate_lambda(linear_driver(0.1, 0.2, 0, 1), 1.0, -2.0, 0.0, alive, 0.3, 0.1) == doctest::Approx(0.0));
    CHECK(estimate_lambda(linear_driver(0, 0, -1.0, 0), 1.0, 3.0, 0.0, alive, 0.3, 0.1) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(estimate_lambda(zero_driver(), 1.0, 1.0, 0.0, alive, 0.0, 0.0), InvalidInput);
    auto free = build_tree(build_grid(1.0, 4), 0.0);
    CHECK_THROWS_AS(estimate_lambda(zero_driver(), 1.0, 2.0, 0.0, free.state(0, 0), 0.0, 0.0), InvalidInput);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (const Driver& d : {linear_driver(0.1, 0.2, 0.5, 0), nonlinear_driver(0.05, 0.1, 0.3, 0.8),
                            nonlinear_driver(0.05, 0.1, 0.3, -0.6)}) {
        for (int s = 0; s < 500; ++s) {
            double u1 = nd(rng), u2 = nd(rng);
            if (u1 == u2) continue;
            const double lam = estimate_lambda(d, u1, u2, 0.0, alive, nd(rng), nd(rng));
            CHECK(lam >= -1.0 - 1e-12);
            CHECK(lam <= std::sqrt(d.nu(0.0)) + 1e-12);
        }
    }
}

TEST_CASE("market driver") {
    auto f0 = market_driver(0.0, 0.0, 0.2);
    auto tree = build_tree(build_grid(1.0, 200), 0.0);
    const NodeState s = tree.state(3, 1);
    CHECK(f0(0.1, s, 2.0, 3.0, 0.0) == 0.0);
    auto f = market_driver(0.05, 0.05, 0.2);
    CHECK(f(0.1, s, 2.0, 3.0, 0.0) == doctest::Approx(-0.1));
    CHECK(f.theta(0.3) == 0.0);
    CHECK(f.mu(0.3) == doctest::Approx(0.05));
    CHECK_THROWS_AS(market_driver(0.05, 0.1, 0.0), InvalidInput);
    const auto sol = solve_bsde(tree, f, std::vector<double>(tree.layer_size(200), 1.0));
    CHECK(std::abs(sol.y[0][0] - std::exp(-0.05)) <= 1e-3);
}

TEST_CASE("alpha floor") {
    auto tree = build_tree(build_grid(1.0, 4), 0.2);
    const auto d = linear_driver(0.0, 0.0, 0.0, 1.0);
    for (double a : d.alpha2_steps(tree)) CHECK(a >= d.eps_floor());
    const auto e = linear_driver(0.3, 0.5, 2.0, 0.0);
    CHECK(e.alpha2(0.0, 0.2) == doctest::Approx(0.3 + 0.25 + 16.0 * 0.2));
}
