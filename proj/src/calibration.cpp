#include "rbsde/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rbsde/bsde.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/stopping.hpp"

namespace rbsde {

namespace {

constexpr double kBeta = 3.0;

struct Case {
    ScenarioTree tree;
    Driver driver;
    std::mt19937_64 rng;
};

Case make_case(const ProblemFamily& f, std::size_t c) {
    std::mt19937_64 rng(f.seed + 7919 * c);
    const std::size_t n = f.steps[c % f.steps.size()];
    const double gamma = f.gammas[(c / f.steps.size()) % f.gammas.size()];
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Driver d = c % 3 == 2 ? linear_driver(0.3 * u(rng) - 0.1, 0.4 * u(rng) - 0.2, u(rng) - 0.5, 0.2 * u(rng))
                          : nonlinear_driver(0.2 * u(rng), 0.3 * u(rng), 0.5 * u(rng), 0.8 * u(rng));
    return {build_tree(build_grid(1.0, n), gamma), std::move(d), std::move(rng)};
}

std::vector<double> random_terminal(const ScenarioTree& tree, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    const double a = g(rng), b = 2.0 * g(rng), c = g(rng), h = g(rng);
    return tree.make_layer(tree.steps(), [=](const NodeState& s) { return a * std::sin(b * s.b) + c * s.b + h * s.h(); });
}

void finish(RatioSweep& s) {
    for (double r : s.ratios) s.max_ratio = std::max(s.max_ratio, r);
}

}  // namespace

ProblemFamily calibration_family() { return {1000, 24, {10, 20, 40}, {0.0, 0.3}}; }

ProblemFamily holdout_family() { return {5000, 24, {15, 30}, {0.1, 0.5}}; }

RatioSweep apriori_ratios(const ProblemFamily& f) {
    RatioSweep out;
    for (std::size_t c = 0; c < f.cases; ++c) {
        Case cs = make_case(f, c);
        const auto xi1 = random_terminal(cs.tree, cs.rng);
        auto xi2 = xi1;
        const auto bump = random_terminal(cs.tree, cs.rng);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double scale = u(cs.rng);
        for (std::size_t i = 0; i < xi2.size(); ++i) xi2[i] += scale * bump[i];
        const Driver d2 = cs.driver.shifted(2.0 * u(cs.rng) - 1.0);
        for (const Driver* other : {static_cast<const Driver*>(&cs.driver), &d2}) {
            const AprioriBound b = apriori_gap_bound(cs.tree, cs.driver, *other, xi1, xi2, kBeta, 1.0);
            const double data = b.terminal_term + b.driver_term;
            if (data > 0.0) out.ratios.push_back(b.lhs / data);
        }
    }
    finish(out);
    return out;
}

RatioSweep uniform_ratios(const ProblemFamily& f) {
    RatioSweep out;
    for (std::size_t c = 0; c < f.cases; ++c) {
        Case cs = make_case(f, c);
        std::normal_distribution<double> g(0.0, 0.3);
        const double a = 0.5 + std::abs(g(cs.rng)), b = g(cs.rng), jump = g(cs.rng);
        const std::size_t kj = cs.tree.steps() / 2;
        const Barrier upper(cs.tree, [=](const NodeState& s) {
            const double v = a + b * s.b + 0.2 * s.t;
            return Triple{v, v, s.layer == kj ? v + jump : v};
        });
        auto xi = random_terminal(cs.tree, cs.rng);
        for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = std::min(xi[i], upper.at(cs.tree.steps(), i).value);
        const double data = uniform_data_norm(cs.tree, cs.driver, xi, upper, kBeta);
        if (!(data > 0.0)) continue;
        for (double n = 1.0; n <= 256.0; n *= 2.0) {
            const PenalizedSolution lvl = solve_penalized(cs.tree, cs.driver, xi, upper, n);
            out.ratios.push_back(uniform_solution_norm(cs.tree, cs.driver, lvl.bsde.y, lvl.bsde.z, lvl.bsde.u,
                                                       lvl.k_second_moment, kBeta) / data);
        }
    }
    finish(out);
    return out;
}

RatioSweep epsilon_ratios(const ProblemFamily& f, std::span<const double> eps) {
    RatioSweep out;
    for (std::size_t c = 0; c < f.cases; ++c) {
        Case cs = make_case(f, c);
        std::normal_distribution<double> g(0.0, 0.3);
        const double a = g(cs.rng), b = g(cs.rng), strike = 1.0 + g(cs.rng), jump = -std::abs(g(cs.rng));
        const std::size_t kj = cs.tree.steps() / 3;
        const Barrier lower(cs.tree, [=](const NodeState& s) {
            const double v = a + b * s.b + std::max(strike - std::exp(0.4 * s.b), 0.0) - 0.1 * s.h();
            return Triple{v, v, s.layer == kj ? v + jump : v};
        });
        const auto xi = lower.values(cs.tree.steps());
        const ReflectedSolution sol = solve_reflected_lower(cs.tree, cs.driver, xi, lower);
        const std::size_t layer = c % 2 ? cs.tree.steps() / 2 : 0;
        for (double e : eps) {
            const auto rep = epsilon_optimal_time(cs.tree, cs.driver, sol, lower, xi,
                                                  StoppingRule::at_layer(cs.tree, layer), e);
            out.ratios.push_back(rep.optimality_gap / e);
        }
    }
    finish(out);
    return out;
}

}  // namespace rbsde
