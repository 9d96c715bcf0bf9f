#include "rbsde/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "rbsde/error.hpp"
#include "step.hpp"

namespace rbsde {

namespace {

NodeMask zero_mask(const ScenarioTree& tree) {
    NodeMask m(tree.layer_count());
    for (std::size_t k = 0; k < tree.layer_count(); ++k) m[k].assign(tree.layer_size(k), 0);
    return m;
}

NodeField stop_payoff(const ScenarioTree& tree, const Barrier& lower, std::span<const double> xi) {
    NodeField p = lower.value_field();
    const std::size_t n = tree.steps();
    if (xi.size() != tree.layer_size(n)) throw InvalidInput("terminal condition does not match the last layer");
    for (std::size_t i = 0; i < xi.size(); ++i) p[n][i] = xi[i];
    return p;
}

// One backward pass of the f-expectation for a stop set (values on every node).
void evaluate_rule(const ScenarioTree& tree, const Driver& driver, const NodeMask& stop, const NodeField& payoff,
                   NodeField& y) {
    const std::size_t n = tree.steps();
    y[n] = payoff[n];
    for (std::size_t k = n; k-- > 0;) {
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (stop[k][i]) {
                y[k][i] = payoff[k][i];
                continue;
            }
            const NodeState st = tree.state(k, i);
            const detail::LocalSystem ls = detail::local_system(tree, k, i, y[k + 1]);
            y[k][i] = detail::fixed_point([&](double v) { return ls.mean + h * driver(t, st, v, ls.z, ls.u); }, ls.mean);
        }
    }
}

}  // namespace

GainProcess stopping_gain(const ScenarioTree& tree, const Barrier& lower, std::span<const double> xi) {
    GainProcess g;
    g.running = tree.make_field(0.0);
    g.stop_value = stop_payoff(tree, lower, xi);
    g.stop_right = tree.make_field(0.0);
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) g.stop_right[k][i] = lower.at(k, i).right;
    const std::size_t n = tree.steps();
    for (std::size_t i = 0; i < xi.size(); ++i) g.stop_right[n][i] = xi[i];
    return g;
}

GainProcess gain_from_reflected(const ScenarioTree& tree, const Driver& driver, const ReflectedSolution& sol,
                                const Barrier& lower, std::span<const double> xi) {
    GainProcess g = stopping_gain(tree, lower, xi);
    for (std::size_t k = 0; k < tree.steps(); ++k) {
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const NodeState st = tree.state(k, i);
            g.running[k][i] = h * driver(t, st, sol.y_plus[k][i], sol.z[k][i], sol.u[k][i]);
        }
    }
    return g;
}

SnellResult snell_envelope_linear(const ScenarioTree& tree, const GainProcess& gain) {
    const std::size_t n = tree.steps();
    SnellResult r;
    r.value = tree.make_field(0.0);
    r.value_plus = tree.make_field(0.0);
    r.value[n] = gain.stop_value[n];
    r.value_plus[n] = gain.stop_value[n];
    r.supermartingale_defect = -std::numeric_limits<double>::infinity();
    for (std::size_t k = n; k-- > 0;) {
        const LayerValues cont = conditional_expectation(tree, k, r.value[k + 1]);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double c = gain.running[k][i] + cont[i];
            r.value_plus[k][i] = std::max(gain.stop_right[k][i], c);
            r.value[k][i] = std::max(gain.stop_value[k][i], r.value_plus[k][i]);
            r.supermartingale_defect = std::max(r.supermartingale_defect, c - r.value[k][i]);
        }
    }
    r.domination_defect = -std::numeric_limits<double>::infinity();
    NodeMask stop = zero_mask(tree);
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            r.domination_defect = std::max(r.domination_defect, gain.stop_value[k][i] - r.value[k][i]);
            stop[k][i] = r.value[k][i] <= gain.stop_value[k][i] ? 1 : 0;
        }
    r.rule = StoppingRule(tree, std::move(stop));
    return r;
}

NodeMask sigma_phases(const ScenarioTree& tree, const StoppingRule& sigma) {
    NodeMask reach = zero_mask(tree);  // incoming: 1 = pending, 2 = stopped
    NodeMask phase = zero_mask(tree);
    reach[0][0] = 1;
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            std::uint8_t out = reach[k][i] & 2u;
            if (reach[k][i] & 1u) out |= sigma.stops(k, i) ? 2u : 1u;
            phase[k][i] = out;
            if (k == tree.steps()) continue;
            for (const Branch& b : tree.branches(k, i)) reach[k + 1][static_cast<std::size_t>(b.child)] |= out;
        }
    return phase;
}

BruteForceResult brute_force_stopping_value(const ScenarioTree& tree, const Driver& driver, const Barrier& lower,
                                            std::span<const double> xi, const StoppingRule& sigma,
                                            std::size_t max_rules) {
    const std::size_t n = tree.steps();
    if (n > 6) throw InvalidInput("brute-force stopping is limited to N <= 6");
    check_step_sizes(tree, driver);
    const NodeField payoff = stop_payoff(tree, lower, xi);
    const NodeMask phase = sigma_phases(tree, sigma);
    for (std::size_t k = 0; k < phase.size(); ++k)
        for (std::size_t i = 0; i < phase[k].size(); ++i)
            if (phase[k][i] == 3u) throw InvalidInput("sigma reaches a node both before and after stopping");

    BruteForceResult res;
    res.at_sigma = sigma.boundary(tree);
    res.value = tree.make_field(-std::numeric_limits<double>::infinity());
    NodeMask stop = zero_mask(tree);
    std::fill(stop[n].begin(), stop[n].end(), 1);
    NodeField y = tree.make_field(0.0);

    // running[k]: nodes reached with η pending under the decisions made so far
    std::vector<std::vector<std::uint8_t>> running(tree.layer_count());
    running[0].assign(1, 1);

    auto record = [&]() {
        if (++res.rules > max_rules) throw InvalidInput("brute-force enumeration exceeds " + std::to_string(max_rules) + " rules");
        evaluate_rule(tree, driver, stop, payoff, y);
        for (std::size_t k = 0; k <= n; ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i)
                if (res.at_sigma[k][i]) res.value[k][i] = std::max(res.value[k][i], y[k][i]);
    };

    std::function<void(std::size_t)> layer = [&](std::size_t k) {
        if (k == n) {
            record();
            return;
        }
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            stop[k][i] = 0;
            if (running[k][i] && phase[k][i] == 2u) free.push_back(i);
        }
        if (free.size() > 40) throw InvalidInput("brute-force layer too wide");
        const std::uint64_t combos = std::uint64_t{1} << free.size();
        for (std::uint64_t bits = 0; bits < combos; ++bits) {
            for (std::size_t j = 0; j < free.size(); ++j) stop[k][free[j]] = (bits >> j) & 1u;
            running[k + 1].assign(tree.layer_size(k + 1), 0);
            for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
                if (!running[k][i] || stop[k][i]) continue;
                for (const Branch& b : tree.branches(k, i)) running[k + 1][static_cast<std::size_t>(b.child)] = 1;
            }
            layer(k + 1);
        }
        for (std::size_t i : free) stop[k][i] = 0;
    };
    layer(0);

    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            if (!res.at_sigma[k][i]) res.value[k][i] = 0.0;
    res.root_value = res.value[0][0];
    return res;
}

NonlinearStoppingValue nonlinear_stopping_value(const ScenarioTree& tree, const Driver& driver, const Barrier& lower,
                                                std::span<const double> xi, const StoppingRule& sigma) {
    const std::size_t n = tree.steps();
    if (xi.size() != tree.layer_size(n)) throw InvalidInput("terminal condition does not match the last layer");
    for (std::size_t i = 0; i < xi.size(); ++i)
        if (std::abs(xi[i] - lower.at(n, i).value) > 1e-12) throw InvalidInput("stopping value needs xi equal to the barrier at T");
    NonlinearStoppingValue out{solve_reflected_lower(tree, driver, xi, lower), sigma.boundary(tree), is_rusc(lower)};
    return out;
}

EpsilonOptimalReport epsilon_optimal_time(const ScenarioTree& tree, const Driver& driver, const ReflectedSolution& sol,
                                          const Barrier& lower, std::span<const double> xi, const StoppingRule& sigma,
                                          double eps) {
    if (!(eps > 0.0)) throw InvalidInput("epsilon must be positive");
    const std::size_t n = tree.steps();
    const NodeMask phase = sigma_phases(tree, sigma);
    NodeMask stop = zero_mask(tree);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (!(phase[k][i] & 2u)) continue;
            if (sol.y[k][i] > lower.at(k, i).value + eps) continue;
            if (phase[k][i] & 1u) throw InvalidInput("epsilon-stopping node is reached both before and after sigma");
            stop[k][i] = 1;
        }
    EpsilonOptimalReport rep;
    rep.rule = StoppingRule(tree, std::move(stop));
    rep.at_sigma = sigma.boundary(tree);
    const NodeField payoff = stop_payoff(tree, lower, xi);

    rep.threshold_excess = -std::numeric_limits<double>::infinity();
    const NodeMask eta_bd = rep.rule.boundary(tree);
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            if (eta_bd[k][i]) rep.threshold_excess = std::max(rep.threshold_excess, sol.y[k][i] - payoff[k][i] - eps);

    // K increments on [σ, η): nodes already past σ and still running for η
    const NodeMask eta_run = rep.rule.running(tree);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            if ((phase[k][i] & 2u) && eta_run[k][i] && !rep.rule.stops(k, i))
                rep.k_increment = std::max({rep.k_increment, sol.k_interval[k][i], sol.k_jump[k][i]});

    const FExpectation on_y = f_expectation(tree, driver, sigma, rep.rule, sol.y);
    const FExpectation on_l = f_expectation(tree, driver, sigma, rep.rule, payoff);
    rep.optimality_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (!rep.at_sigma[k][i]) continue;
            rep.martingale_gap = std::max(rep.martingale_gap, std::abs(sol.y[k][i] - on_y.y[k][i]));
            rep.optimality_gap = std::max(rep.optimality_gap, sol.y[k][i] - on_l.y[k][i]);
        }
    return rep;
}

SupermartingaleReport ef_supermartingale_check(const ScenarioTree& tree, const Driver& driver,
                                               const ReflectedSolution& sol, std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    SupermartingaleReport rep;
    const std::size_t n = tree.steps();
    for (std::size_t t = 0; t < trials; ++t) {
        const double ps = uni(rng), pe = uni(rng);
        NodeMask s = zero_mask(tree);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i) s[k][i] = uni(rng) < ps ? 1 : 0;
        const StoppingRule sigma(tree, std::move(s));
        const NodeMask phase = sigma_phases(tree, sigma);
        NodeMask e = zero_mask(tree);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i)
                e[k][i] = (phase[k][i] == 2u && uni(rng) < pe) ? 1 : 0;
        const StoppingRule eta(tree, std::move(e));
        const FExpectation fe = f_expectation(tree, driver, sigma, eta, sol.y);
        ++rep.pairs;
        bool bad = false;
        for (std::size_t k = 0; k <= n; ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
                if (!fe.at_sigma[k][i]) continue;
                const double excess = fe.y[k][i] - sol.y[k][i];
                rep.max_excess = std::max(rep.max_excess, excess);
                if (excess > 1e-10) bad = true;
            }
        if (bad) ++rep.violations;
    }
    return rep;
}

}  // namespace rbsde
