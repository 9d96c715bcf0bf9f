#include "rbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "rbsde/error.hpp"
#include "rbsde/parallel.hpp"
#include "step.hpp"

namespace rbsde {

namespace {

NodeMask empty_mask(const ScenarioTree& tree) {
    NodeMask m(tree.layer_count());
    for (std::size_t k = 0; k < tree.layer_count(); ++k) m[k].assign(tree.layer_size(k), 0);
    return m;
}

void require_layer(const ScenarioTree& tree, std::size_t k, std::span<const double> v, const char* what) {
    if (v.size() != tree.layer_size(k)) throw InvalidInput(std::string(what) + " does not match the layer size");
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " must be finite");
}

void require_field(const ScenarioTree& tree, const NodeField& f, const char* what) {
    if (f.size() != tree.layer_count()) throw InvalidInput(std::string(what) + " does not match the tree");
    for (std::size_t k = 0; k < f.size(); ++k)
        if (f[k].size() != tree.layer_size(k)) throw InvalidInput(std::string(what) + " does not match the tree");
}

BsdeSolution backward(const ScenarioTree& tree, const Driver& driver, const NodeField* payoff,
                      const StoppingRule* stop, std::span<const double> xi, SolveOptions opts) {
    check_step_sizes(tree, driver);
    const std::size_t n = tree.steps();
    BsdeSolution sol;
    sol.y = tree.make_field(0.0);
    sol.z = tree.make_field(0.0);
    sol.u = tree.make_field(0.0);
    sol.residual = tree.make_field(0.0);
    if (stop) {
        for (std::size_t i = 0; i < tree.layer_size(n); ++i) sol.y[n][i] = (*payoff)[n][i];
    } else {
        sol.y[n].assign(xi.begin(), xi.end());
    }
    std::vector<std::size_t> iters;
    for (std::size_t k = n; k-- > 0;) {
        const std::size_t m = tree.layer_size(k);
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        const LayerValues& next = sol.y[k + 1];
        iters.assign(m, 0);
        parallel_for(m, [&](std::size_t j) {
            const std::size_t i = opts.reverse_order ? m - 1 - j : j;
            if (stop && stop->stops(k, i)) {
                sol.y[k][i] = (*payoff)[k][i];
                return;
            }
            const NodeState st = tree.state(k, i);
            const detail::LocalSystem ls = detail::local_system(tree, k, i, next);
            auto map = [&](double y) { return ls.mean + h * driver(t, st, y, ls.z, ls.u); };
            const double y = detail::fixed_point(map, ls.mean, &iters[i]);
            const double fh = h * driver(t, st, y, ls.z, ls.u);
            sol.y[k][i] = y;
            sol.z[k][i] = ls.z;
            sol.u[k][i] = ls.u;
            sol.residual[k][i] = std::max(detail::branch_residual(tree, k, i, next, y, fh, 0.0, ls.z, ls.u),
                                          std::abs(y - ls.mean - fh));
        });
        for (std::size_t i = 0; i < m; ++i) {
            sol.max_residual = std::max(sol.max_residual, sol.residual[k][i]);
            sol.max_iterations = std::max(sol.max_iterations, iters[i]);
        }
    }
    return sol;
}

}  // namespace

StoppingRule::StoppingRule(const ScenarioTree& tree, NodeMask stop) : stop_(std::move(stop)) {
    if (stop_.size() != tree.layer_count()) throw InvalidInput("stop set does not match the tree");
    for (std::size_t k = 0; k < stop_.size(); ++k)
        if (stop_[k].size() != tree.layer_size(k)) throw InvalidInput("stop set does not match the tree");
    std::fill(stop_.back().begin(), stop_.back().end(), 1);
}

StoppingRule StoppingRule::from_predicate(const ScenarioTree& tree, const std::function<bool(const NodeState&)>& pred) {
    NodeMask m = empty_mask(tree);
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) m[k][i] = pred(tree.state(k, i)) ? 1 : 0;
    return StoppingRule(tree, std::move(m));
}

StoppingRule StoppingRule::at_layer(const ScenarioTree& tree, std::size_t k) {
    if (k > tree.steps()) throw InvalidInput("stopping layer beyond the horizon");
    NodeMask m = empty_mask(tree);
    std::fill(m[k].begin(), m[k].end(), 1);
    return StoppingRule(tree, std::move(m));
}

NodeMask StoppingRule::running(const ScenarioTree& tree) const {
    NodeMask run = empty_mask(tree);
    run[0][0] = 1;
    for (std::size_t k = 0; k < tree.steps(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (!run[k][i] || stop_[k][i]) continue;
            for (const Branch& b : tree.branches(k, i)) run[k + 1][static_cast<std::size_t>(b.child)] = 1;
        }
    return run;
}

NodeMask StoppingRule::boundary(const ScenarioTree& tree) const {
    NodeMask run = running(tree);
    for (std::size_t k = 0; k < run.size(); ++k)
        for (std::size_t i = 0; i < run[k].size(); ++i) run[k][i] = run[k][i] && stop_[k][i];
    return run;
}

bool precedes(const ScenarioTree& tree, const StoppingRule& sigma, const StoppingRule& eta) {
    // bit (2*s + e) set when some path reaches the node with σ-stopped = s, η-stopped = e
    NodeMask reach = empty_mask(tree);
    reach[0][0] = 1;
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            std::uint8_t out = 0;
            for (unsigned st = 0; st < 4; ++st) {
                if (!(reach[k][i] & (1u << st))) continue;
                const bool s = (st & 2u) || sigma.stops(k, i);
                const bool e = (st & 1u) || eta.stops(k, i);
                if (e && !s) return false;
                out |= static_cast<std::uint8_t>(1u << ((s ? 2u : 0u) + (e ? 1u : 0u)));
            }
            if (k == tree.steps()) continue;
            for (const Branch& b : tree.branches(k, i)) reach[k + 1][static_cast<std::size_t>(b.child)] |= out;
        }
    return true;
}

void check_step_sizes(const ScenarioTree& tree, const Driver& driver) {
    double worst = 0.0, mu_max = 0.0;
    for (std::size_t k = 0; k < tree.steps(); ++k) {
        const double mu = driver.mu(tree.grid().time(k));
        worst = std::max(worst, mu * tree.grid().dt(k));
        mu_max = std::max(mu_max, mu);
    }
    if (worst >= 1.0) {
        const auto required = static_cast<std::size_t>(std::ceil(2.0 * mu_max * tree.grid().horizon()));
        throw SolverRefusal("step too coarse for the driver: mu*dt = " + std::to_string(worst) +
                                " (need < 1); use at least " + std::to_string(required) + " steps",
                            required);
    }
}

BsdeSolution solve_bsde(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                        SolveOptions opts) {
    require_layer(tree, tree.steps(), xi, "terminal condition");
    return backward(tree, driver, nullptr, nullptr, xi, opts);
}

BsdeSolution solve_bsde(const ScenarioTree& tree, const Driver& driver, const NodeField& payoff,
                        const StoppingRule& stop_at, SolveOptions opts) {
    require_field(tree, payoff, "payoff");
    const NodeMask bd = stop_at.boundary(tree);
    for (std::size_t k = 0; k < bd.size(); ++k)
        for (std::size_t i = 0; i < bd[k].size(); ++i)
            if (bd[k][i] && !std::isfinite(payoff[k][i])) throw InvalidInput("payoff must be finite on the stop set");
    return backward(tree, driver, &payoff, &stop_at, {}, opts);
}

FExpectation f_expectation(const ScenarioTree& tree, const Driver& driver, const StoppingRule& sigma,
                           const StoppingRule& eta, const NodeField& payoff) {
    if (!precedes(tree, sigma, eta)) throw InvalidInput("sigma must not exceed eta");
    FExpectation out;
    out.y = solve_bsde(tree, driver, payoff, eta).y;
    out.at_sigma = sigma.boundary(tree);
    return out;
}

double representation_determinant(const ScenarioTree& tree, std::size_t k, std::size_t i) {
    const BranchSet s = tree.branches(k, i);
    if (s.size() == 2) return s[1].db - s[0].db;
    const double a[3][3] = {{1.0, s[0].db, s[0].dm}, {1.0, s[1].db, s[1].dm}, {1.0, s[2].db, s[2].dm}};
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

AprioriBound apriori_gap_bound(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                               std::span<const double> xi1, std::span<const double> xi2, double beta,
                               double constant, std::size_t k0, std::size_t i0) {
    if (!(beta > 2.0)) throw InvalidInput("a priori estimate needs beta > 2");
    const BsdeSolution s1 = solve_bsde(tree, d1, xi1);
    const BsdeSolution s2 = solve_bsde(tree, d2, xi2);
    std::vector<double> alpha2 = d1.alpha2_steps(tree);
    const std::vector<double> alpha2b = d2.alpha2_steps(tree);
    for (std::size_t k = 0; k < alpha2.size(); ++k) alpha2[k] = std::max(alpha2[k], alpha2b[k]);
    const std::vector<double> A = weight_process(tree.grid(), alpha2);

    const std::size_t n = tree.steps();
    NodeField w = tree.make_field(0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        const double e = std::exp(beta * A[k]);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double d = s1.y[k][i] - s2.y[k][i];
            w[k][i] = e * d * d;
        }
    }
    const NodeField mass = reachable_mass(tree, k0, i0);
    AprioriBound b;
    b.lhs = expected_path_max(tree, w, k0, i0);
    const double eT = std::exp(beta * A[n]);
    for (std::size_t i = 0; i < tree.layer_size(n); ++i) {
        const double d = xi1[i] - xi2[i];
        b.terminal_term += mass[n][i] * eT * d * d;
    }
    for (std::size_t k = k0; k < n; ++k) {
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        const double e = std::exp(beta * A[k]);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (mass[k][i] == 0.0) continue;
            const NodeState st = tree.state(k, i);
            const double df = d1(t, st, s2.y[k][i], s2.z[k][i], s2.u[k][i]) - d2(t, st, s2.y[k][i], s2.z[k][i], s2.u[k][i]);
            b.driver_term += mass[k][i] * e * df * df / alpha2[k] * h;
        }
    }
    b.constant = constant;
    b.rhs = constant * (b.terminal_term + b.driver_term);
    b.holds = b.lhs <= b.rhs + 1e-12;
    return b;
}

MeasureChange doleans_exponential(const ScenarioTree& tree, const NodeField& phi, const NodeField& psi,
                                  const NodeField& delta) {
    require_field(tree, phi, "phi");
    require_field(tree, psi, "psi");
    require_field(tree, delta, "delta");
    const std::size_t n = tree.steps();
    MeasureChange mc;
    mc.phi = phi;
    mc.psi = psi;
    mc.delta = delta;
    mc.mass = tree.make_field(0.0);
    mc.cond_mean = tree.make_field(0.0);
    mc.path_min = tree.make_field(std::numeric_limits<double>::infinity());
    mc.path_max = tree.make_field(-std::numeric_limits<double>::infinity());
    mc.q.resize(tree.layer_count());
    mc.mass[0][0] = 1.0;
    mc.path_min[0][0] = mc.path_max[0][0] = 1.0;

    auto factor = [&](std::size_t k, std::size_t i, const Branch& b) {
        return 1.0 + delta[k][i] * tree.grid().dt(k) + phi[k][i] * b.db + psi[k][i] * b.dm;
    };

    for (std::size_t k = 0; k < n; ++k) {
        mc.q[k].resize(tree.layer_size(k));
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (tree.alive(k, i) && psi[k][i] < -1.0) throw InvalidInput("psi must be >= -1");
            const double growth = 1.0 + delta[k][i] * tree.grid().dt(k);
            double mean = 0.0;
            std::array<double, 3> q{0.0, 0.0, 0.0};
            const BranchSet set = tree.branches(k, i);
            for (std::size_t j = 0; j < set.size(); ++j) {
                const Branch& b = set[j];
                const double f = factor(k, i, b);
                if (f < -1e-15) throw InvalidInput("Doleans-Dade factor turns negative; refine the grid or shrink phi");
                mean += b.prob * f;
                q[j] = b.prob * f / growth;
                const auto c = static_cast<std::size_t>(b.child);
                mc.mass[k + 1][c] += mc.mass[k][i] * b.prob * f;
                if (tree.prob(k, i) > 0.0 && b.prob > 0.0) {
                    mc.path_min[k + 1][c] = std::min(mc.path_min[k + 1][c], mc.path_min[k][i] * f);
                    mc.path_max[k + 1][c] = std::max(mc.path_max[k + 1][c], mc.path_max[k][i] * f);
                }
            }
            mc.q[k][i] = q;
            mc.martingale_defect = std::max(mc.martingale_defect, std::abs(mean - growth));
        }
    }
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            mc.cond_mean[k][i] = tree.prob(k, i) > 0.0 ? mc.mass[k][i] / tree.prob(k, i) : 0.0;
    for (std::size_t i = 0; i < tree.layer_size(n); ++i) mc.expected_terminal += mc.mass[n][i];

    // Product formula: exp of the summed logs of the non-default factors times
    // the default-jump factor, against the plain recursion.
    std::mt19937_64 rng(20240611);
    for (int p = 0; p < 256; ++p) {
        const auto path = sample_path(tree, rng);
        double rec = 1.0, logsum = 0.0, jump = 1.0;
        bool zero = false;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = path[k];
            const BranchSet set = tree.branches(k, i);
            for (const Branch& b : set) {
                if (static_cast<std::size_t>(b.child) != path[k + 1]) continue;
                const double f = factor(k, i, b);
                rec *= f;
                if (b.kind == BranchKind::Default) {
                    jump *= f;
                } else if (f > 0.0) {
                    logsum += std::log(f);
                } else {
                    zero = true;
                }
                break;
            }
        }
        const double closed = zero ? 0.0 : std::exp(logsum) * jump;
        mc.closed_form_residual = std::max(mc.closed_form_residual, std::abs(rec - closed) / std::max(1.0, std::abs(rec)));
    }
    return mc;
}

MeasureChange doleans_exponential(const ScenarioTree& tree, double phi, double psi, double delta) {
    return doleans_exponential(tree, tree.make_field(phi), tree.make_field(psi), tree.make_field(delta));
}

GirsanovResiduals girsanov_check(const ScenarioTree& tree, const MeasureChange& mc) {
    GirsanovResiduals r;
    for (std::size_t k = 0; k < tree.steps(); ++k) {
        const double h = tree.grid().dt(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            if (mc.delta[k][i] != 0.0) throw InvalidInput("Girsanov check needs delta = 0");
            if (!(mc.mass[k][i] > 0.0)) continue;
            const BranchSet set = tree.branches(k, i);
            double eb = 0.0, em = 0.0, bb = 0.0, mm = 0.0, bm = 0.0;
            for (std::size_t j = 0; j < set.size(); ++j) {
                const Branch& b = set[j];
                eb += mc.q[k][i][j] * b.db;
                em += mc.q[k][i][j] * b.dm;
                bb += b.prob * b.db * b.db;
                mm += b.prob * b.dm * b.dm;
                bm += b.prob * b.db * b.dm;
            }
            const double phi = mc.phi[k][i], psi = mc.psi[k][i];
            r.brownian = std::max(r.brownian, std::abs(eb - phi * bb - psi * bm));
            r.jump = std::max(r.jump, std::abs(em - psi * mm - phi * bm));
            r.brownian_continuous = std::max(r.brownian_continuous, std::abs(eb - phi * h));
            r.jump_continuous = std::max(r.jump_continuous, std::abs(em - psi * tree.gamma(k, i) * h));
            ++r.nodes_checked;
        }
    }
    return r;
}

ComparisonCertificate certify_bsde(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                                   std::span<const double> xi1, std::span<const double> xi2,
                                   const BsdeSolution& sol2, double tol) {
    ComparisonCertificate c;
    c.terminal_dominated = xi1.size() == xi2.size();
    for (std::size_t i = 0; i < xi1.size() && c.terminal_dominated; ++i)
        if (xi1[i] > xi2[i] + tol) c.terminal_dominated = false;
    c.driver_dominated = true;
    for (std::size_t k = 0; k < tree.steps() && c.driver_dominated; ++k) {
        const double t = tree.grid().time(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const NodeState st = tree.state(k, i);
            const double y = sol2.y[k][i], z = sol2.z[k][i], u = sol2.u[k][i];
            if (d1(t, st, y, z, u) > d2(t, st, y, z, u) + tol) {
                c.driver_dominated = false;
                break;
            }
        }
    }
    return c;
}

ComparisonReport compare_fields(const ScenarioTree& tree, const NodeField& y1, const NodeField& y2, bool strict,
                                const std::optional<ComparisonCertificate>& cert, double tol) {
    if (!cert || !cert->valid()) throw InvalidInput("comparison needs a complete hypothesis certificate");
    require_field(tree, y1, "first solution");
    require_field(tree, y2, "second solution");
    ComparisonReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    NodeMask equal = empty_mask(tree);
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double d = y1[k][i] - y2[k][i];
            rep.max_violation = std::max(rep.max_violation, d);
            if (d > tol) ++rep.violations;
            if (std::abs(d) <= tol) {
                equal[k][i] = 1;
                ++rep.equal_nodes;
            }
        }
    if (strict) {
        rep.strict_checked = true;
        // every descendant of an equal node must be equal
        NodeMask below = empty_mask(tree);
        for (std::size_t k = 0; k < tree.steps(); ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
                if (below[k][i] && !equal[k][i]) rep.strict_ok = false;
                if (!(below[k][i] || equal[k][i])) continue;
                for (const Branch& b : tree.branches(k, i))
                    if (b.prob > 0.0) below[k + 1][static_cast<std::size_t>(b.child)] = 1;
            }
        const std::size_t n = tree.steps();
        for (std::size_t i = 0; i < tree.layer_size(n); ++i)
            if (below[n][i] && !equal[n][i]) rep.strict_ok = false;
    }
    return rep;
}

ComparisonReport compare_bsde(const ScenarioTree& tree, const BsdeSolution& sol1, const BsdeSolution& sol2,
                              bool strict, const std::optional<ComparisonCertificate>& cert, double tol) {
    return compare_fields(tree, sol1.y, sol2.y, strict, cert, tol);
}

}  // namespace rbsde
