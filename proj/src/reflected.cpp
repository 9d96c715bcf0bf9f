#include "rbsde/reflected.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <string>
#include <utility>

#include "rbsde/error.hpp"
#include "rbsde/parallel.hpp"
#include "step.hpp"

namespace rbsde {

namespace {

// E[K_T] and E[K_T²] for K_T = Σ_k c_k along the path.
std::pair<double, double> path_sum_moments(const ScenarioTree& tree, const NodeField& c) {
    NodeField m1 = tree.make_field(0.0), m2 = tree.make_field(0.0);
    const std::size_t n = tree.steps();
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double m0 = tree.prob(k, i);
            if (m0 == 0.0) continue;
            const double a = c[k][i];
            const double s1 = m1[k][i] + a * m0;
            const double s2 = m2[k][i] + 2.0 * a * m1[k][i] + a * a * m0;
            for (const Branch& b : tree.branches(k, i)) {
                const auto j = static_cast<std::size_t>(b.child);
                m1[k + 1][j] += b.prob * s1;
                m2[k + 1][j] += b.prob * s2;
            }
        }
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < tree.layer_size(n); ++i) {
        e1 += m1[n][i] + c[n][i] * tree.prob(n, i);
        e2 += m2[n][i] + 2.0 * c[n][i] * m1[n][i] + c[n][i] * c[n][i] * tree.prob(n, i);
    }
    return {e1, e2};
}

NodeField sum_fields(const NodeField& a, const NodeField& b) {
    NodeField out = a;
    for (std::size_t k = 0; k < out.size(); ++k)
        for (std::size_t i = 0; i < out[k].size(); ++i) out[k][i] += b[k][i];
    return out;
}

void negate(NodeField& f) {
    for (auto& layer : f)
        for (double& v : layer) v = -v;
}

void require_barrier(const ScenarioTree& tree, const Barrier& b) {
    if (b.layer_count() != tree.layer_count()) throw InvalidInput("barrier does not match the tree");
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        if (b.layer_size(k) != tree.layer_size(k)) throw InvalidInput("barrier does not match the tree");
}

bool pinned(double y, double barrier) { return std::abs(y - barrier) <= 1e-12 * std::max(1.0, std::abs(barrier)); }

}  // namespace

ReflectedSolution solve_reflected_lower(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                        const Barrier& lower, SolveOptions opts) {
    require_barrier(tree, lower);
    check_step_sizes(tree, driver);
    const std::size_t n = tree.steps();
    if (xi.size() != tree.layer_size(n)) throw InvalidInput("terminal condition does not match the last layer");
    ReflectedSolution sol;
    sol.y = tree.make_field(0.0);
    sol.y_plus = tree.make_field(0.0);
    sol.z = tree.make_field(0.0);
    sol.u = tree.make_field(0.0);
    sol.k_interval = tree.make_field(0.0);
    sol.k_jump = tree.make_field(0.0);
    sol.residual = tree.make_field(0.0);
    for (std::size_t i = 0; i < xi.size(); ++i) {
        if (!std::isfinite(xi[i])) throw InvalidInput("terminal condition must be finite");
        if (xi[i] < lower.at(n, i).value - 1e-12)
            throw InvalidInput("terminal condition lies below the barrier at node " + std::to_string(i));
        sol.y[n][i] = sol.y_plus[n][i] = xi[i];
    }
    for (std::size_t k = n; k-- > 0;) {
        const std::size_t m = tree.layer_size(k);
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        const LayerValues& next = sol.y[k + 1];
        parallel_for(m, [&](std::size_t j) {
            const std::size_t i = opts.reverse_order ? m - 1 - j : j;
            const NodeState st = tree.state(k, i);
            const Triple& l = lower.at(k, i);
            const detail::LocalSystem ls = detail::local_system(tree, k, i, next);
            auto map = [&](double y) { return ls.mean + h * driver(t, st, y, ls.z, ls.u); };
            const double free = detail::fixed_point(map, ls.mean);
            double yp = free, a1 = 0.0;
            double fh = h * driver(t, st, free, ls.z, ls.u);
            if (free < l.right) {
                // the open interval after t_k is held at the barrier's right limit
                yp = l.right;
                fh = h * driver(t, st, yp, ls.z, ls.u);
                a1 = std::max(0.0, yp - ls.mean - fh);
            }
            const double y = std::max(l.value, yp);
            sol.y[k][i] = y;
            sol.y_plus[k][i] = yp;
            sol.z[k][i] = ls.z;
            sol.u[k][i] = ls.u;
            sol.k_interval[k][i] = a1;
            sol.k_jump[k][i] = y - yp;
            sol.residual[k][i] = std::max(detail::branch_residual(tree, k, i, next, yp, fh, a1, ls.z, ls.u),
                                          std::abs(yp - ls.mean - fh - a1));
        });
        for (std::size_t i = 0; i < m; ++i) sol.max_residual = std::max(sol.max_residual, sol.residual[k][i]);
    }
    std::tie(sol.k_mean, sol.k_second_moment) = path_sum_moments(tree, sum_fields(sol.k_interval, sol.k_jump));
    sol.right_jump_square = path_sum_moments(tree, sol.k_jump).second;
    return sol;
}

ReflectedSolution solve_reflected_upper(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                        const Barrier& upper, SolveOptions opts) {
    std::vector<double> neg(xi.begin(), xi.end());
    for (double& v : neg) v = -v;
    ReflectedSolution sol = solve_reflected_lower(tree, driver.mirrored(), neg, upper.negated(), opts);
    negate(sol.y);
    negate(sol.y_plus);
    negate(sol.z);
    negate(sol.u);
    sol.upper = true;
    return sol;
}

std::vector<Triple> k_path(const ReflectedSolution& sol, std::span<const std::size_t> nodes) {
    if (nodes.size() != sol.y.size()) throw InvalidInput("path must visit every layer");
    std::vector<Triple> out(nodes.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double left = acc;
        if (k > 0) acc += sol.k_interval[k - 1][nodes[k - 1]];
        const double value = acc;
        acc += sol.k_jump[k][nodes[k]];
        out[k] = {left, value, acc};
    }
    out.front().left = out.front().value;
    return out;
}

double skorokhod_residual(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier) {
    require_barrier(tree, barrier);
    const double s = sol.upper ? -1.0 : 1.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < tree.steps(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const Triple& b = barrier.at(k, i);
            const double gap_plus = s * (sol.y_plus[k][i] - b.right);
            const double gap = s * (sol.y[k][i] - b.value);
            acc += tree.prob(k, i) *
                   (std::abs(gap_plus * sol.k_interval[k][i]) + std::abs(gap * sol.k_jump[k][i]));
        }
    return acc;
}

double jump_formula_residual(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier) {
    require_barrier(tree, barrier);
    const double s = sol.upper ? 1.0 : -1.0;
    double worst = 0.0;
    for (std::size_t k = 0; k < tree.steps(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double zeta = barrier.at(k, i).value;
            const double expected =
                pinned(sol.y[k][i], zeta) ? std::max(0.0, s * (sol.y_plus[k][i] - zeta)) : 0.0;
            worst = std::max(worst, std::abs(sol.k_jump[k][i] - expected));
        }
    return worst;
}

double constraint_violation(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier) {
    require_barrier(tree, barrier);
    const double s = sol.upper ? 1.0 : -1.0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const Triple& b = barrier.at(k, i);
            worst = std::max(worst, s * (sol.y[k][i] - b.value));
            if (k < tree.steps()) worst = std::max(worst, s * (sol.y_plus[k][i] - b.right));
        }
    return worst;
}

PenalizedSolution solve_penalized(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                  const Barrier& upper, double n) {
    if (!(n >= 1.0)) throw InvalidInput("penalization level must be >= 1");
    require_barrier(tree, upper);
    check_step_sizes(tree, driver);
    const std::size_t last = tree.steps();
    if (xi.size() != tree.layer_size(last)) throw InvalidInput("terminal condition does not match the last layer");
    PenalizedSolution out;
    out.n = n;
    BsdeSolution& sol = out.bsde;
    sol.y = tree.make_field(0.0);
    sol.z = tree.make_field(0.0);
    sol.u = tree.make_field(0.0);
    sol.residual = tree.make_field(0.0);
    out.y_plus = tree.make_field(0.0);
    out.k_interval = tree.make_field(0.0);
    out.k_jump = tree.make_field(0.0);
    out.rho_nodes.resize(tree.layer_count());
    for (std::size_t k = 0; k < tree.layer_count(); ++k) out.rho_nodes[k].assign(tree.layer_size(k), 0);
    for (std::size_t i = 0; i < xi.size(); ++i) {
        if (xi[i] > upper.at(last, i).value + 1e-12)
            throw InvalidInput("terminal condition lies above the barrier at node " + std::to_string(i));
        sol.y[last][i] = out.y_plus[last][i] = xi[i];
    }
    for (std::size_t k = last; k-- > 0;) {
        const std::size_t m = tree.layer_size(k);
        const double t = tree.grid().time(k);
        const double h = tree.grid().dt(k);
        const double nh = n * h;
        const LayerValues& next = sol.y[k + 1];
        parallel_for(m, [&](std::size_t i) {
            const NodeState st = tree.state(k, i);
            const Triple& z = upper.at(k, i);
            const detail::LocalSystem ls = detail::local_system(tree, k, i, next);
            // y + nh(y - ζ_+)⁺ = w has the explicit root below
            auto prox = [&](double w) { return w <= z.right ? w : (w + nh * z.right) / (1.0 + nh); };
            auto map = [&](double y) { return prox(ls.mean + h * driver(t, st, y, ls.z, ls.u)); };
            const double yp = detail::fixed_point(map, ls.mean);
            const double fh = h * driver(t, st, yp, ls.z, ls.u);
            const double c1 = nh * std::max(0.0, yp - z.right);
            const bool rho = k == 0 || rho_active(upper, k, i, n);
            const double y = rho ? std::min(yp, z.value) : yp;
            sol.y[k][i] = y;
            out.y_plus[k][i] = yp;
            sol.z[k][i] = ls.z;
            sol.u[k][i] = ls.u;
            out.k_interval[k][i] = c1;
            out.k_jump[k][i] = yp - y;
            out.rho_nodes[k][i] = rho ? 1 : 0;
            sol.residual[k][i] = std::max(detail::branch_residual(tree, k, i, next, yp, fh, -c1, ls.z, ls.u),
                                          std::abs(yp - ls.mean - fh + c1));
        });
        for (std::size_t i = 0; i < m; ++i) sol.max_residual = std::max(sol.max_residual, sol.residual[k][i]);
    }
    std::tie(out.k_mean, out.k_second_moment) = path_sum_moments(tree, sum_fields(out.k_interval, out.k_jump));
    return out;
}

bool PenalizationReport::monotone() const {
    return std::all_of(levels.begin(), levels.end(), [](const PenalizationLevel& l) { return l.monotone; });
}

bool PenalizationReport::violation_decreasing() const {
    for (std::size_t j = 1; j < levels.size(); ++j)
        if (levels[j].sup_violation > levels[j - 1].sup_violation + 1e-12) return false;
    return true;
}

bool PenalizationReport::gap_decreasing() const {
    for (std::size_t j = 1; j < levels.size(); ++j)
        if (levels[j].sup_gap > levels[j - 1].sup_gap + 1e-12) return false;
    return true;
}

PositivitySums penalty_positivity_check(const ScenarioTree& tree, const PenalizedSolution& level,
                                        const Barrier& upper) {
    require_barrier(tree, upper);
    PositivitySums s;
    for (std::size_t k = 0; k < tree.steps(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double p = tree.prob(k, i);
            const Triple& z = upper.at(k, i);
            s.continuous += p * (level.y_plus[k][i] - z.right) * level.k_interval[k][i];
            s.jump += p * (level.bsde.y[k][i] - z.value) * level.k_jump[k][i];
        }
    s.ok = s.continuous >= -1e-12 && s.jump >= -1e-12;
    return s;
}

PenalizationReport penalization_convergence(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                            const Barrier& upper, std::span<const double> n_list) {
    for (std::size_t j = 1; j < n_list.size(); ++j)
        if (!(n_list[j] > n_list[j - 1])) throw InvalidInput("penalization levels must increase");
    const ReflectedSolution direct = solve_reflected_upper(tree, driver, xi, upper);
    PenalizationReport rep;
    rep.direct_y0 = direct.y[0][0];
    NodeField previous;
    for (double n : n_list) {
        const PenalizedSolution pen = solve_penalized(tree, driver, xi, upper, n);
        PenalizationLevel lv;
        lv.n = n;
        lv.y0 = pen.bsde.y[0][0];
        for (std::size_t k = 0; k < tree.layer_count(); ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
                const double y = pen.bsde.y[k][i];
                const double tol = 1e-11 * std::max(1.0, std::abs(y));
                lv.sup_gap = std::max(lv.sup_gap, std::abs(y - direct.y[k][i]));
                lv.sup_violation = std::max(lv.sup_violation, y - upper.at(k, i).value);
                if (k < tree.steps())
                    lv.sup_violation = std::max(lv.sup_violation, pen.y_plus[k][i] - upper.at(k, i).right);
                if (y < direct.y[k][i] - tol) lv.above_limit = false;
                if (!previous.empty() && y > previous[k][i] + tol) {
                    lv.monotone = false;
                    ++lv.monotone_violations;
                }
            }
        lv.k_terminal_mean = pen.k_mean;
        lv.k_terminal_second_moment = pen.k_second_moment;
        const PositivitySums ps = penalty_positivity_check(tree, pen, upper);
        lv.continuous_sum = ps.continuous;
        lv.jump_sum = ps.jump;
        rep.levels.push_back(lv);
        previous = pen.bsde.y;
    }
    return rep;
}

double uniform_data_norm(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                         const Barrier& upper, double beta) {
    const std::vector<double> alpha2 = driver.alpha2_steps(tree);
    const std::vector<double> A = weight_process(tree.grid(), alpha2);
    const std::size_t n = tree.steps();
    double total = 0.0;
    const double eT = std::exp(beta * A[n]);
    for (std::size_t i = 0; i < tree.layer_size(n); ++i) total += tree.prob(n, i) * eT * xi[i] * xi[i];
    NodeField neg = tree.make_field(0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        const double e2 = std::exp(2.0 * beta * A[k]);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const Triple& z = upper.at(k, i);
            const double m = std::max({0.0, -z.value, k < n ? -z.right : 0.0});
            neg[k][i] = e2 * m * m;
            if (k == n) continue;
            const NodeState st = tree.state(k, i);
            const double g = driver(st.t, st, 0.0, 0.0, 0.0);
            total += tree.prob(k, i) * std::exp(beta * A[k]) * g * g / alpha2[k] * tree.grid().dt(k);
        }
    }
    return total + expected_path_max(tree, neg);
}

double uniform_solution_norm(const ScenarioTree& tree, const Driver& driver, const NodeField& y, const NodeField& z,
                             const NodeField& u, double k_second_moment, double beta) {
    const std::vector<double> A = weight_process(tree.grid(), driver.alpha2_steps(tree));
    const WeightedNorms ny = weighted_norms(tree, y, beta, A);
    const WeightedNorms nz = weighted_norms(tree, z, beta, A, false);
    const WeightedNorms nu = weighted_norms(tree, u, beta, A, false);
    return ny.s2 + ny.s2_alpha + nz.h2 + nu.m2 + k_second_moment;
}

ComparisonReport compare_reflected(const ScenarioTree& tree, const ReflectedSolution& sol1,
                                   const ReflectedSolution& sol2, const std::optional<ComparisonCertificate>& cert,
                                   double tol) {
    return compare_fields(tree, sol1.y, sol2.y, false, cert, tol);
}

ComparisonCertificate certify_reflected(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                                        std::span<const double> xi1, std::span<const double> xi2, const Barrier& l1,
                                        const Barrier& l2, const ReflectedSolution& sol2, double tol) {
    ComparisonCertificate c;
    c.terminal_dominated = xi1.size() == xi2.size();
    for (std::size_t i = 0; i < xi1.size() && c.terminal_dominated; ++i)
        if (xi1[i] > xi2[i] + tol) c.terminal_dominated = false;
    c.driver_dominated = true;
    c.barrier_dominated = true;
    for (std::size_t k = 0; k < tree.layer_count(); ++k) {
        const double t = tree.grid().time(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const Triple& a = l1.at(k, i);
            const Triple& b = l2.at(k, i);
            if (a.left > b.left + tol || a.value > b.value + tol || a.right > b.right + tol) c.barrier_dominated = false;
            if (k == tree.steps()) continue;
            const NodeState st = tree.state(k, i);
            for (double y : {sol2.y[k][i], sol2.y_plus[k][i]})
                if (d1(t, st, y, sol2.z[k][i], sol2.u[k][i]) > d2(t, st, y, sol2.z[k][i], sol2.u[k][i]) + tol)
                    c.driver_dominated = false;
        }
    }
    return c;
}

}  // namespace rbsde
