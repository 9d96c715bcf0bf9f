#include "rbsde/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "rbsde/bsde.hpp"
#include "rbsde/constants.hpp"
#include "rbsde/driver.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/stopping.hpp"

namespace rbsde {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---- schema -----------------------------------------------------------------

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw SchemaError(where + ": " + what);
}

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) fail(where, "expected an object");
    for (const auto& [k, v] : obj.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) fail(where + "/" + k, "unknown key");
    }
}

double num(const json& obj, const char* key, const std::string& where, std::optional<double> fallback = {}) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail(where + "/" + key, "required number missing");
    }
    const json& v = obj.at(key);
    if (!v.is_number()) fail(where + "/" + key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(where + "/" + key, "must be finite");
    return x;
}

std::int64_t integer(const json& obj, const char* key, const std::string& where, std::int64_t fallback,
                     std::int64_t lo, std::int64_t hi) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(where + "/" + key, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi) fail(where + "/" + key, "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
}

std::string str(const json& obj, const char* key, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    if (!obj.contains(key)) fail(where + "/" + key, "required string missing");
    const json& v = obj.at(key);
    if (!v.is_string()) fail(where + "/" + key, "expected a string");
    const auto s = v.get<std::string>();
    for (const char* a : allowed)
        if (s == a) return s;
    fail(where + "/" + key, "unknown value '" + s + "'");
}

std::vector<double> numbers(const json& obj, const char* key, const std::string& where) {
    std::vector<double> out;
    if (!obj.contains(key)) return out;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(where + "/" + key, "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(where + "/" + key + "/" + std::to_string(i), "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

const json kEmpty = json::object();

const json& section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg.at(key) : kEmpty; }

void require_positive(double v, const std::string& where) {
    if (!(v > 0.0)) fail(where, "must be positive");
}

void validate_spot(const json& p, const std::string& where) {
    require_positive(num(p, "s0", where), where + "/s0");
    require_positive(num(p, "strike", where), where + "/strike");
    require_positive(num(p, "sigma", where), where + "/sigma");
    num(p, "drift", where, 0.0);
}

// ---- problem assembly -------------------------------------------------------

double spot(const json& p, const NodeState& s) {
    const double sigma = p.at("sigma").get<double>();
    const double drift = p.value("drift", 0.0);
    return p.at("s0").get<double>() * std::exp(sigma * s.b + (drift - 0.5 * sigma * sigma) * s.t);
}

std::function<double(const NodeState&)> shape_fn(const json& spec) {
    const std::string kind = spec.at("kind").get<std::string>();
    const json p = spec.contains("params") ? spec.at("params") : json::object();
    if (kind == "constant") {
        const double c = p.value("value", 0.0);
        return [c](const NodeState&) { return c; };
    }
    if (kind == "linear") {
        const double a = p.value("a", 0.0), b = p.value("b", 0.0), slope = p.value("slope", 0.0), h = p.value("h", 0.0);
        return [=](const NodeState& s) { return a + b * s.b + slope * s.t + h * s.h(); };
    }
    if (kind == "digital") {
        const double v = p.value("value", 1.0);
        return [v](const NodeState& s) { return v * s.h(); };
    }
    if (kind == "put" || kind == "call") {
        const double strike = p.at("strike").get<double>();
        const double sign = kind == "put" ? 1.0 : -1.0;
        return [p, strike, sign](const NodeState& s) { return std::max(sign * (strike - spot(p, s)), 0.0); };
    }
    throw SchemaError("unknown shape '" + kind + "'");
}

struct Problem {
    Problem(TimeGrid g, IntensityCurve in) : grid(g), intensity(in), tree(build_tree(g, in)) {}

    std::string name;
    TimeGrid grid;
    IntensityCurve intensity;
    ScenarioTree tree;
    Driver driver = zero_driver();
    std::optional<Barrier> barrier;
    bool upper = false;
    bool xi_is_barrier = false;
    std::vector<double> xi;
    double beta = 3.0;
    std::uint64_t seed = 1;
    json run;
    json expect;
};

IntensityCurve make_intensity(const json& cfg) {
    if (!cfg.contains("intensity")) return IntensityCurve(0.0);
    const json& v = cfg.at("intensity");
    if (v.is_number()) return IntensityCurve(v.get<double>());
    return IntensityCurve(v.at("breaks").get<std::vector<double>>(), v.at("values").get<std::vector<double>>());
}

Driver make_driver(const json& spec) {
    const std::string name = spec.at("name").get<std::string>();
    const json p = spec.contains("params") ? spec.at("params") : json::object();
    if (name == "zero") return zero_driver();
    if (name == "linear") return linear_driver(p.value("a", 0.0), p.value("b", 0.0), p.value("c", 0.0), p.value("k", 0.0));
    if (name == "market") return market_driver(p.value("r", 0.0), p.value("mu", 0.0), p.value("sigma", 1.0));
    return nonlinear_driver(p.value("r", 0.0), p.value("s", 0.0), p.value("kappa", 0.0), p.value("c", 0.0));
}

Problem assemble(const json& cfg, std::optional<std::uint64_t> seed) {
    const json& g = cfg.at("grid");
    std::vector<double> mandatory = g.value("mandatory_times", std::vector<double>{});
    const json& barrier = section(cfg, "barrier");
    if (barrier.contains("jumps"))
        for (const json& j : barrier.at("jumps")) mandatory.push_back(j.at("t").get<double>());
    std::sort(mandatory.begin(), mandatory.end());
    Problem p(build_grid(g.at("T").get<double>(), g.at("N").get<std::size_t>(), mandatory), make_intensity(cfg));
    p.name = cfg.value("name", std::string("unnamed"));
    p.driver = make_driver(cfg.at("driver"));
    p.beta = cfg.value("beta", 3.0);
    p.seed = seed ? *seed : cfg.value("seed", std::uint64_t{1});
    p.run = section(cfg, "run");
    p.expect = section(cfg, "expect");

    if (!barrier.empty()) {
        p.upper = barrier.at("side").get<std::string>() == "upper";
        auto fn = shape_fn(barrier);
        std::vector<std::pair<std::size_t, double>> jumps;
        if (barrier.contains("jumps"))
            for (const json& j : barrier.at("jumps"))
                jumps.emplace_back(p.grid.index_of(j.at("t").get<double>()), j.at("size").get<double>());
        p.barrier = Barrier(p.tree, [&](const NodeState& s) {
            double v = fn(s);
            double right = v;
            for (const auto& [k, size] : jumps) {
                if (k == s.layer) right += size;
                if (k < s.layer) v += size, right += size;
            }
            return Triple{v, v, right};
        });
    }

    const json& term = cfg.at("terminal");
    const std::string kind = term.at("kind").get<std::string>();
    const std::size_t n = p.tree.steps();
    if (kind == "barrier") {
        p.xi = p.barrier->values(n);
        p.xi_is_barrier = true;
    } else {
        p.xi = p.tree.make_layer(n, shape_fn(term));
        if (p.barrier && term.value("clip_to_barrier", false)) {
            const LayerValues b = p.barrier->values(n);
            for (std::size_t i = 0; i < p.xi.size(); ++i) p.xi[i] = p.upper ? std::min(p.xi[i], b[i]) : std::max(p.xi[i], b[i]);
        }
    }
    return p;
}

// ---- helpers ----------------------------------------------------------------

std::vector<double> default_n_list() {
    std::vector<double> out;
    for (double n = 1; n <= 256; n *= 2) out.push_back(n);
    return out;
}

std::vector<double> n_list(const Problem& p) {
    auto v = p.run.value("n_list", std::vector<double>{});
    return v.empty() ? default_n_list() : v;
}

std::vector<double> eps_list(const Problem& p) {
    auto v = p.run.value("eps_list", std::vector<double>{});
    return v.empty() ? std::vector<double>{0.5, 0.1, 0.01} : v;
}

std::size_t trials(const Problem& p, std::size_t fallback) { return p.run.value("trials", fallback); }

double layer_mean(const ScenarioTree& tree, std::size_t k, const LayerValues& v) {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) m += tree.prob(k, i) * v[i];
    return m;
}

double max_abs_diff(const NodeField& a, const NodeField& b, double sign = 1.0) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size(); ++i) m = std::max(m, std::abs(a[k][i] - sign * b[k][i]));
    return m;
}

Table layer_table(const ScenarioTree& tree, const NodeField& y, const std::string& name) {
    Table t{name, {"k", "t", "mean_y", "min_y", "max_y"}, {}};
    for (std::size_t k = 0; k < tree.layer_count(); ++k) {
        const auto [lo, hi] = std::minmax_element(y[k].begin(), y[k].end());
        t.rows.push_back({double(k), tree.grid().time(k), layer_mean(tree, k, y[k]), *lo, *hi});
    }
    return t;
}

std::vector<double> negate(std::vector<double> v) {
    for (double& x : v) x = -x;
    return v;
}

bool brute_force_feasible(const Problem& p) {
    const std::size_t n = p.tree.steps();
    const bool jumps = p.intensity.max_abs() > 0.0;
    return n <= 6 && (!jumps || n <= 4);
}

// ---- run modes --------------------------------------------------------------

void mode_solve(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    double y0 = 0.0;
    if (!p.barrier) {
        const BsdeSolution sol = solve_bsde(tree, p.driver, p.xi);
        y0 = sol.y[0][0];
        r.scalars["y0"] = y0;
        r.scalars["z0"] = sol.z[0][0];
        r.scalars["u0"] = sol.u[0][0];
        r.check("recursion residual", sol.max_residual, 1e-9);
        r.tables.push_back(layer_table(tree, sol.y, "solution"));
    } else {
        const Barrier& b = *p.barrier;
        const ReflectedSolution sol = p.upper ? solve_reflected_upper(tree, p.driver, p.xi, b)
                                              : solve_reflected_lower(tree, p.driver, p.xi, b);
        y0 = sol.y[0][0];
        r.scalars["y0"] = y0;
        r.scalars["z0"] = sol.z[0][0];
        r.scalars["u0"] = sol.u[0][0];
        r.scalars["k_mean"] = sol.k_mean;
        r.scalars["k_second_moment"] = sol.k_second_moment;
        r.scalars["right_jump_square"] = sol.right_jump_square;
        r.check("recursion residual", sol.max_residual, 1e-9);
        r.check("skorokhod residual", skorokhod_residual(tree, sol, b), 1e-10);
        r.check("constraint violation", constraint_violation(tree, sol, b), 1e-12);
        r.check("right jump formula", jump_formula_residual(tree, sol, b), 1e-12);
        r.check("right jumps squared minus E K_T^2", sol.right_jump_square - sol.k_second_moment, 1e-12);
        // the other side, solved directly, must be the mirror image
        const ReflectedSolution mirror = p.upper
            ? solve_reflected_lower(tree, p.driver.mirrored(), negate(p.xi), b.negated())
            : solve_reflected_upper(tree, p.driver.mirrored(), negate(p.xi), b.negated());
        r.check("duality gap", max_abs_diff(sol.y, mirror.y, -1.0), 1e-12);
        r.tables.push_back(layer_table(tree, sol.y, "solution"));
    }
    if (p.expect.contains("y0")) {
        const double target = p.expect.at("y0").get<double>();
        r.scalars["expected_y0"] = target;
        r.check("y0 against closed form", std::abs(y0 - target), p.expect.at("tol").get<double>());
    }
}

void mode_penalize(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    const Barrier& zeta = *p.barrier;
    const auto ns = n_list(p);
    const PenalizationReport rep = penalization_convergence(tree, p.driver, p.xi, zeta, ns);
    Table t{"penalization",
            {"n", "y0", "sup_gap", "sup_violation", "monotone_violations", "k_terminal_mean",
             "k_terminal_second_moment", "continuous_sum", "jump_sum"},
            {}};
    std::size_t monotone = 0;
    double violation_rise = 0.0, gap_rise = 0.0, positivity = 0.0, off_rho = 0.0, uniform = 0.0;
    const bool with_uniform = p.run.value("uniform_estimate", false);
    const double data = with_uniform ? uniform_data_norm(tree, p.driver, p.xi, zeta, p.beta) : 0.0;
    for (std::size_t j = 0; j < rep.levels.size(); ++j) {
        const auto& l = rep.levels[j];
        t.rows.push_back({l.n, l.y0, l.sup_gap, l.sup_violation, double(l.monotone_violations), l.k_terminal_mean,
                          l.k_terminal_second_moment, l.continuous_sum, l.jump_sum});
        monotone += l.monotone_violations;
        if (j > 0) {
            violation_rise = std::max(violation_rise, l.sup_violation - rep.levels[j - 1].sup_violation);
            gap_rise = std::max(gap_rise, l.sup_gap - rep.levels[j - 1].sup_gap);
        }
        positivity = std::max({positivity, -l.continuous_sum, -l.jump_sum});
        const PenalizedSolution lvl = solve_penalized(tree, p.driver, p.xi, zeta, l.n);
        for (std::size_t k = 0; k < tree.layer_count(); ++k)
            for (std::size_t i = 0; i < tree.layer_size(k); ++i)
                if (!lvl.rho_nodes[k][i]) off_rho = std::max(off_rho, std::abs(lvl.k_jump[k][i]));
        if (with_uniform && data > 0.0)
            uniform = std::max(uniform, uniform_solution_norm(tree, p.driver, lvl.bsde.y, lvl.bsde.z, lvl.bsde.u,
                                                              lvl.k_second_moment, p.beta) / data);
    }
    r.tables.push_back(std::move(t));
    const auto& last = rep.levels.back();
    const double final_gap = std::abs(last.y0 - rep.direct_y0);
    r.scalars["direct_y0"] = rep.direct_y0;
    r.scalars["final_n"] = last.n;
    r.scalars["final_y0"] = last.y0;
    r.scalars["final_gap"] = final_gap;
    r.check("penalized monotone violations", double(monotone), 0.0);
    r.check("constraint violation increase between levels", violation_rise, 1e-12);
    r.check("sup gap increase between levels", gap_rise, 1e-12);
    r.check("penalty sums below zero", positivity, 1e-12);
    r.check("right-jump push off rho nodes", off_rho, 0.0);
    r.check("final level gap", final_gap, p.run.value("final_tolerance", 1e-2));
    if (with_uniform) {
        r.scalars["uniform_ratio"] = uniform;
        r.check("uniform estimate ratio", uniform, constants::uniform_estimate);
    }
}

void mode_snell(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    const Barrier& lower = *p.barrier;
    const ReflectedSolution sol = solve_reflected_lower(tree, p.driver, p.xi, lower);
    const SnellResult s = snell_envelope_linear(tree, gain_from_reflected(tree, p.driver, sol, lower, p.xi));
    r.scalars["y0"] = sol.y[0][0];
    r.scalars["snell_s0"] = s.value[0][0];
    r.check("reflected minus Snell at root", std::abs(sol.y[0][0] - s.value[0][0]), 1e-10);
    r.check("reflected minus Snell on nodes", max_abs_diff(sol.y, s.value), 1e-10);
    r.check("Snell supermartingale defect", s.supermartingale_defect, 1e-12);
    r.check("Snell domination defect", s.domination_defect, 1e-12);
    if (p.driver.name() == "zero") {
        const SnellResult lin = snell_envelope_linear(tree, stopping_gain(tree, lower, p.xi));
        r.scalars["stopping_value"] = lin.value[0][0];
        r.check("reflected minus optimal stopping value", std::abs(sol.y[0][0] - lin.value[0][0]), 1e-10);
    }
    r.tables.push_back(layer_table(tree, s.value, "snell"));
}

void mode_stopping(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    const Barrier& lower = *p.barrier;
    const ReflectedSolution sol = solve_reflected_lower(tree, p.driver, p.xi, lower);
    const std::size_t layer = std::min<std::size_t>(p.run.value("sigma_layer", std::size_t{0}), tree.steps());
    const StoppingRule sigma = StoppingRule::at_layer(tree, layer);
    Table t{"epsilon", {"eps", "threshold_excess", "k_increment", "martingale_gap", "optimality_gap", "ratio"}, {}};
    double threshold = -1e300, k_inc = 0.0, mart = 0.0, ratio = 0.0;
    for (double eps : eps_list(p)) {
        const auto e = epsilon_optimal_time(tree, p.driver, sol, lower, p.xi, sigma, eps);
        t.rows.push_back({eps, e.threshold_excess, e.k_increment, e.martingale_gap, e.optimality_gap,
                          e.optimality_gap / eps});
        threshold = std::max(threshold, e.threshold_excess);
        k_inc = std::max(k_inc, e.k_increment);
        mart = std::max(mart, e.martingale_gap);
        ratio = std::max(ratio, e.optimality_gap / eps);
    }
    r.tables.push_back(std::move(t));
    r.check("epsilon threshold excess", threshold, 0.0);
    r.check("K increment before epsilon time", k_inc, 0.0);
    r.check("E^f martingale gap up to epsilon time", mart, 1e-10);
    r.check("epsilon optimality ratio", ratio, constants::epsilon_optimal);

    const auto sm = ef_supermartingale_check(tree, p.driver, sol, trials(p, 50), p.seed);
    r.scalars["supermartingale_pairs"] = sm.pairs;
    r.check("E^f supermartingale violations", double(sm.violations), 0.0);

    if (brute_force_feasible(p)) {
        const auto nl = nonlinear_stopping_value(tree, p.driver, lower, p.xi, sigma);
        const auto brute = brute_force_stopping_value(tree, p.driver, lower, p.xi, sigma);
        double gap = 0.0;
        for (std::size_t i = 0; i < tree.layer_size(layer); ++i)
            gap = std::max(gap, std::abs(nl.solution.y[layer][i] - brute.value[layer][i]));
        r.scalars["brute_force_rules"] = brute.rules;
        r.scalars["brute_force_gap"] = gap;
        r.scalars["barrier_rusc"] = nl.rusc;
        if (nl.rusc) r.check("reflected minus brute-force stopping value", gap, 1e-9);
    }
}

void mode_compare(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    const json& c = p.run.contains("compare") ? p.run.at("compare") : kEmpty;
    const double max_xi = c.value("terminal_shift", 1.0), max_f = c.value("driver_shift", 1.0),
                 max_b = c.value("barrier_shift", 1.0);
    std::size_t violations = 0, bad_certs = 0, strict_fail = 0;
    double worst = 0.0;
    const std::size_t count = trials(p, 20);
    for (std::size_t trial = 0; trial <= count; ++trial) {
        // trial 0 repeats the data: equality and the strict check
        std::mt19937_64 rng(p.seed * 1000003ULL + trial);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double dx = trial ? max_xi * u(rng) : 0.0, df = trial ? max_f * u(rng) : 0.0,
                     db = trial ? max_b * u(rng) : 0.0;
        const Driver d2 = df > 0.0 ? p.driver.shifted(df) : p.driver;
        std::vector<double> xi2 = p.xi;
        for (double& v : xi2) v += dx;
        ComparisonReport rep;
        if (!p.barrier) {
            const BsdeSolution s1 = solve_bsde(tree, p.driver, p.xi);
            const BsdeSolution s2 = solve_bsde(tree, d2, xi2);
            const auto cert = certify_bsde(tree, p.driver, d2, p.xi, xi2, s2);
            bad_certs += !cert.valid();
            rep = compare_bsde(tree, s1, s2, trial == 0, cert);
        } else {
            const Barrier b2 = p.barrier->shifted(db);
            const LayerValues bt = b2.values(tree.steps());
            for (std::size_t i = 0; i < xi2.size(); ++i)
                xi2[i] = p.upper ? std::min(xi2[i], bt[i]) : std::max(xi2[i], bt[i]);
            auto solve = [&](const Driver& d, const std::vector<double>& xi, const Barrier& b) {
                return p.upper ? solve_reflected_upper(tree, d, xi, b) : solve_reflected_lower(tree, d, xi, b);
            };
            const ReflectedSolution s1 = solve(p.driver, p.xi, *p.barrier);
            const ReflectedSolution s2 = solve(d2, xi2, b2);
            const auto cert = certify_reflected(tree, p.driver, d2, p.xi, xi2, *p.barrier, b2, s2);
            bad_certs += !cert.valid();
            rep = compare_fields(tree, s1.y, s2.y, trial == 0, cert);
        }
        violations += rep.violations;
        worst = std::max(worst, rep.max_violation);
        if (rep.strict_checked && !rep.strict_ok) ++strict_fail;
    }
    r.scalars["comparison_trials"] = count;
    r.scalars["comparison_max_violation"] = worst;
    r.check("comparison violations", double(violations), 0.0);
    r.check("invalid comparison certificates", double(bad_certs), 0.0);
    r.check("strict comparison failures", double(strict_fail), 0.0);
}

void suite_extras(const Problem& p, RunReport& r) {
    const auto& tree = p.tree;
    r.check("representation residual", solve_bsde(tree, zero_driver(), p.xi).max_residual, 1e-12);
    r.check("Lipschitz bound excess", std::max(0.0, check_lipschitz(tree, p.driver, 2000, p.seed).max_violation), 0.0);

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double a = u(rng), b = u(rng), c = u(rng);
    const NodeField phi = tree.make_field([&](const NodeState& s) { return a * std::sin(s.b + s.t); });
    const NodeField psi = tree.make_field([&](const NodeState& s) { return s.alive ? std::max(-1.0, b + c * s.t) : 0.0; });
    const MeasureChange mc = doleans_exponential(tree, phi, psi, tree.make_field(0.0));
    double lowest = 0.0;
    for (const auto& layer : mc.path_min)
        for (double v : layer) lowest = std::min(lowest, v);
    const GirsanovResiduals g = girsanov_check(tree, mc);
    r.scalars["doleans_expected_terminal"] = mc.expected_terminal;
    r.check("Doleans-Dade mean minus one", std::abs(mc.expected_terminal - 1.0), 1e-10);
    r.check("Doleans-Dade negativity", -lowest, 0.0);
    r.check("Girsanov Brownian drift residual", g.brownian, 1e-10);
    r.check("Girsanov jump drift residual", g.jump, 1e-10);

    if (p.barrier) {
        const ReflectedSolution sol = p.upper ? solve_reflected_upper(tree, p.driver, p.xi, *p.barrier)
                                              : solve_reflected_lower(tree, p.driver, p.xi, *p.barrier);
        double ibp = 0.0, tanaka = 0.0;
        std::mt19937_64 prng(p.seed + 17);
        for (int trial = 0; trial < 8; ++trial) {
            const auto nodes = sample_path(tree, prng);
            std::vector<Triple> ys;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const double left = k ? sol.y_plus[k - 1][nodes[k - 1]] : sol.y[0][0];
                const double right = k + 1 < nodes.size() ? sol.y_plus[k][nodes[k]] : sol.y[k][nodes[k]];
                ys.push_back({left, sol.y[k][nodes[k]], right});
            }
            const RegulatedPath ypath(tree.grid(), ys);
            ibp = std::max(ibp, integration_by_parts_check(ypath, path_of(tree, *p.barrier, nodes)));
            const auto t1 = tanaka_check(ypath, [](double x) { return x * x; }, [](double x) { return 2 * x; });
            const auto t2 = tanaka_check(ypath, [](double x) { return std::max(x, 0.0); },
                                         [](double x) { return x > 0.0 ? 1.0 : 0.0; });
            tanaka = std::max({tanaka, -t1.min_increment, -t2.min_increment, t1.jump_residual, t2.jump_residual});
        }
        r.check("integration by parts residual on solution paths", ibp, 1e-12);
        r.check("Tanaka local time decrease", tanaka, 1e-12);
    }
}

void mode_suite(const Problem& p, RunReport& r) {
    mode_solve(p, r);
    suite_extras(p, r);
    if (p.barrier && !p.upper) {
        mode_snell(p, r);
        if (p.xi_is_barrier) mode_stopping(p, r);
    }
    if (p.barrier && p.upper) mode_penalize(p, r);
    mode_compare(p, r);
}

// ---- fixtures ---------------------------------------------------------------

ojson fixture(const std::string& name) {
    if (name == "plain-bsde")
        return ojson::parse(R"({
  "name": "plain-bsde",
  "grid": {"T": 1.0, "N": 200},
  "driver": {"name": "linear", "params": {"a": -0.05}},
  "terminal": {"kind": "constant", "params": {"value": 1.0}},
  "run": {"mode": "solve"},
  "expect": {"y0": 0.951229424500714, "tol": 1e-3},
  "seed": 1
})");
    if (name == "default-digital")
        return ojson::parse(R"({
  "name": "default-digital",
  "grid": {"T": 1.0, "N": 200},
  "intensity": 0.1,
  "driver": {"name": "zero"},
  "terminal": {"kind": "digital", "params": {"value": 1.0}},
  "run": {"mode": "solve"},
  "expect": {"y0": 0.095162581964040482, "tol": 1e-3},
  "seed": 2
})");
    if (name == "american-put")
        return ojson::parse(R"({
  "name": "american-put",
  "grid": {"T": 1.0, "N": 200},
  "driver": {"name": "zero"},
  "barrier": {"side": "lower", "kind": "put", "params": {"s0": 1.0, "strike": 1.1, "sigma": 0.3}},
  "terminal": {"kind": "barrier"},
  "run": {"mode": "snell"},
  "seed": 3
})");
    if (name == "rusc-barrier")
        return ojson::parse(R"({
  "name": "rusc-barrier",
  "grid": {"T": 1.0, "N": 4},
  "intensity": 0.3,
  "driver": {"name": "nonlinear", "params": {"r": 0.05, "s": 0.2, "kappa": 0.3, "c": 0.5}},
  "barrier": {"side": "lower", "kind": "linear", "params": {"a": 0.1, "b": 0.4, "slope": -0.2, "h": -0.1},
              "jumps": [{"t": 0.5, "size": -0.3}]},
  "terminal": {"kind": "barrier"},
  "run": {"mode": "stopping", "eps_list": [0.5, 0.1, 0.01]},
  "seed": 4
})");
    if (name == "right-jump-barrier")
        return ojson::parse(R"({
  "name": "right-jump-barrier",
  "grid": {"T": 1.0, "N": 100},
  "intensity": 0.1,
  "driver": {"name": "nonlinear", "params": {"r": 0.05, "s": 0.1, "kappa": 0.2, "c": 0.4}},
  "barrier": {"side": "upper", "kind": "linear", "params": {"a": 1.0, "slope": 0.3},
              "jumps": [{"t": 0.5, "size": 0.75}]},
  "terminal": {"kind": "linear", "params": {"a": 1.0, "b": 1.0, "h": -0.3}, "clip_to_barrier": true},
  "run": {"mode": "penalize", "n_list": [1, 2, 4, 8, 16, 32, 64, 128, 256]},
  "seed": 5
})");
    if (name == "comparison-pair")
        return ojson::parse(R"({
  "name": "comparison-pair",
  "grid": {"T": 1.0, "N": 30},
  "intensity": 0.2,
  "driver": {"name": "nonlinear", "params": {"r": 0.05, "s": 0.1, "kappa": 0.3, "c": 0.5}},
  "barrier": {"side": "lower", "kind": "linear", "params": {"a": -0.2, "b": 0.3, "h": 0.1},
              "jumps": [{"t": 0.5, "size": -0.2}]},
  "terminal": {"kind": "linear", "params": {"b": 1.0, "h": 0.2}, "clip_to_barrier": true},
  "run": {"mode": "compare", "trials": 100, "compare": {"terminal_shift": 1.0, "driver_shift": 0.5, "barrier_shift": 0.5}},
  "seed": 6
})");
    if (name == "market-pricing")
        return ojson::parse(R"({
  "name": "market-pricing",
  "grid": {"T": 1.0, "N": 200},
  "driver": {"name": "market", "params": {"r": 0.05, "mu": 0.1, "sigma": 0.2}},
  "terminal": {"kind": "call", "params": {"s0": 1.0, "strike": 1.0, "sigma": 0.2, "drift": 0.1}},
  "run": {"mode": "solve"},
  "expect": {"y0": 0.10450583572185565, "tol": 1e-2},
  "seed": 7
})");
    throw SchemaError("unknown fixture '" + name + "'");
}

}  // namespace

bool RunReport::passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyCheck& c) { return c.pass; });
}

void RunReport::check(std::string label, double value, double bound) {
    properties.push_back({std::move(label), value, bound, value <= bound});
}

std::vector<std::string> fixture_names() {
    return {"plain-bsde", "default-digital", "american-put", "rusc-barrier",
            "right-jump-barrier", "comparison-pair", "market-pricing"};
}

ojson fixture_config(const std::string& name) { return fixture(name); }

void validate_config(const json& cfg) {
    only_keys(cfg, "", {"name", "grid", "intensity", "driver", "barrier", "terminal", "run", "beta", "seed", "expect"});
    if (cfg.contains("name") && !cfg.at("name").is_string()) fail("/name", "expected a string");

    if (!cfg.contains("grid")) fail("/grid", "required");
    const json& g = cfg.at("grid");
    only_keys(g, "/grid", {"T", "N", "mandatory_times"});
    const double T = num(g, "T", "/grid");
    require_positive(T, "/grid/T");
    if (!g.contains("N")) fail("/grid/N", "required");
    integer(g, "N", "/grid", 1, 1, 100000);
    for (double t : numbers(g, "mandatory_times", "/grid"))
        if (!(t > 0.0 && t < T)) fail("/grid/mandatory_times", "times must lie in (0, T)");

    if (cfg.contains("intensity")) {
        const json& v = cfg.at("intensity");
        if (v.is_number()) {
            if (!(v.get<double>() >= 0.0)) fail("/intensity", "must be non-negative");
        } else {
            only_keys(v, "/intensity", {"breaks", "values"});
            const auto br = numbers(v, "breaks", "/intensity"), vals = numbers(v, "values", "/intensity");
            if (br.empty() || br.size() != vals.size()) fail("/intensity", "breaks and values need equal non-zero length");
            if (br[0] != 0.0) fail("/intensity/breaks", "must start at 0");
            for (std::size_t i = 1; i < br.size(); ++i)
                if (!(br[i] > br[i - 1])) fail("/intensity/breaks", "must increase");
            for (double x : vals)
                if (!(x >= 0.0)) fail("/intensity/values", "must be non-negative");
        }
    }

    if (!cfg.contains("driver")) fail("/driver", "required");
    const json& d = cfg.at("driver");
    only_keys(d, "/driver", {"name", "params"});
    const std::string dname = str(d, "name", "/driver", {"zero", "linear", "market", "nonlinear"});
    const json& dp = section(d, "params");
    if (dname == "zero") only_keys(dp, "/driver/params", {});
    if (dname == "linear") {
        only_keys(dp, "/driver/params", {"a", "b", "c", "k"});
        for (const char* k : {"a", "b", "c", "k"}) num(dp, k, "/driver/params", 0.0);
        if (num(dp, "c", "/driver/params", 0.0) < -1.0) fail("/driver/params/c", "must be >= -1");
    }
    if (dname == "market") {
        only_keys(dp, "/driver/params", {"r", "mu", "sigma"});
        num(dp, "r", "/driver/params");
        num(dp, "mu", "/driver/params");
        require_positive(num(dp, "sigma", "/driver/params"), "/driver/params/sigma");
    }
    if (dname == "nonlinear") {
        only_keys(dp, "/driver/params", {"r", "s", "kappa", "c"});
        for (const char* k : {"r", "s", "kappa", "c"}) num(dp, k, "/driver/params", 0.0);
    }

    auto validate_shape = [](const json& spec, const std::string& where, bool terminal) {
        const std::string kind = terminal ? str(spec, "kind", where, {"constant", "linear", "digital", "put", "call", "barrier"})
                                          : str(spec, "kind", where, {"constant", "linear", "put"});
        const json& p = section(spec, "params");
        const std::string pw = where + "/params";
        if (kind == "constant" || kind == "digital") {
            only_keys(p, pw, {"value"});
            num(p, "value", pw, 0.0);
        } else if (kind == "linear") {
            only_keys(p, pw, {"a", "b", "slope", "h"});
            for (const char* k : {"a", "b", "slope", "h"}) num(p, k, pw, 0.0);
        } else if (kind == "put" || kind == "call") {
            only_keys(p, pw, {"s0", "strike", "sigma", "drift"});
            validate_spot(p, pw);
        } else {
            only_keys(p, pw, {});
        }
        return kind;
    };

    bool has_barrier = false, upper = false;
    if (cfg.contains("barrier")) {
        const json& b = cfg.at("barrier");
        only_keys(b, "/barrier", {"side", "kind", "params", "jumps"});
        upper = str(b, "side", "/barrier", {"lower", "upper"}) == "upper";
        validate_shape(b, "/barrier", false);
        if (b.contains("jumps")) {
            const json& js = b.at("jumps");
            if (!js.is_array()) fail("/barrier/jumps", "expected an array");
            for (std::size_t i = 0; i < js.size(); ++i) {
                const std::string w = "/barrier/jumps/" + std::to_string(i);
                only_keys(js[i], w, {"t", "size"});
                const double t = num(js[i], "t", w);
                if (!(t > 0.0 && t < T)) fail(w + "/t", "must lie in (0, T)");
                num(js[i], "size", w);
            }
        }
        has_barrier = true;
    }

    if (!cfg.contains("terminal")) fail("/terminal", "required");
    const json& term = cfg.at("terminal");
    only_keys(term, "/terminal", {"kind", "params", "clip_to_barrier"});
    const std::string tkind = validate_shape(term, "/terminal", true);
    if (term.contains("clip_to_barrier") && !term.at("clip_to_barrier").is_boolean())
        fail("/terminal/clip_to_barrier", "expected a boolean");
    if ((tkind == "barrier" || term.value("clip_to_barrier", false)) && !has_barrier)
        fail("/terminal", "refers to a barrier but none is configured");

    const json& run = section(cfg, "run");
    only_keys(run, "/run", {"mode", "n_list", "eps_list", "sigma_layer", "trials", "compare", "final_tolerance",
                            "uniform_estimate"});
    const std::string mode = run.contains("mode")
        ? str(run, "mode", "/run", {"solve", "penalize", "snell", "stopping", "compare", "suite"})
        : std::string("solve");
    const auto ns = numbers(run, "n_list", "/run");
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (!(ns[i] >= 1.0) || ns[i] != std::floor(ns[i])) fail("/run/n_list", "levels must be integers >= 1");
        if (i && !(ns[i] > ns[i - 1])) fail("/run/n_list", "levels must increase");
    }
    for (double e : numbers(run, "eps_list", "/run"))
        if (!(e > 0.0)) fail("/run/eps_list", "must be positive");
    integer(run, "sigma_layer", "/run", 0, 0, integer(g, "N", "/grid", 1, 1, 100000));
    integer(run, "trials", "/run", 20, 0, 100000);
    if (run.contains("final_tolerance")) require_positive(num(run, "final_tolerance", "/run"), "/run/final_tolerance");
    if (run.contains("uniform_estimate") && !run.at("uniform_estimate").is_boolean())
        fail("/run/uniform_estimate", "expected a boolean");
    if (run.contains("compare")) {
        const json& c = run.at("compare");
        only_keys(c, "/run/compare", {"terminal_shift", "driver_shift", "barrier_shift"});
        for (const char* k : {"terminal_shift", "driver_shift", "barrier_shift"})
            if (num(c, k, "/run/compare", 0.0) < 0.0) fail(std::string("/run/compare/") + k, "must be >= 0");
    }
    if (mode == "penalize" && !(has_barrier && upper)) fail("/run/mode", "penalize needs an upper barrier");
    if ((mode == "snell" || mode == "stopping") && !(has_barrier && !upper))
        fail("/run/mode", mode + " needs a lower barrier");
    if (mode == "stopping" && tkind != "barrier") fail("/terminal/kind", "stopping needs the terminal value 'barrier'");

    if (cfg.contains("beta") && !(num(cfg, "beta", "") > 2.0)) fail("/beta", "must exceed 2");
    if (cfg.contains("seed")) {
        if (!cfg.at("seed").is_number_unsigned()) fail("/seed", "expected a non-negative integer");
    }
    if (cfg.contains("expect")) {
        const json& e = cfg.at("expect");
        only_keys(e, "/expect", {"y0", "tol"});
        num(e, "y0", "/expect");
        require_positive(num(e, "tol", "/expect"), "/expect/tol");
    }
}

RunReport run_experiment(const json& cfg, std::optional<std::uint64_t> seed) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    const Problem p = assemble(cfg, seed);
    RunReport r;
    r.name = p.name;
    r.mode = p.run.value("mode", std::string("solve"));
    r.seed = p.seed;
    r.config = ojson::parse(cfg.dump());
    r.scalars["steps"] = p.tree.steps();
    r.scalars["nodes"] = p.tree.node_count();
    if (r.mode == "solve") mode_solve(p, r);
    else if (r.mode == "penalize") mode_penalize(p, r);
    else if (r.mode == "snell") mode_snell(p, r);
    else if (r.mode == "stopping") mode_stopping(p, r);
    else if (r.mode == "compare") mode_compare(p, r);
    else mode_suite(p, r);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

ojson fast_variant(const ojson& cfg) {
    ojson out = cfg;
    auto& g = out["grid"];
    g["N"] = std::min<std::size_t>(g["N"].get<std::size_t>(), 40);
    if (out.contains("run")) {
        auto& run = out["run"];
        if (run.contains("n_list")) {
            std::vector<double> ns;
            for (double n : run["n_list"].get<std::vector<double>>())
                if (n <= 64) ns.push_back(n);
            run["n_list"] = ns;
        }
        if (run.contains("trials")) run["trials"] = std::min<std::size_t>(run["trials"].get<std::size_t>(), 10);
        if (run.contains("sigma_layer"))
            run["sigma_layer"] = std::min(run["sigma_layer"].get<std::size_t>(), g["N"].get<std::size_t>());
    }
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_report(const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ojson j;
    j["tool"] = "rbsde";
    j["version"] = kToolVersion;
    j["name"] = r.name;
    j["mode"] = r.mode;
    j["seed"] = r.seed;
    j["passed"] = r.passed();
    j["scalars"] = r.scalars;
    j["properties"] = ojson::array();
    for (const auto& c : r.properties)
        j["properties"].push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"pass", c.pass}});
    j["tables"] = ojson::array();
    for (const auto& t : r.tables) j["tables"].push_back(t.name + ".csv");
    j["config"] = r.config;
    {
        std::ofstream out(dir / "report.json", std::ios::binary);
        out << j.dump(2) << '\n';
    }
    for (const auto& t : r.tables) {
        std::ofstream out(dir / (t.name + ".csv"), std::ios::binary);
        for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
        out << '\n';
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_number(row[c]);
            out << '\n';
        }
    }
    std::ofstream timing(dir / "timing.json", std::ios::binary);
    timing << ojson{{"wall_seconds", r.wall_seconds}}.dump(2) << '\n';
}

}  // namespace rbsde
