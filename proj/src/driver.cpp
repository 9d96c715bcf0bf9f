#include "rbsde/driver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rbsde/error.hpp"

namespace rbsde {

Driver::Driver(std::string name, DriverFn fn, StepFunction mu, StepFunction theta, StepFunction nu,
               double lambda_floor, double eps_floor)
    : name_(std::move(name)), fn_(std::move(fn)), mu_(std::move(mu)), theta_(std::move(theta)),
      nu_(std::move(nu)), lambda_floor_(lambda_floor), eps_floor_(eps_floor) {
    if (!fn_) throw InvalidInput("driver needs a callable");
    if (mu_.min_value() < 0.0 || theta_.min_value() < 0.0 || nu_.min_value() < 0.0)
        throw InvalidInput("Lipschitz curves must be non-negative");
    if (lambda_floor_ < -1.0) throw InvalidInput("lambda floor must be >= -1");
    if (!(eps_floor_ > 0.0)) throw InvalidInput("epsilon floor must be positive");
}

double Driver::alpha2(double t, double gamma) const {
    const double th = theta_(t);
    const double nu = nu_(t);
    return std::max(mu_(t) + th * th + nu * nu * gamma, eps_floor_);
}

std::vector<double> Driver::alpha2_steps(const ScenarioTree& tree) const {
    std::vector<double> out(tree.steps());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = alpha2(tree.grid().time(k), tree.step_gamma(k));
    return out;
}

Driver Driver::mirrored() const {
    DriverFn f = fn_;
    return Driver(name_ + "~", [f](double t, const NodeState& s, double y, double z, double u) {
        return -f(t, s, -y, -z, -u);
    }, mu_, theta_, nu_, lambda_floor_, eps_floor_);
}

Driver Driver::shifted(double c) const {
    DriverFn f = fn_;
    return Driver(name_ + "+c", [f, c](double t, const NodeState& s, double y, double z, double u) {
        return f(t, s, y, z, u) + c;
    }, mu_, theta_, nu_, lambda_floor_, eps_floor_);
}

Driver zero_driver() {
    return Driver("zero", [](double, const NodeState&, double, double, double) { return 0.0; }, 0.0, 0.0, 0.0, 0.0);
}

Driver linear_driver(double a, double b, double c, double k) {
    const double lambda_floor = std::min(0.0, c);
    if (c < -1.0) throw InvalidInput("u-coefficient below -1 breaks the monotonicity condition");
    return Driver("linear",
                  [a, b, c, k](double, const NodeState& s, double y, double z, double u) {
                      return a * y + b * z + c * s.gamma * u + k;
                  },
                  std::abs(a), std::abs(b), std::max(std::abs(c), c * c), lambda_floor);
}

Driver market_driver(const StepFunction& r, const StepFunction& mu1, const StepFunction& sigma1) {
    std::vector<double> breaks;
    for (const StepFunction* f : {&r, &mu1, &sigma1})
        for (double b : f->breaks()) breaks.push_back(b);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::vector<double> mu_v, th_v;
    for (double b : breaks) {
        const double sg = sigma1(b);
        if (sg == 0.0 || !std::isfinite(sg)) throw InvalidInput("volatility must be non-zero");
        mu_v.push_back(std::abs(r(b)));
        th_v.push_back(std::abs((mu1(b) - r(b)) / sg));
    }
    for (double s : sigma1.values())
        if (s == 0.0) throw InvalidInput("volatility must be non-zero");
    return Driver("market",
                  [r, mu1, sigma1](double t, const NodeState&, double y, double z, double) {
                      const double rt = r(t);
                      return -rt * y - ((mu1(t) - rt) / sigma1(t)) * z;
                  },
                  StepFunction(breaks, mu_v), StepFunction(breaks, th_v), 0.0, 0.0);
}

Driver nonlinear_driver(double r, double s, double kappa, double c) {
    if (c < -1.0) throw InvalidInput("u-coefficient below -1 breaks the monotonicity condition");
    return Driver("nonlinear",
                  [r, s, kappa, c](double, const NodeState& st, double y, double z, double u) {
                      return -r * y - s * std::min(y, 0.0) + kappa * std::abs(z) + c * st.gamma * std::max(u, 0.0);
                  },
                  std::abs(r) + std::abs(s), std::abs(kappa), std::max(std::abs(c), c * c), std::min(0.0, c));
}

LipschitzReport check_lipschitz(const ScenarioTree& tree, const Driver& driver, std::size_t samples,
                                std::uint64_t seed) {
    if (samples < 1) throw InvalidInput("need at least one sample");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> layer(0, tree.steps());
    std::normal_distribution<double> arg(0.0, 5.0);
    LipschitzReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t k = layer(rng);
        std::uniform_int_distribution<std::size_t> pick(0, tree.layer_size(k) - 1);
        const NodeState st = tree.state(k, pick(rng));
        const double y1 = arg(rng), z1 = arg(rng), u1 = arg(rng);
        // half of the pairs are close together to probe local slopes
        const double scale = (s % 2 == 0) ? 1.0 : 1e-3;
        const double y2 = y1 + scale * arg(rng), z2 = z1 + scale * arg(rng), u2 = u1 + scale * arg(rng);
        const double f1 = driver(st.t, st, y1, z1, u1);
        const double f2 = driver(st.t, st, y2, z2, u2);
        const double bound = driver.mu(st.t) * std::abs(y1 - y2) + driver.theta(st.t) * std::abs(z1 - z2) +
                             driver.nu(st.t) * st.gamma * std::abs(u1 - u2);
        const double slack = 1e-12 * (std::abs(f1) + std::abs(f2) + 1.0);
        const double v = std::abs(f1 - f2) - bound - slack;
        if (v > rep.max_violation) rep = {v, st.t, y1, z1, u1, y2, z2, u2};
    }
    return rep;
}

double estimate_lambda(const Driver& driver, double u1, double u2, double t, const NodeState& node, double y,
                       double z) {
    if (node.gamma == 0.0) throw InvalidInput("lambda is undefined where the intensity vanishes");
    if (u1 == u2) throw InvalidInput("lambda needs two distinct u values");
    return (driver(t, node, y, z, u1) - driver(t, node, y, z, u2)) / ((u1 - u2) * node.gamma);
}

}  // namespace rbsde
