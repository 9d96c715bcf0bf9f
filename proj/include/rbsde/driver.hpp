#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "rbsde/grid.hpp"
#include "rbsde/tree.hpp"

namespace rbsde {

using DriverFn = std::function<double(double t, const NodeState& node, double y, double z, double u)>;

/// Coefficient f(t, node, y, z, u) with declared stochastic-Lipschitz curves:
/// |Δf| <= μ|Δy| + θ|Δz| + νγ|Δu|.
class Driver {
public:
    Driver(std::string name, DriverFn fn, StepFunction mu, StepFunction theta, StepFunction nu,
           double lambda_floor = -1.0, double eps_floor = 1e-6);

    double operator()(double t, const NodeState& node, double y, double z, double u) const {
        return fn_(t, node, y, z, u);
    }

    const std::string& name() const { return name_; }
    double mu(double t) const { return mu_(t); }
    double theta(double t) const { return theta_(t); }
    double nu(double t) const { return nu_(t); }
    const StepFunction& mu_curve() const { return mu_; }
    double lambda_floor() const { return lambda_floor_; }
    double eps_floor() const { return eps_floor_; }

    /// max(μ + θ² + ν²γ, ε).
    double alpha2(double t, double gamma) const;
    /// α² per grid step using the pre-default intensity γ(t_k).
    std::vector<double> alpha2_steps(const ScenarioTree& tree) const;

    /// f̃(t,y,z,u) = -f(t,-y,-z,-u), same constants.
    Driver mirrored() const;
    /// f + c.
    Driver shifted(double c) const;

private:
    std::string name_;
    DriverFn fn_;
    StepFunction mu_, theta_, nu_;
    double lambda_floor_;
    double eps_floor_;
};

/// Two drivers plus whether f¹ <= f² has been certified along the solution of the second.
struct DriverPair {
    Driver first;
    Driver second;
    bool dominance_certified = false;
};

Driver zero_driver();
/// f = a y + b z + c γ u + k.
Driver linear_driver(double a, double b, double c, double k);
/// Replication driver of the default-free market: f = -r y - ((μ¹ - r)/σ¹) z.
Driver market_driver(const StepFunction& r, const StepFunction& mu1, const StepFunction& sigma1);
/// f = -r y - s min(y, 0) + κ|z| + c γ max(u, 0).
Driver nonlinear_driver(double r, double s, double kappa, double c);

struct LipschitzReport {
    double max_violation = 0.0;  ///< <= 0 means no violation found
    double t = 0.0;
    double y1 = 0.0, z1 = 0.0, u1 = 0.0;
    double y2 = 0.0, z2 = 0.0, u2 = 0.0;
};

/// Random argument pairs at random tree nodes; returns the worst |Δf| - bound.
LipschitzReport check_lipschitz(const ScenarioTree& tree, const Driver& driver, std::size_t samples,
                                std::uint64_t seed);

/// (f(u₁) - f(u₂)) / ((u₁ - u₂)γ).
double estimate_lambda(const Driver& driver, double u1, double u2, double t, const NodeState& node, double y,
                       double z);

}  // namespace rbsde
