#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "rbsde/bsde.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"

namespace rbsde {

/// Gain of stopping, split so that the path integral ∫₀^η f ds is carried as a
/// running reward: `running` = f Δt paid while continuing from a node,
/// `stop_value` paid when stopping at the node (𝓛_t, or ξ on the last layer),
/// `stop_right` the barrier just after the node.
struct GainProcess {
    NodeField running;
    NodeField stop_value;
    NodeField stop_right;
};

/// Gain built from a lower reflected solution: running = f(t, Y_+, Z, U)Δt.
GainProcess gain_from_reflected(const ScenarioTree& tree, const Driver& driver, const ReflectedSolution& sol,
                                const Barrier& lower, std::span<const double> xi);
/// Pure stopping gain (no running reward).
GainProcess stopping_gain(const ScenarioTree& tree, const Barrier& lower, std::span<const double> xi);

struct SnellResult {
    NodeField value;       ///< S
    NodeField value_plus;  ///< S_+ = max(gain right limit, running + E S_next)
    StoppingRule rule;     ///< first node with S = gain value
    double supermartingale_defect = 0.0;  ///< max(running + E S_next - S), <= 0 expected
    double domination_defect = 0.0;       ///< max(gain - S), <= 0 expected
};

SnellResult snell_envelope_linear(const ScenarioTree& tree, const GainProcess& gain);

/// Per node: bit 1 when some path reaches it with σ still pending after the node,
/// bit 2 when some path reaches it with σ already stopped (at or before it).
NodeMask sigma_phases(const ScenarioTree& tree, const StoppingRule& sigma);

struct BruteForceResult {
    NodeField value;           ///< best E^f_{σ,η}(payoff) at σ-boundary nodes, 0 elsewhere
    NodeMask at_sigma;
    double root_value = 0.0;   ///< value at the root when σ = 0
    std::size_t rules = 0;     ///< stopping rules enumerated
};

/// Exhaustive maximum over every node-measurable η >= σ of E^f_{σ,η}(𝓛_η 1{η<T} + ξ 1{η=T}).
/// Refuses N > 6, σ with nodes reached both before and after it, and
/// enumerations beyond `max_rules`.
BruteForceResult brute_force_stopping_value(const ScenarioTree& tree, const Driver& driver, const Barrier& lower,
                                            std::span<const double> xi, const StoppingRule& sigma,
                                            std::size_t max_rules = 20'000'000);

struct NonlinearStoppingValue {
    ReflectedSolution solution;
    NodeMask at_sigma;
    bool rusc = true;  ///< false: equality with the brute-force value is not guaranteed
};

/// Reflected value at σ; needs ξ = 𝓛_T.
NonlinearStoppingValue nonlinear_stopping_value(const ScenarioTree& tree, const Driver& driver, const Barrier& lower,
                                                std::span<const double> xi, const StoppingRule& sigma);

struct EpsilonOptimalReport {
    StoppingRule rule;
    double threshold_excess = 0.0;  ///< max (Y - 𝓛 - ε) at stopping nodes, <= 0 expected
    double k_increment = 0.0;       ///< largest K increment strictly between σ and η
    double martingale_gap = 0.0;    ///< max |Y_σ - E^f_{σ,η}(Y_η)|
    double optimality_gap = 0.0;    ///< max (Y_σ - E^f_{σ,η}(𝓛_η))
    NodeMask at_sigma;
};

/// η = first node at or after σ with Y <= 𝓛 + ε. Throws InvalidInput if that set
/// contains a node reached both before and after σ.
EpsilonOptimalReport epsilon_optimal_time(const ScenarioTree& tree, const Driver& driver, const ReflectedSolution& sol,
                                          const Barrier& lower, std::span<const double> xi, const StoppingRule& sigma,
                                          double eps);

struct SupermartingaleReport {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    double max_excess = 0.0;  ///< max E^f_{σ,η}(Y_η) - Y_σ
};

/// Random σ <= η pairs: E^f_{σ,η}(Y_η) <= Y_σ + 1e-10 at σ.
SupermartingaleReport ef_supermartingale_check(const ScenarioTree& tree, const Driver& driver,
                                               const ReflectedSolution& sol, std::size_t trials, std::uint64_t seed);

}  // namespace rbsde
