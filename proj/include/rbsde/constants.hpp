#pragma once

// Empirical constants for estimates whose constant is only known to exist.
// Each is 1.5 × the worst ratio on calibration_family() (see rbsde_calibrate);
// tests check holdout_family() and hand-built fixtures against them.

namespace rbsde::constants {

/// E max e^{βA}|δY|² <= c (E e^{βA_T}|δξ|² + E Σ e^{βA}|δf/α|²Δt), β = 3. Fitted max 1.668.
inline constexpr double apriori_gap = 2.5;

/// Y_σ - E^f_{σ,η^ε}(𝓛_{η^ε}) <= c ε. Fitted max 0.9962.
inline constexpr double epsilon_optimal = 1.5;

/// Penalized solution norms <= c × data norm for every level n, β = 3. Fitted max 2.487.
inline constexpr double uniform_estimate = 3.75;

}  // namespace rbsde::constants
