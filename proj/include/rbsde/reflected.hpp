#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rbsde/bsde.hpp"
#include "rbsde/regulated.hpp"

namespace rbsde {

/// Solution of a reflected BSDE on the tree.
///
/// K is path dependent; per node it is described by its two increments:
/// `k_interval` accrues on (t_k, t_{k+1}] (the RCLL part K*, seen as a left jump
/// at t_{k+1} since K^c ≡ 0 on the grid) and `k_jump` = Δ₊K_{t_k} (the part K^g).
struct ReflectedSolution {
    bool upper = false;   ///< sign convention of K in the equation
    NodeField y;          ///< Y_{t_k}
    NodeField y_plus;     ///< Y_{t_k+}
    NodeField z;
    NodeField u;
    NodeField k_interval;
    NodeField k_jump;
    NodeField residual;
    double max_residual = 0.0;
    double k_mean = 0.0;             ///< E K_T
    double k_second_moment = 0.0;    ///< E K_T²
    double right_jump_square = 0.0;  ///< E (Σ Δ₊Y)²
};

/// Lower barrier 𝓛 with ξ >= 𝓛_T: Y >= 𝓛, Y_+ >= 𝓛_+.
ReflectedSolution solve_reflected_lower(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                        const Barrier& lower, SolveOptions opts = {});

/// Upper barrier ζ with ξ <= ζ_T, solved through the mirrored lower problem.
ReflectedSolution solve_reflected_upper(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                        const Barrier& upper, SolveOptions opts = {});

/// K along one path as regulated triples (K_{t-}, K_t, K_{t+}).
std::vector<Triple> k_path(const ReflectedSolution& sol, std::span<const std::size_t> nodes);

/// E Σ (|(Y_+ - 𝓛_+) ΔK*| + |(Y - 𝓛) Δ₊K|); for an upper solution the gaps are ζ - Y.
double skorokhod_residual(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier);

/// Worst |Δ₊K - (Y_+ - ζ)⁺ 1{Y = ζ}| for an upper solution (with the mirrored
/// form for a lower one).
double jump_formula_residual(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier);

/// Largest constraint breach: max(𝓛 - Y, 𝓛_+ - Y_+) for lower, max(Y - ζ, Y_+ - ζ_+) for upper.
double constraint_violation(const ScenarioTree& tree, const ReflectedSolution& sol, const Barrier& barrier);

/// Level-n output of the penalization scheme for an upper barrier.
struct PenalizedSolution {
    double n = 1.0;
    BsdeSolution bsde;   ///< Y, Z, U and recursion residuals
    NodeField y_plus;
    NodeField k_interval;  ///< n Δt (Y_+ - ζ_+)⁺
    NodeField k_jump;      ///< (Y_+ - ζ)⁺ at ρ-active nodes
    NodeMask rho_nodes;    ///< nodes where Y = Y_+ ∧ ζ is imposed
    double k_mean = 0.0;
    double k_second_moment = 0.0;
};

PenalizedSolution solve_penalized(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                  const Barrier& upper, double n);

struct PenalizationLevel {
    double n = 0.0;
    double y0 = 0.0;
    double sup_gap = 0.0;        ///< max_node |Y^n - Y|
    double sup_violation = 0.0;  ///< max_node (Y^n - ζ)⁺ (values and right limits)
    bool monotone = true;        ///< Y^n <= Y^{previous level} node-wise
    std::size_t monotone_violations = 0;
    bool above_limit = true;     ///< Y^n >= Y node-wise
    double k_terminal_mean = 0.0;
    double k_terminal_second_moment = 0.0;
    double continuous_sum = 0.0;  ///< E n Σ ((Y_+ - ζ_+)⁺)² Δt
    double jump_sum = 0.0;        ///< E Σ (Y - ζ)(Y_+ - ζ)⁺ over ρ nodes
};

struct PenalizationReport {
    double direct_y0 = 0.0;
    std::vector<PenalizationLevel> levels;
    bool monotone() const;
    bool violation_decreasing() const;
    bool gap_decreasing() const;
};

PenalizationReport penalization_convergence(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                                            const Barrier& upper, std::span<const double> n_list);

struct PositivitySums {
    double continuous = 0.0;
    double jump = 0.0;
    bool ok = true;  ///< both >= -1e-12
};

/// Expected values of the two sums in ∫(Y^n_- - ζ_-)dK^n = ∫(Y^n - ζ)dK^{n,*} + Σ(Y^n - ζ)Δ₊K^n.
PositivitySums penalty_positivity_check(const ScenarioTree& tree, const PenalizedSolution& level, const Barrier& upper);

/// Data side of the uniform estimate:
/// E e^{βA_T}|ξ|² + E Σ e^{βA}|f(·,0,0,0)/α|²Δt + E max e^{2βA}|ζ⁻|².
double uniform_data_norm(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                         const Barrier& upper, double beta);
/// Solution side: ‖Y‖²_{S²_β} + ‖Y‖²_{S²α_β} + ‖Z‖²_{H²_β} + ‖U‖²_{M²_β} + E|K_T|².
double uniform_solution_norm(const ScenarioTree& tree, const Driver& driver, const NodeField& y, const NodeField& z,
                             const NodeField& u, double k_second_moment, double beta);

/// Y¹ <= Y² node-wise given ξ¹ <= ξ², f¹ <= f² along solution 2 and 𝓛¹ <= 𝓛².
ComparisonReport compare_reflected(const ScenarioTree& tree, const ReflectedSolution& sol1,
                                   const ReflectedSolution& sol2, const std::optional<ComparisonCertificate>& cert,
                                   double tol = 1e-10);

/// Builds the comparison certificate for two lower-barrier problems.
ComparisonCertificate certify_reflected(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                                        std::span<const double> xi1, std::span<const double> xi2, const Barrier& l1,
                                        const Barrier& l2, const ReflectedSolution& sol2, double tol = 1e-12);

}  // namespace rbsde
