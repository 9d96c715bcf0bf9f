#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rbsde/driver.hpp"
#include "rbsde/tree.hpp"

namespace rbsde {

using NodeMask = std::vector<std::vector<std::uint8_t>>;

/// Stopping time on the tree given by a node stop set: a path stops at the first
/// node of the set it visits. Every node of the last layer is in the set.
class StoppingRule {
public:
    StoppingRule() = default;
    StoppingRule(const ScenarioTree& tree, NodeMask stop);

    static StoppingRule from_predicate(const ScenarioTree& tree, const std::function<bool(const NodeState&)>& pred);
    /// Deterministic time t_k.
    static StoppingRule at_layer(const ScenarioTree& tree, std::size_t k);

    bool stops(std::size_t k, std::size_t i) const { return stop_[k][i] != 0; }
    const NodeMask& stop_set() const { return stop_; }

    /// Nodes reached by some path that has not stopped strictly earlier.
    NodeMask running(const ScenarioTree& tree) const;
    /// Nodes where some path stops (running and in the stop set).
    NodeMask boundary(const ScenarioTree& tree) const;

private:
    NodeMask stop_;
};

/// σ <= η on every path.
bool precedes(const ScenarioTree& tree, const StoppingRule& sigma, const StoppingRule& eta);

struct BsdeSolution {
    NodeField y;
    NodeField z;         ///< zero on the last layer and on frozen nodes
    NodeField u;         ///< zero on defaulted, last-layer and frozen nodes
    NodeField residual;  ///< worst branch defect of the one-step recursion
    double max_residual = 0.0;
    std::size_t max_iterations = 0;
};

struct SolveOptions {
    bool reverse_order = false;  ///< visit nodes of a layer back to front
};

/// Refuses (SolverRefusal) when μ(t_k)Δt_k >= 1 on some step.
void check_step_sizes(const ScenarioTree& tree, const Driver& driver);

BsdeSolution solve_bsde(const ScenarioTree& tree, const Driver& driver, std::span<const double> xi,
                        SolveOptions opts = {});

/// Driver killed after the stopping time: Y is frozen to `payoff` on the stop set.
BsdeSolution solve_bsde(const ScenarioTree& tree, const Driver& driver, const NodeField& payoff,
                        const StoppingRule& stop_at, SolveOptions opts = {});

struct FExpectation {
    NodeField y;        ///< E^f_{·,η} at every node that is still running for η
    NodeMask at_sigma;  ///< nodes where σ stops
};

/// E^f_{σ,η}(payoff); throws InvalidInput unless σ <= η pathwise.
FExpectation f_expectation(const ScenarioTree& tree, const Driver& driver, const StoppingRule& sigma,
                           const StoppingRule& eta, const NodeField& payoff);

/// Determinant of the one-step representation system [1, ΔB_b, ΔM_b] at a node
/// (2x2 without the ΔM column on two-branch nodes).
double representation_determinant(const ScenarioTree& tree, std::size_t k, std::size_t i);

struct AprioriBound {
    double lhs = 0.0;            ///< E[max e^{βA}|Y¹ - Y²|²]
    double terminal_term = 0.0;  ///< E e^{βA_T}|ξ¹ - ξ²|²
    double driver_term = 0.0;    ///< E Σ e^{βA}|f¹ - f²|²(Y², Z², U²)/α² Δt
    double constant = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

/// Compares the two solutions from node (k0, i0); α² is the larger of the two
/// drivers' curves. Throws for β <= 2.
AprioriBound apriori_gap_bound(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                               std::span<const double> xi1, std::span<const double> xi2, double beta,
                               double constant, std::size_t k0 = 0, std::size_t i0 = 0);

/// Discrete Doléans-Dade exponential Λ*_{k+1} = Λ*_k(1 + δΔt + φΔB + ψΔM).
/// Λ* is path dependent, so it is stored through its per-node mass and range.
struct MeasureChange {
    NodeField phi, psi, delta;
    NodeField mass;       ///< E[Λ*_k 1_node]
    NodeField cond_mean;  ///< E[Λ*_k | node]
    NodeField path_min;   ///< smallest Λ*_k over paths reaching the node
    NodeField path_max;
    std::vector<std::vector<std::array<double, 3>>> q;  ///< reweighted branch probabilities
    double expected_terminal = 0.0;                      ///< E Λ*_T
    double martingale_defect = 0.0;   ///< max |E[factor | node] - (1 + δΔt)|
    double closed_form_residual = 0.0;  ///< recursion vs product formula on sampled paths
};

MeasureChange doleans_exponential(const ScenarioTree& tree, const NodeField& phi, const NodeField& psi,
                                  const NodeField& delta);
MeasureChange doleans_exponential(const ScenarioTree& tree, double phi, double psi, double delta);

struct GirsanovResiduals {
    double brownian = 0.0;  ///< max |E_Q[ΔB] - φ<B> - ψ<B,M>|
    double jump = 0.0;      ///< max |E_Q[ΔM] - ψ<M> - φ<B,M>|
    double brownian_continuous = 0.0;  ///< max |E_Q[ΔB] - φΔt| (O(Δt²) diagnostic)
    double jump_continuous = 0.0;      ///< max |E_Q[ΔM] - ψγΔt|
    std::size_t nodes_checked = 0;
};

/// Needs δ ≡ 0; nodes of zero Λ*-mass are skipped.
GirsanovResiduals girsanov_check(const ScenarioTree& tree, const MeasureChange& mc);

/// Caller's statement that ξ¹ <= ξ² and f¹ <= f² along (Y², Z², U²).
struct ComparisonCertificate {
    bool terminal_dominated = false;
    bool driver_dominated = false;
    bool barrier_dominated = true;
    bool valid() const { return terminal_dominated && driver_dominated && barrier_dominated; }
};

ComparisonCertificate certify_bsde(const ScenarioTree& tree, const Driver& d1, const Driver& d2,
                                   std::span<const double> xi1, std::span<const double> xi2,
                                   const BsdeSolution& sol2, double tol = 1e-12);

struct ComparisonReport {
    double max_violation = 0.0;   ///< max (Y¹ - Y²)
    std::size_t violations = 0;   ///< nodes with Y¹ > Y² + tol
    std::size_t equal_nodes = 0;  ///< nodes with |Y¹ - Y²| <= tol
    bool strict_checked = false;
    bool strict_ok = true;        ///< equality propagates to every descendant
    bool ok() const { return violations == 0 && strict_ok; }
};

/// Throws InvalidInput when the certificate is missing or incomplete.
ComparisonReport compare_fields(const ScenarioTree& tree, const NodeField& y1, const NodeField& y2, bool strict,
                                const std::optional<ComparisonCertificate>& cert, double tol = 1e-10);
ComparisonReport compare_bsde(const ScenarioTree& tree, const BsdeSolution& sol1, const BsdeSolution& sol2,
                              bool strict, const std::optional<ComparisonCertificate>& cert, double tol = 1e-10);

}  // namespace rbsde
