#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rbsde/grid.hpp"
#include "rbsde/tree.hpp"

namespace rbsde {

/// (X_{t-}, X_t, X_{t+}) at one grid time.
struct Triple {
    double left = 0.0;
    double value = 0.0;
    double right = 0.0;

    double left_jump() const { return value - left; }
    double right_jump() const { return right - value; }
    Triple operator-() const { return {-left, -value, -right}; }
};

/// Deterministic regulated path sampled on a grid; every grid time carries its
/// left limit, value and right limit. Δ₋X_0 = 0 and Δ₊X_T = 0 are enforced.
class RegulatedPath {
public:
    RegulatedPath(TimeGrid grid, std::vector<Triple> triples);

    /// Continuous path t ↦ fn(t).
    static RegulatedPath continuous(TimeGrid grid, const std::function<double(double)>& fn);

    const TimeGrid& grid() const { return grid_; }
    std::span<const Triple> triples() const { return triples_; }
    const Triple& at(std::size_t k) const { return triples_[k]; }
    std::size_t size() const { return triples_.size(); }

private:
    TimeGrid grid_;
    std::vector<Triple> triples_;
};

Triple limits_at(const RegulatedPath& path, double t);

/// Grid times with Δ₊X > threshold, in increasing order.
std::vector<double> right_jump_times(const RegulatedPath& path, double threshold);

/// levels[n-1] = {0} ∪ {t : Δ₊ζ_t > 1/n} ∪ {T}, sorted.
using RhoArray = std::vector<std::vector<double>>;
RhoArray build_rho_arrays(const RegulatedPath& path, std::size_t n_max);

/// Is every level contained in the next one?
bool rho_nested(const RhoArray& rho);

/// Node-dependent barrier: one triple per tree node.
class Barrier {
public:
    Barrier() = default;
    Barrier(const ScenarioTree& tree, const std::function<Triple(const NodeState&)>& fn);
    /// Same triples on every node of a layer.
    Barrier(const ScenarioTree& tree, const RegulatedPath& path);
    static Barrier constant(const ScenarioTree& tree, double c);

    const Triple& at(std::size_t k, std::size_t i) const { return nodes_[k][i]; }
    std::size_t layer_count() const { return nodes_.size(); }
    std::size_t layer_size(std::size_t k) const { return nodes_[k].size(); }
    Barrier negated() const;
    /// Pointwise shift of all three components.
    Barrier shifted(double c) const;

    LayerValues values(std::size_t k) const;
    NodeField value_field() const;

private:
    std::vector<std::vector<Triple>> nodes_;
};

/// Union over nodes of the layers where Δ₊ζ > 1/n, as grid times (plus 0 and T).
RhoArray build_rho_arrays(const ScenarioTree& tree, const Barrier& barrier, std::size_t n_max);

/// True when the right jump at the node exceeds 1/n (ρ-activation at level n).
bool rho_active(const Barrier& barrier, std::size_t k, std::size_t i, double n);

/// Parts of a non-decreasing regulated process K with K_0 = 0, sampled at grid
/// times (values at t_k, i.e. before the right jump at t_k).
struct FVDecomposition {
    std::vector<double> continuous;   ///< K^c
    std::vector<double> left_jumps;   ///< K^d_t = Σ_{s<=t} Δ₋K_s
    std::vector<double> right_jumps;  ///< K^g_t = Σ_{s<t} Δ₊K_s
    std::vector<double> rcll;         ///< K* = K^c + K^d
    std::vector<double> right_jump_at;  ///< Δ₊K_{t_k}

    /// Rebuilds the triples of K from the parts.
    std::vector<Triple> reconstruct() const;
};

FVDecomposition decompose_fv(std::span<const Triple> k);

bool is_rusc(const RegulatedPath& path, double tol = 0.0);
bool is_rusc(const Barrier& barrier, double tol = 0.0);

/// Discrete integration by parts for two regulated paths on the same grid:
/// max_k |X¹X²_k - (X¹X²_0 + Σ X¹_- dX² + Σ X²_- dX¹ + Σ dX¹dX²)| over all
/// sub-steps (continuous, left jump, right jump).
double integration_by_parts_check(const RegulatedPath& x1, const RegulatedPath& x2);

/// Residual of e^{βA}Y² = Y_0² + ∫Y²d(e^{βA}) + Σ e^{βA}(2Y_- dY + (dY)²) along a
/// path; A is continuous, one value per grid time.
double ito_weighted_square_check(const RegulatedPath& y, std::span<const double> A, double beta);

struct TanakaResult {
    std::vector<Triple> local_time;  ///< 𝓛 as a regulated path
    double min_increment = 0.0;      ///< smallest sub-step increment of 𝓛
    bool monotone = true;            ///< min_increment >= -tol
    double jump_residual = 0.0;      ///< max |Δ₊𝓛 - (Φ(Y_+) - Φ(Y) - Φ'(Y)Δ₊Y)|
};

/// 𝓛_t = Φ(Y_t) - Φ(Y_0) - Σ Φ'(Y_-)dY over all sub-steps; Φ' is the left derivative.
TanakaResult tanaka_check(const RegulatedPath& y, const std::function<double(double)>& phi,
                          const std::function<double(double)>& phi_prime, double tol = 1e-12);

/// Triples seen along one tree path (node index per layer) of a node field of triples.
RegulatedPath path_of(const ScenarioTree& tree, const Barrier& field, std::span<const std::size_t> nodes);

}  // namespace rbsde
