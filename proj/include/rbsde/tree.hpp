#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rbsde/grid.hpp"

namespace rbsde {

/// Deterministic piecewise-constant default intensity γ(t) >= 0.
using IntensityCurve = StepFunction;

/// Node-indexed reals: values[layer][node].
using LayerValues = std::vector<double>;
using NodeField = std::vector<LayerValues>;

/// What a payoff, barrier or driver may observe at a node.
struct NodeState {
    std::size_t layer = 0;
    std::size_t index = 0;
    double t = 0.0;
    double b = 0.0;            ///< Brownian value B_t
    bool alive = true;         ///< H_t = 0
    int default_layer = -1;    ///< first layer with H = 1, -1 while alive
    double default_time = 0.0; ///< grid time of that layer (meaningless while alive)
    double gamma = 0.0;        ///< intensity acting on (t_k, t_{k+1}]; 0 after default
    double h() const { return alive ? 0.0 : 1.0; }
};

enum class BranchKind : std::uint8_t { Up = 0, Down = 1, Default = 2 };

/// One transition out of a node.
struct Branch {
    std::int32_t child;  ///< index in the next layer
    BranchKind kind;
    double prob;         ///< conditional probability
    double db;           ///< Brownian increment
    double dm;           ///< compensated default martingale increment ΔH - 1{alive}γΔt
};

struct BranchSet {
    std::array<Branch, 3> items{};
    std::size_t count = 0;
    const Branch* begin() const { return items.data(); }
    const Branch* end() const { return items.data() + count; }
    std::size_t size() const { return count; }
    const Branch& operator[](std::size_t i) const { return items[i]; }
};

struct TreeNode {
    double b = 0.0;
    double prob = 0.0;  ///< absolute probability of reaching the node
    std::array<std::int32_t, 3> child{-1, -1, -1};  ///< up, down, default
    std::int32_t default_layer = -1;
};

/// Recombining lattice for the filtration generated by a symmetric binomial
/// Brownian motion and a default indicator with deterministic intensity.
///
/// Alive nodes with γ(t_k) > 0 have three branches (up/down with probability
/// (1-γΔt)/2 each, default with γΔt; the default branch carries ΔB = 0).
/// Alive nodes with γ = 0 and all defaulted nodes have two branches. Default
/// is absorbing and the default layer is kept in the node identity.
class ScenarioTree {
public:
    ScenarioTree(TimeGrid grid, IntensityCurve intensity);

    const TimeGrid& grid() const { return grid_; }
    const IntensityCurve& intensity() const { return intensity_; }
    std::size_t steps() const { return grid_.steps(); }
    std::size_t layer_count() const { return layers_.size(); }
    std::size_t layer_size(std::size_t k) const { return layers_[k].size(); }
    std::size_t node_count() const;

    const TreeNode& node(std::size_t k, std::size_t i) const { return layers_[k][i]; }
    double prob(std::size_t k, std::size_t i) const { return layers_[k][i].prob; }
    bool alive(std::size_t k, std::size_t i) const { return layers_[k][i].default_layer < 0; }

    /// γ(t_k) on alive nodes, 0 on defaulted nodes and on the last layer.
    double gamma(std::size_t k, std::size_t i) const;
    double step_gamma(std::size_t k) const { return step_gamma_[k]; }

    NodeState state(std::size_t k, std::size_t i) const;
    BranchSet branches(std::size_t k, std::size_t i) const;

    NodeField make_field(double init = 0.0) const;
    NodeField make_field(const std::function<double(const NodeState&)>& fn) const;
    LayerValues make_layer(std::size_t k, const std::function<double(const NodeState&)>& fn) const;

private:
    TimeGrid grid_;
    IntensityCurve intensity_;
    std::vector<double> step_gamma_;
    std::vector<double> sqrt_dt_;
    std::vector<std::vector<TreeNode>> layers_;
};

/// Builds the tree; throws InvalidInput when γ < 0 or γ(t_k)Δt_k >= 1 on some step.
ScenarioTree build_tree(const TimeGrid& grid, const IntensityCurve& intensity);

/// E[values | node] for every node of layer k, `values` living on layer k+1.
LayerValues conditional_expectation(const ScenarioTree& tree, std::size_t k, std::span<const double> next);

/// P(τ <= t) on the tree; t must be a grid time.
double default_probability(const ScenarioTree& tree, double t);

/// A_0 = 0, A_{k+1} = A_k + α²_k Δt_k; rejects non-positive α².
std::vector<double> weight_process(const TimeGrid& grid, std::span<const double> alpha_squared);

/// Probability of reaching every node from (k0, i0); zero on unreachable nodes
/// and on layers before k0.
NodeField reachable_mass(const ScenarioTree& tree, std::size_t k0, std::size_t i0);

/// E[max_{k >= k0} w_k | node (k0, i0)] where the max runs along paths.
double expected_path_max(const ScenarioTree& tree, const NodeField& w, std::size_t k0 = 0, std::size_t i0 = 0);

/// Weighted norms of a single node process X.
struct WeightedNorms {
    double s2 = 0.0;        ///< E[max_k e^{βA_k} X_k²]
    double s2_alpha = 0.0;  ///< E Σ e^{βA_k} α_k² X_k² Δt_k
    double h2 = 0.0;        ///< E Σ e^{βA_k} X_k² Δt_k
    double m2 = 0.0;        ///< E Σ e^{βA_k} X_k² γ_k Δt_k over alive nodes
};

/// `A` is the weight process on the grid (A_k per layer); α² is recovered as ΔA/Δt.
WeightedNorms weighted_norms(const ScenarioTree& tree, const NodeField& x, double beta, std::span<const double> A,
                             bool with_sup = true);

/// Node index per layer along one path drawn with the tree probabilities.
std::vector<std::size_t> sample_path(const ScenarioTree& tree, std::mt19937_64& rng);

/// E Σ_k over layers 0..N-1 of w_k * Δt_k (probability weighted); handy for integral terms.
double expected_time_integral(const ScenarioTree& tree, const NodeField& w);

}  // namespace rbsde
