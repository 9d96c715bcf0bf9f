#include "rbsde/tree.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "rbsde/error.hpp"
#include "rbsde/parallel.hpp"

namespace rbsde {

namespace {

struct NodeKey {
    std::int64_t brownian;
    std::int32_t default_layer;
    bool operator==(const NodeKey&) const = default;
};

struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(k.brownian) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<std::uint64_t>(k.default_layer + 1) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

// Steps are grouped by length so that Brownian moves recombine exactly on
// refined grids: the node is identified by its net up-moves in every class.
struct StepClasses {
    std::vector<std::size_t> class_of_step;
    std::vector<double> sqrt_dt;       // per class
    std::vector<std::int64_t> stride;  // mixed radix
    std::vector<std::int64_t> offset;  // count per class
};

StepClasses classify_steps(const TimeGrid& grid) {
    StepClasses sc;
    std::vector<double> lengths;
    std::vector<std::int64_t> counts;
    const double tol = 1e-12 * std::max(1.0, grid.horizon());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double dt = grid.dt(k);
        std::size_t c = 0;
        while (c < lengths.size() && std::abs(lengths[c] - dt) > tol) ++c;
        if (c == lengths.size()) {
            lengths.push_back(dt);
            counts.push_back(0);
        }
        ++counts[c];
        sc.class_of_step.push_back(c);
    }
    std::int64_t s = 1;
    for (std::size_t c = 0; c < lengths.size(); ++c) {
        sc.sqrt_dt.push_back(std::sqrt(lengths[c]));
        sc.stride.push_back(s);
        sc.offset.push_back(counts[c]);
        s *= 2 * counts[c] + 1;
    }
    return sc;
}

double decode_brownian(const StepClasses& sc, std::int64_t key) {
    double b = 0.0;
    for (std::size_t c = sc.stride.size(); c-- > 0;) {
        const std::int64_t digit = key / sc.stride[c];
        key -= digit * sc.stride[c];
        b += static_cast<double>(digit - sc.offset[c]) * sc.sqrt_dt[c];
    }
    return b;
}

}  // namespace

ScenarioTree::ScenarioTree(TimeGrid grid, IntensityCurve intensity)
    : grid_(std::move(grid)), intensity_(std::move(intensity)) {
    const std::size_t n = grid_.steps();
    step_gamma_.resize(n + 1, 0.0);
    sqrt_dt_.resize(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double g = intensity_(grid_.time(k));
        if (!std::isfinite(g) || g < 0.0) throw InvalidInput("intensity must be finite and non-negative");
        if (g * grid_.dt(k) >= 1.0)
            throw InvalidInput("intensity too large for step " + std::to_string(k) + ": gamma*dt >= 1");
        step_gamma_[k] = g;
        sqrt_dt_[k] = std::sqrt(grid_.dt(k));
    }

    const StepClasses sc = classify_steps(grid_);
    std::int64_t root_key = 0;
    for (std::size_t c = 0; c < sc.stride.size(); ++c) root_key += sc.offset[c] * sc.stride[c];

    layers_.resize(n + 1);
    std::vector<NodeKey> keys{{root_key, -1}};
    layers_[0].push_back(TreeNode{0.0, 1.0, {-1, -1, -1}, -1});

    for (std::size_t k = 0; k < n; ++k) {
        const std::int64_t stride = sc.stride[sc.class_of_step[k]];
        const double pd = step_gamma_[k] * grid_.dt(k);
        std::unordered_map<NodeKey, std::int32_t, NodeKeyHash> index;
        index.reserve(keys.size() * 3);
        std::vector<NodeKey> next_keys;
        auto& next = layers_[k + 1];
        auto child_of = [&](const NodeKey& key) {
            auto [it, inserted] = index.emplace(key, static_cast<std::int32_t>(next_keys.size()));
            if (inserted) {
                next_keys.push_back(key);
                next.push_back(TreeNode{decode_brownian(sc, key.brownian), 0.0, {-1, -1, -1}, key.default_layer});
            }
            return it->second;
        };
        for (std::size_t i = 0; i < keys.size(); ++i) {
            TreeNode& node = layers_[k][i];
            const NodeKey key = keys[i];
            const bool is_alive = key.default_layer < 0;
            const bool three = is_alive && pd > 0.0;
            const double p_move = three ? 0.5 * (1.0 - pd) : 0.5;
            node.child[0] = child_of({key.brownian + stride, key.default_layer});
            node.child[1] = child_of({key.brownian - stride, key.default_layer});
            next[node.child[0]].prob += node.prob * p_move;
            next[node.child[1]].prob += node.prob * p_move;
            if (three) {
                node.child[2] = child_of({key.brownian, static_cast<std::int32_t>(k + 1)});
                next[node.child[2]].prob += node.prob * pd;
            }
        }
        keys = std::move(next_keys);
    }
}

std::size_t ScenarioTree::node_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) total += layer.size();
    return total;
}

double ScenarioTree::gamma(std::size_t k, std::size_t i) const {
    return alive(k, i) ? step_gamma_[k] : 0.0;
}

NodeState ScenarioTree::state(std::size_t k, std::size_t i) const {
    const TreeNode& nd = layers_[k][i];
    NodeState s;
    s.layer = k;
    s.index = i;
    s.t = grid_.time(k);
    s.b = nd.b;
    s.alive = nd.default_layer < 0;
    s.default_layer = nd.default_layer;
    s.default_time = s.alive ? 0.0 : grid_.time(static_cast<std::size_t>(nd.default_layer));
    s.gamma = s.alive ? step_gamma_[k] : 0.0;
    return s;
}

BranchSet ScenarioTree::branches(std::size_t k, std::size_t i) const {
    BranchSet set;
    if (k >= steps()) return set;
    const TreeNode& nd = layers_[k][i];
    const double sq = sqrt_dt_[k];
    const bool is_alive = nd.default_layer < 0;
    const double pd = is_alive ? step_gamma_[k] * grid_.dt(k) : 0.0;
    const double p_move = nd.child[2] >= 0 ? 0.5 * (1.0 - pd) : 0.5;
    // ΔM = ΔH - 1{alive} γ Δt on every branch
    const double comp = is_alive ? -pd : 0.0;
    set.items[0] = Branch{nd.child[0], BranchKind::Up, p_move, sq, comp};
    set.items[1] = Branch{nd.child[1], BranchKind::Down, p_move, -sq, comp};
    set.count = 2;
    if (nd.child[2] >= 0) {
        set.items[2] = Branch{nd.child[2], BranchKind::Default, pd, 0.0, 1.0 + comp};
        set.count = 3;
    }
    return set;
}

NodeField ScenarioTree::make_field(double init) const {
    NodeField f(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) f[k].assign(layers_[k].size(), init);
    return f;
}

NodeField ScenarioTree::make_field(const std::function<double(const NodeState&)>& fn) const {
    NodeField f(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) f[k] = make_layer(k, fn);
    return f;
}

LayerValues ScenarioTree::make_layer(std::size_t k, const std::function<double(const NodeState&)>& fn) const {
    LayerValues v(layers_[k].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(state(k, i));
    return v;
}

ScenarioTree build_tree(const TimeGrid& grid, const IntensityCurve& intensity) {
    if (intensity.min_value() < 0.0) throw InvalidInput("intensity must be non-negative");
    return ScenarioTree(grid, intensity);
}

LayerValues conditional_expectation(const ScenarioTree& tree, std::size_t k, std::span<const double> next) {
    if (k >= tree.steps()) throw InvalidInput("conditional expectation needs k < N");
    if (next.size() != tree.layer_size(k + 1)) throw InvalidInput("values do not match layer size");
    LayerValues out(tree.layer_size(k), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (const Branch& br : tree.branches(k, i)) acc += br.prob * next[static_cast<std::size_t>(br.child)];
        out[i] = acc;
    }
    return out;
}

double default_probability(const ScenarioTree& tree, double t) {
    const std::size_t k = tree.grid().index_of(t);
    double p = 0.0;
    for (std::size_t i = 0; i < tree.layer_size(k); ++i)
        if (!tree.alive(k, i)) p += tree.prob(k, i);
    return p;
}

std::vector<double> weight_process(const TimeGrid& grid, std::span<const double> alpha_squared) {
    if (alpha_squared.size() != grid.steps()) throw InvalidInput("need one alpha^2 per grid step");
    std::vector<double> a(grid.steps() + 1, 0.0);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        if (!(alpha_squared[k] > 0.0) || !std::isfinite(alpha_squared[k]))
            throw InvalidInput("alpha^2 must be positive and finite");
        a[k + 1] = a[k] + alpha_squared[k] * grid.dt(k);
    }
    return a;
}

NodeField reachable_mass(const ScenarioTree& tree, std::size_t k0, std::size_t i0) {
    NodeField mass = tree.make_field(0.0);
    mass[k0][i0] = 1.0;
    for (std::size_t k = k0; k < tree.steps(); ++k) {
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double m = mass[k][i];
            if (m == 0.0) continue;
            for (const Branch& br : tree.branches(k, i)) mass[k + 1][static_cast<std::size_t>(br.child)] += m * br.prob;
        }
    }
    return mass;
}

double expected_path_max(const ScenarioTree& tree, const NodeField& w, std::size_t k0, std::size_t i0) {
    // Forward propagation of the law of the running maximum, per node, as sorted
    // (max, mass) lists. Entries at or below the child's value collapse into one.
    using Law = std::vector<std::pair<double, double>>;
    std::vector<Law> cur(tree.layer_size(k0));
    cur[i0].emplace_back(w[k0][i0], 1.0);
    for (std::size_t k = k0; k < tree.steps(); ++k) {
        const std::size_t next_size = tree.layer_size(k + 1);
        std::vector<std::vector<std::pair<std::size_t, double>>> parents(next_size);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (cur[i].empty()) continue;
            for (const Branch& br : tree.branches(k, i))
                if (br.prob > 0.0) parents[static_cast<std::size_t>(br.child)].emplace_back(i, br.prob);
        }
        std::vector<Law> nxt(next_size);
        parallel_for(next_size, [&](std::size_t c) {
            if (parents[c].empty()) return;
            const double wc = w[k + 1][c];
            double floor_mass = 0.0;
            Law merged;
            for (const auto& [i, p] : parents[c]) {
                const Law& src = cur[i];
                auto it = std::upper_bound(src.begin(), src.end(), wc,
                                           [](double v, const std::pair<double, double>& e) { return v < e.first; });
                for (auto j = src.begin(); j != it; ++j) floor_mass += j->second * p;
                Law tail;
                tail.reserve(merged.size() + static_cast<std::size_t>(src.end() - it));
                auto a = merged.begin();
                for (auto b = it; b != src.end(); ++b) {
                    while (a != merged.end() && a->first < b->first) tail.push_back(*a++);
                    if (a != merged.end() && a->first == b->first) tail.emplace_back(b->first, (a++)->second + b->second * p);
                    else tail.emplace_back(b->first, b->second * p);
                }
                tail.insert(tail.end(), a, merged.end());
                merged.swap(tail);
            }
            Law& dst = nxt[c];
            dst.reserve(merged.size() + 1);
            if (floor_mass > 0.0) dst.emplace_back(wc, floor_mass);
            dst.insert(dst.end(), merged.begin(), merged.end());
        });
        cur = std::move(nxt);
    }
    double e = 0.0;
    for (const Law& law : cur)
        for (const auto& [m, p] : law) e += m * p;
    return e;
}

WeightedNorms weighted_norms(const ScenarioTree& tree, const NodeField& x, double beta, std::span<const double> A,
                             bool with_sup) {
    if (beta < 0.0) throw InvalidInput("beta must be non-negative");
    if (x.size() != tree.layer_count() || A.size() != tree.layer_count())
        throw InvalidInput("process or weight does not match the tree");
    NodeField w = tree.make_field(0.0);
    WeightedNorms out;
    for (std::size_t k = 0; k < tree.layer_count(); ++k) {
        if (x[k].size() != tree.layer_size(k)) throw InvalidInput("process does not match layer size");
        const double e = std::exp(beta * A[k]);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) w[k][i] = e * x[k][i] * x[k][i];
        if (k == tree.steps()) break;
        const double dt = tree.grid().dt(k);
        const double alpha2 = (A[k + 1] - A[k]) / dt;
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            const double p = tree.prob(k, i) * w[k][i] * dt;
            out.h2 += p;
            out.s2_alpha += p * alpha2;
            out.m2 += p * tree.gamma(k, i);
        }
    }
    if (with_sup) out.s2 = expected_path_max(tree, w);
    return out;
}

std::vector<std::size_t> sample_path(const ScenarioTree& tree, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::size_t> path{0};
    for (std::size_t k = 0; k < tree.steps(); ++k) {
        const BranchSet set = tree.branches(k, path.back());
        double u = uni(rng);
        std::size_t pick = set.size() - 1;
        for (std::size_t b = 0; b < set.size(); ++b) {
            if (u < set[b].prob) {
                pick = b;
                break;
            }
            u -= set[b].prob;
        }
        path.push_back(static_cast<std::size_t>(set[pick].child));
    }
    return path;
}

double expected_time_integral(const ScenarioTree& tree, const NodeField& w) {
    double acc = 0.0;
    for (std::size_t k = 0; k < tree.steps(); ++k) {
        const double dt = tree.grid().dt(k);
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) acc += tree.prob(k, i) * w[k][i] * dt;
    }
    return acc;
}

}  // namespace rbsde
