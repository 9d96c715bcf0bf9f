#include "rbsde/regulated.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rbsde/error.hpp"

namespace rbsde {

namespace {

// left_0, value_0, right_0, left_1, ... ; consecutive entries are the sub-steps
// (left jump, right jump, continuous move) of the path.
std::vector<double> flatten(const RegulatedPath& p) {
    std::vector<double> out;
    out.reserve(3 * p.size());
    for (const Triple& t : p.triples()) {
        out.push_back(t.left);
        out.push_back(t.value);
        out.push_back(t.right);
    }
    return out;
}

void require_same_grid(const RegulatedPath& a, const RegulatedPath& b) {
    if (a.size() != b.size()) throw InvalidInput("paths live on different grids");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a.grid().time(k) != b.grid().time(k)) throw InvalidInput("paths live on different grids");
}

}  // namespace

RegulatedPath::RegulatedPath(TimeGrid grid, std::vector<Triple> triples)
    : grid_(std::move(grid)), triples_(std::move(triples)) {
    if (triples_.size() != grid_.steps() + 1) throw InvalidInput("need one triple per grid time");
    for (const Triple& t : triples_)
        if (!std::isfinite(t.left) || !std::isfinite(t.value) || !std::isfinite(t.right))
            throw InvalidInput("regulated path must be finite");
    if (triples_.front().left != triples_.front().value) throw InvalidInput("left jump at 0 must vanish");
    if (triples_.back().right != triples_.back().value) throw InvalidInput("right jump at T must vanish");
}

RegulatedPath RegulatedPath::continuous(TimeGrid grid, const std::function<double(double)>& fn) {
    std::vector<Triple> tr;
    for (double t : grid.times()) {
        const double v = fn(t);
        tr.push_back({v, v, v});
    }
    return RegulatedPath(std::move(grid), std::move(tr));
}

Triple limits_at(const RegulatedPath& path, double t) { return path.at(path.grid().index_of(t)); }

std::vector<double> right_jump_times(const RegulatedPath& path, double threshold) {
    if (!(threshold > 0.0)) throw InvalidInput("threshold must be positive");
    std::vector<double> out;
    for (std::size_t k = 0; k < path.size(); ++k)
        if (path.at(k).right_jump() > threshold) out.push_back(path.grid().time(k));
    return out;
}

RhoArray build_rho_arrays(const RegulatedPath& path, std::size_t n_max) {
    if (n_max < 1) throw InvalidInput("n_max must be at least 1");
    RhoArray rho;
    const double horizon = path.grid().horizon();
    for (std::size_t n = 1; n <= n_max; ++n) {
        std::vector<double> level{0.0};
        for (double t : right_jump_times(path, 1.0 / static_cast<double>(n)))
            if (t > 0.0 && t < horizon) level.push_back(t);
        level.push_back(horizon);
        rho.push_back(std::move(level));
    }
    return rho;
}

bool rho_nested(const RhoArray& rho) {
    for (std::size_t n = 1; n < rho.size(); ++n)
        if (!std::includes(rho[n].begin(), rho[n].end(), rho[n - 1].begin(), rho[n - 1].end())) return false;
    return true;
}

Barrier::Barrier(const ScenarioTree& tree, const std::function<Triple(const NodeState&)>& fn) {
    nodes_.resize(tree.layer_count());
    const std::size_t last = tree.steps();
    for (std::size_t k = 0; k < tree.layer_count(); ++k) {
        nodes_[k].resize(tree.layer_size(k));
        for (std::size_t i = 0; i < tree.layer_size(k); ++i) {
            Triple t = fn(tree.state(k, i));
            if (!std::isfinite(t.left) || !std::isfinite(t.value) || !std::isfinite(t.right))
                throw InvalidInput("barrier must be finite");
            if (k == 0) t.left = t.value;
            if (k == last) t.right = t.value;
            nodes_[k][i] = t;
        }
    }
}

Barrier::Barrier(const ScenarioTree& tree, const RegulatedPath& path)
    : Barrier(tree, [&](const NodeState& s) { return path.at(s.layer); }) {
    if (path.size() != tree.layer_count()) throw InvalidInput("barrier path does not match the tree grid");
}

Barrier Barrier::constant(const ScenarioTree& tree, double c) {
    return Barrier(tree, [c](const NodeState&) { return Triple{c, c, c}; });
}

Barrier Barrier::negated() const {
    Barrier out = *this;
    for (auto& layer : out.nodes_)
        for (auto& t : layer) t = -t;
    return out;
}

Barrier Barrier::shifted(double c) const {
    Barrier out = *this;
    for (auto& layer : out.nodes_)
        for (auto& t : layer) {
            t.left += c;
            t.value += c;
            t.right += c;
        }
    return out;
}

LayerValues Barrier::values(std::size_t k) const {
    LayerValues v(nodes_[k].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = nodes_[k][i].value;
    return v;
}

NodeField Barrier::value_field() const {
    NodeField f(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) f[k] = values(k);
    return f;
}

bool rho_active(const Barrier& barrier, std::size_t k, std::size_t i, double n) {
    return barrier.at(k, i).right_jump() > 1.0 / n;
}

RhoArray build_rho_arrays(const ScenarioTree& tree, const Barrier& barrier, std::size_t n_max) {
    if (n_max < 1) throw InvalidInput("n_max must be at least 1");
    std::vector<double> max_jump(tree.layer_count(), 0.0);
    for (std::size_t k = 0; k < tree.layer_count(); ++k)
        for (std::size_t i = 0; i < tree.layer_size(k); ++i)
            max_jump[k] = std::max(max_jump[k], barrier.at(k, i).right_jump());
    RhoArray rho;
    for (std::size_t n = 1; n <= n_max; ++n) {
        std::vector<double> level{0.0};
        for (std::size_t k = 1; k < tree.steps(); ++k)
            if (max_jump[k] > 1.0 / static_cast<double>(n)) level.push_back(tree.grid().time(k));
        level.push_back(tree.grid().horizon());
        rho.push_back(std::move(level));
    }
    return rho;
}

std::vector<Triple> FVDecomposition::reconstruct() const {
    std::vector<Triple> out(continuous.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double value = continuous[k] + left_jumps[k] + right_jumps[k];
        const double left = k == 0 ? value : value - (left_jumps[k] - left_jumps[k - 1]);
        out[k] = {left, value, value + right_jump_at[k]};
    }
    return out;
}

FVDecomposition decompose_fv(std::span<const Triple> k) {
    if (k.empty()) throw InvalidInput("empty process");
    if (k.front().value != 0.0 || k.front().left != 0.0) throw InvalidInput("K must start at 0");
    const double tol = 1e-12;
    FVDecomposition d;
    const std::size_t n = k.size();
    d.continuous.assign(n, 0.0);
    d.left_jumps.assign(n, 0.0);
    d.right_jumps.assign(n, 0.0);
    d.rcll.assign(n, 0.0);
    d.right_jump_at.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double dl = k[j].left_jump();
        const double dr = k[j].right_jump();
        if (dl < -tol || dr < -tol) throw InvalidInput("K must be non-decreasing");
        d.right_jump_at[j] = dr;
        if (j == 0) continue;
        const double cont = k[j].left - k[j - 1].right;
        if (cont < -tol) throw InvalidInput("K must be non-decreasing");
        d.continuous[j] = d.continuous[j - 1] + cont;
        d.left_jumps[j] = d.left_jumps[j - 1] + dl;
        d.right_jumps[j] = d.right_jumps[j - 1] + d.right_jump_at[j - 1];
    }
    for (std::size_t j = 0; j < n; ++j) d.rcll[j] = d.continuous[j] + d.left_jumps[j];
    return d;
}

bool is_rusc(const RegulatedPath& path, double tol) {
    for (const Triple& t : path.triples())
        if (t.right_jump() > tol) return false;
    return true;
}

bool is_rusc(const Barrier& barrier, double tol) {
    for (std::size_t k = 0; k < barrier.layer_count(); ++k)
        for (std::size_t i = 0; i < barrier.layer_size(k); ++i)
            if (barrier.at(k, i).right_jump() > tol) return false;
    return true;
}

double integration_by_parts_check(const RegulatedPath& x1, const RegulatedPath& x2) {
    require_same_grid(x1, x2);
    const auto a = flatten(x1);
    const auto b = flatten(x2);
    double rhs = a[0] * b[0];
    double worst = 0.0;
    for (std::size_t j = 1; j < a.size(); ++j) {
        const double da = a[j] - a[j - 1];
        const double db = b[j] - b[j - 1];
        rhs += a[j - 1] * db + b[j - 1] * da + da * db;
        worst = std::max(worst, std::abs(a[j] * b[j] - rhs));
    }
    return worst;
}

double ito_weighted_square_check(const RegulatedPath& y, std::span<const double> A, double beta) {
    if (A.size() != y.size()) throw InvalidInput("weight process does not match the path grid");
    const auto v = flatten(y);
    std::vector<double> e(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) e[j] = std::exp(beta * A[j / 3]);
    double rhs = e[0] * v[0] * v[0];
    double worst = 0.0;
    for (std::size_t j = 1; j < v.size(); ++j) {
        const double dy = v[j] - v[j - 1];
        rhs += v[j - 1] * v[j - 1] * (e[j] - e[j - 1]) + e[j] * (2.0 * v[j - 1] * dy + dy * dy);
        worst = std::max(worst, std::abs(e[j] * v[j] * v[j] - rhs));
    }
    return worst;
}

TanakaResult tanaka_check(const RegulatedPath& y, const std::function<double(double)>& phi,
                          const std::function<double(double)>& phi_prime, double tol) {
    const auto v = flatten(y);
    std::vector<double> l(v.size(), 0.0);
    TanakaResult res;
    double min_inc = 0.0;
    for (std::size_t j = 1; j < v.size(); ++j) {
        const double inc = phi(v[j]) - phi(v[j - 1]) - phi_prime(v[j - 1]) * (v[j] - v[j - 1]);
        l[j] = l[j - 1] + inc;
        min_inc = std::min(min_inc, inc);
    }
    res.local_time.resize(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        res.local_time[k] = {l[3 * k], l[3 * k + 1], l[3 * k + 2]};
        const Triple& t = y.at(k);
        const double expected = phi(t.right) - phi(t.value) - phi_prime(t.value) * t.right_jump();
        res.jump_residual = std::max(res.jump_residual, std::abs(res.local_time[k].right_jump() - expected));
    }
    res.min_increment = min_inc;
    res.monotone = min_inc >= -tol;
    return res;
}

RegulatedPath path_of(const ScenarioTree& tree, const Barrier& field, std::span<const std::size_t> nodes) {
    if (nodes.size() != tree.layer_count()) throw InvalidInput("path must visit every layer");
    std::vector<Triple> tr;
    for (std::size_t k = 0; k < nodes.size(); ++k) tr.push_back(field.at(k, nodes[k]));
    return RegulatedPath(tree.grid(), std::move(tr));
}

}  // namespace rbsde
