#include "step.hpp"

#include <algorithm>
#include <cmath>

namespace rbsde::detail {

LocalSystem local_system(const ScenarioTree& tree, std::size_t k, std::size_t i, const LayerValues& next) {
    const BranchSet set = tree.branches(k, i);
    LocalSystem s;
    for (const Branch& b : set) s.mean += b.prob * next[static_cast<std::size_t>(b.child)];
    const double up = next[static_cast<std::size_t>(set[0].child)];
    const double down = next[static_cast<std::size_t>(set[1].child)];
    s.z = (up - down) / (2.0 * set[0].db);
    if (set.size() == 3) s.u = next[static_cast<std::size_t>(set[2].child)] - 0.5 * (up + down);
    return s;
}

double fixed_point(const std::function<double(double)>& map, double start, std::size_t* iterations) {
    double y = start;
    for (std::size_t it = 1; it <= 50; ++it) {
        const double next = map(y);
        const double step = std::abs(next - y);
        y = next;
        if (step <= 1e-12 * std::max(1.0, std::abs(y))) {
            if (iterations) *iterations = it;
            return y;
        }
    }
    // g(y) = y - map(y) is strictly increasing; bracket the root and bisect.
    auto g = [&](double v) { return v - map(v); };
    double width = std::max(1.0, std::abs(y - start));
    double lo = y - width, hi = y + width;
    for (int j = 0; j < 200 && g(lo) > 0.0; ++j) lo -= (width *= 2.0);
    width = std::max(1.0, std::abs(y - start));
    for (int j = 0; j < 200 && g(hi) < 0.0; ++j) hi += (width *= 2.0);
    for (int j = 0; j < 400 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++j) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? hi : lo) = mid;
    }
    if (iterations) *iterations = 50;
    return 0.5 * (lo + hi);
}

double branch_residual(const ScenarioTree& tree, std::size_t k, std::size_t i, const LayerValues& next,
                       double y_plus, double fh, double a1, double z, double u) {
    double worst = 0.0;
    for (const Branch& b : tree.branches(k, i)) {
        const double model = y_plus - fh - a1 + z * b.db + u * b.dm;
        worst = std::max(worst, std::abs(next[static_cast<std::size_t>(b.child)] - model));
    }
    return worst;
}

}  // namespace rbsde::detail
