#pragma once

#include <cstddef>
#include <functional>

#include "rbsde/tree.hpp"

namespace rbsde::detail {

/// Exact one-step representation at node (k, i) from the next-layer values.
struct LocalSystem {
    double mean = 0.0;
    double z = 0.0;
    double u = 0.0;
};

LocalSystem local_system(const ScenarioTree& tree, std::size_t k, std::size_t i, const LayerValues& next);

/// Root of y = map(y) where map has Lipschitz constant < 1: Picard to 1e-12
/// (at most 50 sweeps), then bracketing bisection.
double fixed_point(const std::function<double(double)>& map, double start, std::size_t* iterations = nullptr);

/// Worst branch defect |Y_{k+1}(b) - (y_plus - fh - a1 + zΔB + uΔM)|.
double branch_residual(const ScenarioTree& tree, std::size_t k, std::size_t i, const LayerValues& next,
                       double y_plus, double fh, double a1, double z, double u);

}  // namespace rbsde::detail
