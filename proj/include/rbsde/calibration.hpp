#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rbsde {

/// A seeded family of random problems: drivers, terminal values and barriers are
/// drawn per case; trees cycle through the listed step counts and intensities.
struct ProblemFamily {
    std::uint64_t seed = 0;
    std::size_t cases = 0;
    std::vector<std::size_t> steps;
    std::vector<double> gammas;
};

/// Family the constants in constants.hpp were fitted on.
ProblemFamily calibration_family();
/// Disjoint seeds, grids and intensities, for checking the frozen constants.
ProblemFamily holdout_family();

struct RatioSweep {
    std::vector<double> ratios;
    double max_ratio = 0.0;
};

/// lhs / (terminal + driver terms) of the a priori gap estimate, β = 3.
RatioSweep apriori_ratios(const ProblemFamily& family);
/// Solution norm / data norm over penalization levels n = 1, 2, ..., 256, β = 3.
RatioSweep uniform_ratios(const ProblemFamily& family);
/// (Y_σ - E^f_{σ,η^ε}(𝓛_{η^ε})) / ε over the given ε.
RatioSweep epsilon_ratios(const ProblemFamily& family, std::span<const double> eps);

}  // namespace rbsde
