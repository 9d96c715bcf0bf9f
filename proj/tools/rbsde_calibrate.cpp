// Refits the constants in include/rbsde/constants.hpp: prints the worst ratio on
// the calibration family and on the holdout family for each estimate.

#include <cstdio>

#include "rbsde/calibration.hpp"

int main() {
    using namespace rbsde;
    const double eps[] = {0.5, 0.1, 0.01};
    const auto cal = calibration_family();
    const auto hold = holdout_family();
    std::printf("apriori_gap       calibration %.6g  holdout %.6g\n", apriori_ratios(cal).max_ratio,
                apriori_ratios(hold).max_ratio);
    std::printf("uniform_estimate  calibration %.6g  holdout %.6g\n", uniform_ratios(cal).max_ratio,
                uniform_ratios(hold).max_ratio);
    std::printf("epsilon_optimal   calibration %.6g  holdout %.6g\n", epsilon_ratios(cal, eps).max_ratio,
                epsilon_ratios(hold, eps).max_ratio);
    return 0;
}
