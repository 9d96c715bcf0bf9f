#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rbsde {

/// Right-continuous piecewise-constant function of time:
/// value(t) = values[i] for breaks[i] <= t < breaks[i+1].
class StepFunction {
public:
    StepFunction() : StepFunction(0.0) {}
    StepFunction(double constant);  // NOLINT(google-explicit-constructor)
    StepFunction(std::vector<double> breaks, std::vector<double> values);

    double operator()(double t) const;

    std::span<const double> breaks() const { return breaks_; }
    std::span<const double> values() const { return values_; }
    double min_value() const;
    double max_abs() const;

private:
    std::vector<double> breaks_;
    std::vector<double> values_;
};

/// Strictly increasing times 0 = t_0 < ... < t_N = T.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times);

    double horizon() const { return times_.back(); }
    std::size_t steps() const { return times_.size() - 1; }
    double time(std::size_t k) const { return times_[k]; }
    double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
    std::span<const double> times() const { return times_; }

    /// Index of `t` on the grid; throws InvalidInput when `t` is off-grid.
    std::size_t index_of(double t) const;
    bool contains(double t) const;

private:
    std::vector<double> times_;
};

/// Uniform N-step grid on [0, T] refined so that every mandatory time is a grid
/// point. Times closer than 1e-12*T to an existing point are merged into it.
TimeGrid build_grid(double horizon, std::size_t steps, std::span<const double> mandatory = {});

}  // namespace rbsde
