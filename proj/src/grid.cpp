#include "rbsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbsde/error.hpp"

namespace rbsde {

StepFunction::StepFunction(double constant) : breaks_{0.0}, values_{constant} {
    if (!std::isfinite(constant)) throw InvalidInput("step function value must be finite");
}

StepFunction::StepFunction(std::vector<double> breaks, std::vector<double> values)
    : breaks_(std::move(breaks)), values_(std::move(values)) {
    if (breaks_.empty() || breaks_.size() != values_.size())
        throw InvalidInput("step function needs one value per break");
    if (breaks_.front() != 0.0) throw InvalidInput("step function breaks must start at 0");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
        if (!(breaks_[i] > breaks_[i - 1])) throw InvalidInput("step function breaks must increase");
    for (double v : values_)
        if (!std::isfinite(v)) throw InvalidInput("step function value must be finite");
}

double StepFunction::operator()(double t) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    if (it == breaks_.begin()) return values_.front();
    return values_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
}

double StepFunction::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

double StepFunction::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw InvalidInput("time grid needs at least two points");
    if (times_.front() != 0.0) throw InvalidInput("time grid must start at 0");
    for (std::size_t k = 1; k < times_.size(); ++k) {
        if (!std::isfinite(times_[k]) || !(times_[k] > times_[k - 1]))
            throw InvalidInput("time grid must be finite and strictly increasing");
    }
}

std::size_t TimeGrid::index_of(double t) const {
    const double tol = 1e-12 * std::max(1.0, horizon());
    auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
    if (it == times_.end() || std::abs(*it - t) > tol)
        throw InvalidInput("time " + std::to_string(t) + " is not a grid point");
    return static_cast<std::size_t>(it - times_.begin());
}

bool TimeGrid::contains(double t) const {
    const double tol = 1e-12 * std::max(1.0, horizon());
    auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
    return it != times_.end() && std::abs(*it - t) <= tol;
}

TimeGrid build_grid(double horizon, std::size_t steps, std::span<const double> mandatory) {
    if (!std::isfinite(horizon) || horizon <= 0.0) throw InvalidInput("horizon must be finite and positive");
    if (steps < 1) throw InvalidInput("grid needs at least one step");
    const double tol = 1e-12 * horizon;

    std::vector<double> times(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) times[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    times.back() = horizon;

    for (double m : mandatory) {
        if (!std::isfinite(m) || m < -tol || m > horizon + tol)
            throw InvalidInput("mandatory time " + std::to_string(m) + " outside [0, T]");
        auto it = std::lower_bound(times.begin(), times.end(), m - tol);
        if (it != times.end() && std::abs(*it - m) <= tol) continue;
        times.insert(it, m);
    }
    return TimeGrid(std::move(times));
}

}  // namespace rbsde
