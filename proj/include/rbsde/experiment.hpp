#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbsde/error.hpp"

namespace rbsde {

/// Config that does not match docs/config.schema.json (exit code 2).
class SchemaError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

struct Table {
    std::string name;  ///< file stem of the CSV
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// One asserted property: passes when value <= bound.
struct PropertyCheck {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    bool pass = false;
};

struct RunReport {
    std::string name;
    std::string mode;
    std::uint64_t seed = 0;
    nlohmann::ordered_json config;
    nlohmann::ordered_json scalars = nlohmann::ordered_json::object();
    std::vector<Table> tables;
    std::vector<PropertyCheck> properties;
    double wall_seconds = 0.0;  ///< kept out of report.json

    bool passed() const;
    void check(std::string name, double value, double bound);
};

inline constexpr const char* kToolVersion = "1.0.0";

std::vector<std::string> fixture_names();
/// Config of a bundled fixture; throws SchemaError for unknown names.
nlohmann::ordered_json fixture_config(const std::string& name);

/// Throws SchemaError with a JSON-pointer style location on the first problem.
void validate_config(const nlohmann::json& config);

/// Runs the config's run section. Seeds only drive randomized property trials.
/// Throws SchemaError, SolverRefusal or InvalidInput.
RunReport run_experiment(const nlohmann::json& config, std::optional<std::uint64_t> seed = std::nullopt);

/// Smaller grids and level lists for quick runs.
nlohmann::ordered_json fast_variant(const nlohmann::ordered_json& config);

/// report.json plus one CSV per table; timing.json holds the wall time.
void write_report(const RunReport& report, const std::filesystem::path& dir);

/// %.17g, with "nan"/"inf" spelled out.
std::string format_number(double v);

}  // namespace rbsde
