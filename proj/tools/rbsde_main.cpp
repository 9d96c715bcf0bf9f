// rbsde: batch front-end.
//   rbsde run <config.json> [--out DIR] [--seed INT]
//   rbsde fixtures [--write DIR]
//   rbsde suite [--fast] [--out DIR] [--seed INT]
// Exit codes: 0 all assertions passed, 1 assertion failure, 2 bad config, 3 solver refusal.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rbsde/experiment.hpp"

namespace {

using rbsde::RunReport;

void print_report(const RunReport& r) {
    for (const auto& c : r.properties)
        std::printf("%s  %-48s %.6g <= %.6g\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.bound);
    std::printf("%s: %s (%zu properties)\n", r.name.c_str(), r.passed() ? "passed" : "FAILED", r.properties.size());
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const rbsde::SolverRefusal& e) {
        std::fprintf(stderr, "refused: %s (needs N >= %zu)\n", e.what(), e.required_steps());
        return 3;
    } catch (const rbsde::InvalidInput& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reflected BSDE laboratory on exact scenario trees"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "rbsde-out", write_dir;
    std::optional<std::uint64_t> seed;
    bool fast = false;

    auto* run = app.add_subcommand("run", "run one experiment config");
    run->add_option("config", config_path, "config file (JSON)")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "seed for randomized property trials");

    auto* fixtures = app.add_subcommand("fixtures", "list bundled fixtures");
    fixtures->add_option("--write", write_dir, "also write each fixture config to DIR/<name>.json");

    auto* suite = app.add_subcommand("suite", "run every bundled fixture in suite mode");
    suite->add_flag("--fast", fast, "coarser grids and fewer levels");
    suite->add_option("--out", out_dir, "output directory");
    suite->add_option("--seed", seed, "seed for randomized property trials");

    CLI11_PARSE(app, argc, argv);

    if (*run) {
        return guarded([&] {
            std::ifstream in(config_path);
            if (!in) {
                std::fprintf(stderr, "cannot read %s\n", config_path.c_str());
                return 2;
            }
            const nlohmann::json cfg = nlohmann::json::parse(in);
            const RunReport r = rbsde::run_experiment(cfg, seed);
            rbsde::write_report(r, out_dir);
            print_report(r);
            return r.passed() ? 0 : 1;
        });
    }

    if (*fixtures) {
        return guarded([&] {
            for (const auto& name : rbsde::fixture_names()) {
                std::printf("%s\n", name.c_str());
                if (write_dir.empty()) continue;
                std::filesystem::create_directories(write_dir);
                std::ofstream out(std::filesystem::path(write_dir) / (name + ".json"), std::ios::binary);
                out << rbsde::fixture_config(name).dump(2) << '\n';
            }
            return 0;
        });
    }

    return guarded([&] {
        nlohmann::ordered_json summary;
        summary["tool"] = "rbsde";
        summary["version"] = rbsde::kToolVersion;
        summary["fast"] = fast;
        summary["fixtures"] = nlohmann::ordered_json::array();
        nlohmann::ordered_json timing = nlohmann::ordered_json::object();
        bool all = true;
        for (const auto& name : rbsde::fixture_names()) {
            auto cfg = rbsde::fixture_config(name);
            cfg["run"]["mode"] = "suite";
            if (fast) cfg = rbsde::fast_variant(cfg);
            const RunReport r = rbsde::run_experiment(nlohmann::json::parse(cfg.dump()), seed);
            rbsde::write_report(r, std::filesystem::path(out_dir) / name);
            nlohmann::ordered_json failed = nlohmann::ordered_json::array();
            for (const auto& c : r.properties)
                if (!c.pass) failed.push_back(c.name);
            summary["fixtures"].push_back(
                {{"name", name}, {"passed", r.passed()}, {"properties", r.properties.size()}, {"failed", failed}});
            timing[name] = r.wall_seconds;
            all = all && r.passed();
            std::printf("%s  %-20s %zu properties\n", r.passed() ? "PASS" : "FAIL", name.c_str(), r.properties.size());
            for (const auto& f : failed) std::printf("      failed: %s\n", f.get<std::string>().c_str());
        }
        summary["passed"] = all;
        std::ofstream(std::filesystem::path(out_dir) / "suite.json", std::ios::binary) << summary.dump(2) << '\n';
        std::ofstream(std::filesystem::path(out_dir) / "timing.json", std::ios::binary)
            << nlohmann::ordered_json{{"wall_seconds", timing}}.dump(2) << '\n';
        return all ? 0 : 1;
    });
}
