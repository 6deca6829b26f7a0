#pragma once

#include <filesystem>
#include <string>

#include "upstage/config.hpp"

namespace upstage::testing {

inline std::filesystem::path scenario_dir() { return UPSTAGE_SCENARIO_DIR; }

inline std::filesystem::path demo_path() { return scenario_dir() / "demo.toml"; }

inline ScenarioSource demo_source() { return ScenarioSource::from_file(demo_path()); }

/// Demo scenario with extra TOML appended (e.g. a [[fault]] table).
inline ScenarioSource demo_with(const std::string& extra) {
    return ScenarioSource(read_text_file(demo_path()) + "\n" + extra + "\n", scenario_dir());
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("upstage_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Small two-thruster scenario text without separation devices.
inline std::string minimal_scenario(double duration = 10.0) {
    return R"(
[sim]
dt = 0.01
duration = )" + std::to_string(duration) + R"(

[vehicle]
m_dry = 500.0
J_dry = [400.0, 420.0, 500.0]
spin_rate_deg = [0.0, 0.0, 3.0]

[slosh]
model = "none"

[tank]
m_prop = 50.0
m_gas = 1.0
V_tank = 0.2

[[thruster]]
id = "A"
r = [1.0, 0.0, 0.0]
d = [0.0, 1.0, 0.0]
F_ref = 2.0
p_ref = 1.0e7

[[thruster]]
id = "B"
r = [-1.0, 0.0, 0.0]
d = [0.0, -1.0, 0.0]
F_ref = 2.0
p_ref = 1.0e7
)";
}

}  // namespace upstage::testing
