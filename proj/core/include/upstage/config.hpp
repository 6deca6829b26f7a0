#pragma once

// Scenario configuration: a TOML document validated into typed sections.
// Angles and angular rates are degrees in the file and radians inside.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "upstage/actuation.hpp"
#include "upstage/flight_software.hpp"
#include "upstage/monitors.hpp"
#include "upstage/plant.hpp"
#include "upstage/separation.hpp"

namespace upstage {

struct SimConfig {
    double dt = 0.01;         // plant step, s
    double duration = 600.0;  // s
    std::uint64_t seed = 1;
    double settle_time = 60.0;  // s, start of the nutation metric window
};

struct SensorConfig {
    double gyro_bias = 0.0;    // rad/s, per-axis bias drawn uniformly from [-b, b]
    double gyro_noise = 0.0;   // rad/s, white-noise sigma per sample
};

enum class Transport { InProcess, Socket };
enum class OnTimeout { HoldLastCommand, Abort };

struct PilConfig {
    Transport transport = Transport::InProcess;
    unsigned delay = 0;        // ticks
    double timeout = 5.0;      // s
    OnTimeout on_timeout = OnTimeout::HoldLastCommand;
    std::string listen = "127.0.0.1:0";
};

struct TelemetryConfig {
    unsigned decimation = 1;         // trace rows: every n-th plant tick
    unsigned stream_decimation = 1;  // service records: every n-th FSW tick
    std::string listen = "127.0.0.1:0";
};

struct FaultEntry {
    std::string thruster;  // either a thruster id ...
    std::string device;    // ... or a separation device id
    actuation::FaultSpec thruster_fault;
    separation::DeviceFault device_fault;
};

struct Scenario {
    std::filesystem::path base_dir;
    SimConfig sim;
    SensorConfig sensor;
    plant::PlantConfig plant;
    std::vector<actuation::Thruster> thrusters;
    actuation::EngineConfig engine;
    std::vector<separation::SeparationDevice> devices;
    fsw::FswConfig fsw;
    std::string sequence_path;
    std::string sequence_text;
    std::vector<FaultEntry> faults;
    PilConfig pil;
    std::vector<vnv::Monitor> monitors;
    vnv::CampaignConfig campaign;
    TelemetryConfig telemetry;

    std::vector<std::string> device_ids() const;
    std::vector<fsw::ThrusterGeometry> thruster_geometry() const;
    seq::SequenceProgram parse_program() const;
};

/// Raw scenario text plus ordered key=value overrides. Every build() parses
/// from scratch, so overrides never leak between samples.
class ScenarioSource {
public:
    ScenarioSource() = default;
    ScenarioSource(std::string text, std::filesystem::path base_dir);

    static ScenarioSource from_file(const std::filesystem::path& path);

    /// key uses dotted paths with optional [i] indices. value is a TOML
    /// literal; bare words are taken as strings.
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    /// "key=value"
    void set_assignment(const std::string& assignment);

    Scenario build() const;

    const std::string& text() const { return text_; }
    const std::filesystem::path& base_dir() const { return base_dir_; }
    const std::vector<std::pair<std::string, std::string>>& overrides() const { return overrides_; }

private:
    std::string text_;
    std::filesystem::path base_dir_;
    std::vector<std::pair<std::string, std::string>> overrides_;
};

/// Reads and validates a scenario file. Throws ConfigInvalid or IoError.
Scenario load_scenario(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

/// Standalone campaign file: the [campaign] table plus an optional
/// top-level `scenario` path (resolved against the file's directory).
/// Other top-level tables are ignored, so a scenario file also qualifies.
struct CampaignFile {
    vnv::CampaignConfig campaign;
    std::optional<std::filesystem::path> scenario;
};
CampaignFile load_campaign_file(const std::filesystem::path& path);

}  // namespace upstage
