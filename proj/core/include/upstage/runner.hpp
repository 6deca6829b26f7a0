#pragma once

// Closed-loop execution: the plant side driven through the lockstep
// scheduler against an in-process or remote flight software.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "upstage/config.hpp"
#include "upstage/pil.hpp"
#include "upstage/sim.hpp"
#include "upstage/trace.hpp"

namespace upstage {

struct RunMetrics {
    double pulses = 0.0;
    double max_nutation = 0.0;        // rad, after the settle time
    double max_att_err = 0.0;         // rad
    double propellant_consumed = 0.0; // kg
    double final_time = 0.0;          // s
};

enum class RunStatus { Ok, Diverged, Failed };

const char* status_name(RunStatus s);

struct RunResult {
    Trace trace;
    sim::EventLog events;
    RunMetrics metrics;
    RunStatus status = RunStatus::Ok;
    std::string error;
    std::uint64_t ticks = 0;
};

struct DriveHooks {
    /// Before each sensor frame is built. Return false to stop the run.
    std::function<bool(sim::PlantSide&)> before_tick;
    /// After each tick has been integrated.
    std::function<void(sim::PlantSide&)> after_tick;
    std::function<void(const std::vector<double>&)> on_row;
};

/// Drives the plant against a link until the configured duration elapses.
/// NumericalDivergence ends the run with status Diverged; link errors
/// propagate.
RunResult drive(const Scenario& scenario, std::uint64_t seed, pil::FswLink& link, const DriveHooks& hooks = {});

/// In-process closed loop: FSW and plant in this process, frames through the codec.
RunResult run_in_process(const Scenario& scenario);

RunMetrics compute_metrics(const Trace& trace, const Scenario& scenario);

/// Writes trace.csv, events.csv and summary.json into dir.
void write_artifacts(const RunResult& result, const Scenario& scenario, const std::filesystem::path& dir);

fsw::FlightSoftware make_flight_software(const Scenario& scenario);

/// Flight-software side log: one row per served frame.
void write_fsw_log_header(std::ostream& os);
void write_fsw_log_row(std::ostream& os, const fsw::SensorFrame& frame, const fsw::FlightSoftware& fsw);

struct EquivalenceResult {
    double max_abs_diff = 0.0;
    std::string worst_signal;
    std::size_t rows = 0;
    RunResult in_process;
    RunResult remote;
};

/// Runs the scenario twice: in-process, and against a flight software in a
/// forked child process connected over TCP on 127.0.0.1. fsw_scenario
/// configures the child (defaults to the same scenario).
EquivalenceResult run_equivalence(const Scenario& scenario, std::optional<Scenario> fsw_scenario = std::nullopt);

/// Max |a - b| over all shared cells; NaN-safe (identical NaNs count as 0).
double max_trace_difference(const Trace& a, const Trace& b, std::string* worst_signal = nullptr);

}  // namespace upstage
