#pragma once

// Plant side of the closed loop: vehicle dynamics, thruster bank,
// separation chains and the gyro model, stepped at the plant rate between
// flight-software ticks. Everything it records derives from plant state and
// the applied actuator frames, so in-process and remote runs match.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "upstage/config.hpp"
#include "upstage/frames.hpp"
#include "upstage/trace.hpp"

namespace upstage::sim {

struct Event {
    double t = 0.0;
    std::string kind;    // transition, release, fault, flag_on, flag_off, operator, link, error
    std::string detail;

    bool operator==(const Event&) const = default;
};

class EventLog {
public:
    void add(double t, std::string kind, std::string detail);
    const std::vector<Event>& events() const { return events_; }
    void write_csv(std::ostream& os) const;

private:
    std::vector<Event> events_;
};

/// Packed flag word written to the trace "flags" column.
namespace flag_bits {
inline constexpr unsigned kInfeasible = 0;
inline constexpr unsigned kCovarianceReset = 1;
inline constexpr unsigned kTickGap = 2;
inline constexpr unsigned kMibQuantized = 3;
inline constexpr unsigned kLinkTimeout = 4;
inline constexpr unsigned kFireWithoutArm = 5;
inline constexpr unsigned kUserShift = 8;
}  // namespace flag_bits

/// Standard normal draws from a 64-bit Mersenne Twister, Box-Muller form.
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
    double uniform();  // [0, 1)
    double normal();

private:
    std::mt19937_64 rng_;
    std::optional<double> spare_;
};

class PlantSide {
public:
    PlantSide(const Scenario& scenario, std::uint64_t seed);

    std::uint64_t tick() const { return tick_; }
    std::uint64_t total_ticks() const { return total_ticks_; }
    bool done() const { return tick_ >= total_ticks_; }
    double t() const { return state_.t; }

    /// Sensor frame for the current tick.
    fsw::SensorFrame sense();

    /// Applies the actuator frame for the current tick and integrates one
    /// flight-software period. Throws NumericalDivergence.
    void advance(const fsw::ActuatorFrame& applied);

    // Link and operator inputs, reported in the next sensor frame.
    void note_link_timeout() { link_timeout_ = true; }
    void queue_goto(std::size_t state_index);
    void queue_rate(const Vec3& rate);
    /// Returns false for an unknown thruster id.
    bool inject_fault(const std::string& thruster_id, const actuation::FaultKind& kind);

    const plant::VehicleState& state() const { return state_; }
    const Trace& trace() const { return trace_; }
    EventLog& events() { return events_; }
    const EventLog& events() const { return events_; }
    const seq::SequenceProgram& program() const { return program_; }
    std::uint64_t pulses() const { return pulses_; }
    const std::vector<std::string>& active_flags() const { return flag_names_active_; }
    Vec3 gyro_bias() const { return bias_; }
    /// Sequencer state reported by the last applied frame.
    std::optional<unsigned> current_state() const { return last_state_; }
    /// "id:Kind" for every thruster fault past its onset.
    std::vector<std::string> active_faults() const;

    /// Called with each recorded trace row.
    std::function<void(const std::vector<double>&)> on_row;

private:
    void plant_step(double h);
    void step_chains(double t);
    void record_row();
    void update_flags(std::uint32_t flags);
    void check_fault_onsets(double t0, double t1);

    Scenario sc_;
    seq::SequenceProgram program_;
    std::vector<actuation::Thruster> bank_;
    plant::VehicleState state_;
    std::vector<separation::ChainState> chains_;
    std::vector<actuation::ActivePulse> active_;
    Gaussian noise_;
    Vec3 bias_ = Vec3::Zero();
    Vec3 h0_hat_ = Vec3::UnitZ();

    std::uint64_t tick_ = 0;
    std::uint64_t total_ticks_ = 0;
    std::uint64_t plant_ticks_ = 0;
    unsigned substeps_ = 1;
    double h_ = 0.01;

    fsw::ActuatorFrame applied_;
    std::optional<unsigned> last_state_;
    std::uint32_t flags_ = 0;
    std::vector<std::string> flag_names_active_;
    bool mib_quantized_ = false;
    bool link_timeout_ = false;
    bool fire_without_arm_ = false;
    std::optional<std::size_t> pending_goto_;
    std::optional<Vec3> pending_rate_;
    std::optional<double> ignition_t_;
    std::vector<bool> fault_announced_;
    std::uint64_t pulses_ = 0;
    Vec3 last_torque_ = Vec3::Zero();
    double last_mdot_ = 0.0;
    std::size_t last_firing_ = 0;

    Trace trace_;
    EventLog events_;
};

}  // namespace upstage::sim
