#pragma once

// Thruster bank with minimum-impulse-bit pulse shaping, pressure-dependent
// thrust, physical fault injection and a main-engine ramp model.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "upstage/math.hpp"

namespace upstage::actuation {

struct NoFault {};
struct StuckClosed {};
struct StuckOpen {};
struct Leak {
    double mdot = 0.0;             // kg/s
    double thrust_fraction = 0.0;  // fraction of the pressure-scaled thrust
};
struct Degraded {
    double eta = 1.0;
};
struct ExtraDelay {
    double seconds = 0.0;
};

using FaultKind = std::variant<NoFault, StuckClosed, StuckOpen, Leak, Degraded, ExtraDelay>;

struct FaultSpec {
    FaultKind kind = NoFault{};
    double t_onset = 0.0;

    bool active(double t) const { return !std::holds_alternative<NoFault>(kind) && t >= t_onset; }
    template <class K>
    const K* active_as(double t) const {
        return active(t) ? std::get_if<K>(&kind) : nullptr;
    }
};

/// Human-readable fault name ("None", "StuckOpen", ...).
std::string fault_name(const FaultKind& kind);

/// Checks the parameter ranges of a fault. Throws ConfigInvalid(field).
void validate_fault(const FaultSpec& fault, const std::string& field);

struct Thruster {
    std::string id;
    Vec3 r = Vec3::Zero();        // position, body, m
    Vec3 d_hat = Vec3::UnitZ();   // thrust direction, body
    double F_ref = 1.0;           // N at p_ref
    double p_ref = 1.0;           // Pa
    double mib = 0.02;            // minimum on-time, s
    double t_delay = 0.0;         // valve delay, s
    double t_ramp = 0.0;          // rise/fall time, s
    double isp = 70.0;            // s
    FaultSpec fault;

    Vec3 unit_torque() const { return r.cross(d_hat); }
};

/// Throws ConfigInvalid when a thruster violates its invariants.
void validate_thruster(const Thruster& thr, const std::string& field);

struct PulseCommand {
    std::string thruster_id;
    double t_start = 0.0;
    double t_on = 0.0;
};

struct Quantized {
    double t_on;
    bool raised;  // a sub-MIB command was lifted to MIB
};

/// Lifts on-times in (0, MIB) up to MIB.
Quantized quantize_on_time(double t_on, double mib);

/// Plateau thrust of a thruster at pressure p and time t (fault scaling included).
double plateau_thrust(const Thruster& thr, double p, double t);

/// Instantaneous thrust of one commanded pulse, N. Trapezoid: zero before
/// t_start + delay, linear rise over t_ramp, flat, linear fall ending at
/// t_start + delay + t_on + t_ramp.
double shape_pulse(const PulseCommand& cmd, const Thruster& thr, double p, double t);

/// Integral over [a, b] of a unit trapezoid that starts rising at t0,
/// has rise/fall time ramp and on-time on (area = on).
double unit_trapezoid_integral(double t0, double ramp, double on, double a, double b);

struct BankOutput {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
    double mdot = 0.0;
    std::size_t firing = 0;  // thrusters producing thrust
};

/// Instantaneous bank output. Throws UnknownThrusterId.
BankOutput bank_forces_torques(std::span<const PulseCommand> commands, std::span<const Thruster> bank,
                               double p, double t);

/// A pulse accepted by the plant; pressure latched at acceptance.
struct ActivePulse {
    std::size_t thruster = 0;
    double t_start = 0.0;
    double t_on = 0.0;
    double p_latched = 0.0;
};

enum class PressureSampling { PerPulse, Continuous };

/// Average bank output over [t0, t1] using exact trapezoid integrals, so the
/// delivered impulse is independent of the plant step.
BankOutput bank_average(std::span<const ActivePulse> pulses, std::span<const Thruster> bank, double p_now,
                        double t0, double t1, PressureSampling sampling = PressureSampling::PerPulse);

struct EngineConfig {
    double F_max = 0.0;                 // N
    double t_rampup = 1.0;              // s
    Vec3 axis = Vec3::UnitZ();          // body thrust direction
    Vec3 offset = Vec3::Zero();         // thrust-line offset from CoM (misalignment), m
    double isp = 450.0;                 // s
};

/// Thrust vector along the engine axis: throttle * F_max * min(1, t / t_rampup).
Vec3 main_engine_thrust(double throttle, double t_since_ignition, const EngineConfig& engine);

}  // namespace upstage::actuation
