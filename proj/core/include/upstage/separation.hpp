#pragma once

// Payload separation: relay command chain with injectable failures,
// spring energy balance and tip-off.

#include <optional>
#include <string>
#include <variant>

#include "upstage/math.hpp"

namespace upstage::separation {

struct NoFault {};
struct NoFire {};
struct LateFire {
    double extra = 0.0;  // s
};
struct PartialSpring {
    double fraction = 1.0;  // (0, 1]
};
using DeviceFault = std::variant<NoFault, NoFire, LateFire, PartialSpring>;

struct SeparationDevice {
    std::string payload_id;
    double m_pl = 0.0;
    Mat3 J_pl = Mat3::Zero();          // payload inertia contribution about stage axes
    double k_spring = 0.0;             // N/m
    double stroke = 0.0;               // m
    Eigen::Vector2d lateral_offset = Eigen::Vector2d::Zero();  // m, in the plane normal to the axis
    double delay_arm = 0.0;            // arm command -> ARMED, s
    double delay_release = 0.0;        // fire command -> release, s
    Vec3 axis = Vec3::UnitZ();         // separation axis, body
    DeviceFault fault = NoFault{};

    double spring_fraction() const;
    /// Offset of the spring line of action, body frame.
    Vec3 offset_vector() const;
};

/// Throws ConfigInvalid(field...) when a device violates its invariants.
void validate_device(const SeparationDevice& device, const std::string& field);

enum class Phase : unsigned { Idle = 0, Armed = 1, Fired = 2, Released = 3 };

const char* phase_name(Phase phase);

struct ChainState {
    Phase phase = Phase::Idle;
    double t_phase_entry = 0.0;
    std::optional<double> arm_due;      // ARMED time once arm was accepted
    std::optional<double> release_due;  // release time once fire was accepted
};

struct ChainCommands {
    bool arm = false;
    bool fire = false;
};

struct ReleaseEvent {
    double t = 0.0;
    std::string payload_id;
    Vec3 dv = Vec3::Zero();
    Vec3 dw = Vec3::Zero();
};

struct ChainStepResult {
    ChainState state;
    bool released = false;           // true on the step the chain reaches RELEASED
    bool fire_without_arm = false;   // fire commanded while idle: rejected
};

/// Advances the relay chain to time t. Commands are levels held by the
/// flight software; fire is only honoured once the chain is ARMED.
ChainStepResult chain_step(const ChainState& chain, const SeparationDevice& device, const ChainCommands& commands,
                           double t);

struct ReleaseImpulse {
    Vec3 dv_stage = Vec3::Zero();
    Vec3 dw = Vec3::Zero();
    double energy = 0.0;          // J delivered by the spring
    double reduced_mass = 0.0;    // kg
    double v_rel = 0.0;           // m/s
};

/// Impulsive release parameters from the spring energy balance.
ReleaseImpulse release_impulse(const SeparationDevice& device, double m_stage_after, const Mat3& J_after);

struct StrokeResult {
    double v_rel = 0.0;
    double dv_stage = 0.0;  // magnitude
    double duration = 0.0;  // time to full extension, s
};

/// High-rate two-body spring-stroke integration (offline validation of the
/// impulsive model). dt in seconds, sub-millisecond recommended.
StrokeResult integrate_spring_stroke(const SeparationDevice& device, double m_stage_after, double dt = 1e-5);

}  // namespace upstage::separation
