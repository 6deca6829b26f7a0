#pragma once

// Sensor and actuator frames exchanged between the plant and the flight
// software, plus the layout of their discrete bitfields.

#include <array>
#include <cstdint>
#include <vector>

#include "upstage/math.hpp"

namespace upstage::fsw {

inline constexpr unsigned kMaxDevices = 16;

namespace sensor_bits {
// bits [2i, 2i+1]: separation chain phase of device i
inline constexpr unsigned kMibQuantized = 32;   // plant lifted a sub-MIB command
inline constexpr unsigned kLinkTimeout = 33;    // previous actuator frame was reapplied
inline constexpr unsigned kOperatorGoto = 34;   // op_goto field valid
inline constexpr unsigned kOperatorRate = 35;   // op_rate field valid
inline constexpr unsigned kFireWithoutArm = 36;
}  // namespace sensor_bits

namespace actuator_bits {
// bit 2i: arm device i, bit 2i+1: fire device i
inline constexpr unsigned kStateShift = 32;  // 8 bits: sequencer state index (255 = none)
inline constexpr unsigned kModeShift = 40;   // 2 bits: controller mode
inline constexpr unsigned kInfeasible = 42;
inline constexpr unsigned kCovarianceReset = 43;
inline constexpr unsigned kTickGap = 44;
inline constexpr unsigned kFlagShift = 48;   // 16 bits: sequencer user flags
}  // namespace actuator_bits

struct SensorFrame {
    std::uint64_t tick = 0;
    double t = 0.0;
    Vec3 w_meas = Vec3::Zero();
    Quat q_meas = Quat::Identity();
    double p_tank = 0.0;
    double m_prop_meas = 0.0;
    double op_goto = -1.0;           // operator state-jump request (state index)
    Vec3 op_rate = Vec3::Zero();     // operator rate target, rad/s
    std::uint64_t discretes = 0;

    unsigned device_phase(unsigned i) const { return static_cast<unsigned>((discretes >> (2 * i)) & 3u); }
    void set_device_phase(unsigned i, unsigned phase) {
        discretes &= ~(std::uint64_t{3} << (2 * i));
        discretes |= std::uint64_t{phase & 3u} << (2 * i);
    }
    bool bit(unsigned b) const { return (discretes >> b) & 1u; }
    void set_bit(unsigned b, bool v = true) {
        if (v) discretes |= std::uint64_t{1} << b; else discretes &= ~(std::uint64_t{1} << b);
    }

    bool operator==(const SensorFrame&) const = default;
};

struct ActuatorFrame {
    std::uint64_t tick = 0;
    std::vector<double> on_times;  // per thruster, s
    double throttle = 0.0;
    std::uint64_t discretes = 0;

    bool arm(unsigned i) const { return (discretes >> (2 * i)) & 1u; }
    bool fire(unsigned i) const { return (discretes >> (2 * i + 1)) & 1u; }
    void set_arm(unsigned i, bool v) { set_bit(2 * i, v); }
    void set_fire(unsigned i, bool v) { set_bit(2 * i + 1, v); }
    bool bit(unsigned b) const { return (discretes >> b) & 1u; }
    void set_bit(unsigned b, bool v = true) {
        if (v) discretes |= std::uint64_t{1} << b; else discretes &= ~(std::uint64_t{1} << b);
    }
    unsigned state_index() const { return static_cast<unsigned>((discretes >> actuator_bits::kStateShift) & 0xFFu); }
    unsigned mode() const { return static_cast<unsigned>((discretes >> actuator_bits::kModeShift) & 3u); }
    std::uint16_t flags() const { return static_cast<std::uint16_t>(discretes >> actuator_bits::kFlagShift); }

    bool operator==(const ActuatorFrame&) const = default;
};

/// All-zero actuator frame used to fill the pipeline.
inline ActuatorFrame zero_actuator(std::uint64_t tick, std::size_t n_thrusters) {
    ActuatorFrame a;
    a.tick = tick;
    a.on_times.assign(n_thrusters, 0.0);
    return a;
}

}  // namespace upstage::fsw
