#pragma once

// The flight-software executive: navigation, sequencer, identification and
// control at the FSW rate, producing one actuator frame per sensor frame.

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "upstage/frames.hpp"
#include "upstage/fsw.hpp"
#include "upstage/sequencer.hpp"

namespace upstage::fsw {

struct FswConfig {
    double dt = 0.1;
    NavConfig nav;
    PhasePlaneConfig phase_plane;
    MpcWeights mpc;
    int horizon = 6;
    RlsConfig rls;
    Mat3 J_nominal = Mat3::Identity();  // prior for identification, model for plain MPC
    std::optional<seq::ControllerMode> mode_override;
    double depletion_tau = 2.0;         // s
    unsigned delay_ticks = 0;           // commands reach the plant this many ticks late
    bool attitude_hold = false;
};

struct FswStatus {
    std::size_t state = 0;
    seq::ControllerMode mode = seq::ControllerMode::PhasePlane;
    Vec3 w_ref = Vec3::Zero();
    Vec3 w_target = Vec3::Zero();  // reference after principal-axis mapping
    Mat3 J_hat = Mat3::Identity();
    NavOutput nav;
    double depletion_rate = 0.0;
    bool infeasible = false;
    bool covariance_reset = false;
    std::optional<std::size_t> entered;
    std::vector<seq::Action> actions;
};

class FlightSoftware {
public:
    FlightSoftware(FswConfig config, std::vector<ThrusterGeometry> thrusters, std::vector<std::string> devices,
                   seq::SequenceProgram program);

    ActuatorFrame step(const SensorFrame& frame);

    const FswStatus& status() const { return status_; }
    const seq::SequenceProgram& program() const { return program_; }
    const FswConfig& config() const { return config_; }
    const InertiaEstimate& estimate() const { return estimate_; }
    std::size_t thruster_count() const { return thrusters_.size(); }
    std::size_t device_count() const { return devices_.size(); }

private:
    void apply_actions(const std::vector<seq::Action>& actions);
    seq::Telemetry telemetry(const SensorFrame& frame) const;
    std::array<AxisPulse, 3> control(const SensorFrame& frame);
    Vec3 commanded_torque(const std::vector<double>& on_times, double pressure_scale) const;
    double pressure_scale(double p) const;

    FswConfig config_;
    std::vector<ThrusterGeometry> thrusters_;
    std::vector<std::string> devices_;
    seq::SequenceProgram program_;
    ChannelMap channels_;
    double channel_mib_ = 0.0;

    Navigator nav_;
    PhasePlane phase_plane_;
    seq::InterpState interp_;
    InertiaEstimate estimate_;
    FswStatus status_;

    std::vector<bool> arm_;
    std::vector<bool> fire_;
    std::uint16_t user_flags_ = 0;
    Vec3 w_ref_ = Vec3::Zero();
    seq::ControllerMode mode_ = seq::ControllerMode::PhasePlane;
    Quat q_ref_ = Quat::Identity();
    bool q_ref_set_ = false;

    std::deque<Vec3> torque_history_;  // commanded average torque, newest last
    Vec3 tau_filtered_ = Vec3::Zero();
    bool have_prev_ = false;
    double m_prev_ = 0.0;
    double depletion_ = 0.0;
};

}  // namespace upstage::fsw
