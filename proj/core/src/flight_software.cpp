#include "upstage/flight_software.hpp"

#include <algorithm>
#include <cmath>

#include "upstage/error.hpp"

namespace upstage::fsw {

namespace {

Quat rate_increment(const Vec3& w, double dt) {
    const double angle = w.norm() * dt;
    if (angle == 0.0) return Quat::Identity();
    return Quat(Eigen::AngleAxisd(angle, w.normalized()));
}

// Small-angle attitude error of q relative to q_ref, body axes.
Vec3 attitude_error(const Quat& q_ref, const Quat& q) {
    Quat e = q_ref.conjugate() * q;
    if (e.w() < 0.0) e.coeffs() = -e.coeffs();
    return 2.0 * e.vec();
}

}  // namespace

FlightSoftware::FlightSoftware(FswConfig config, std::vector<ThrusterGeometry> thrusters,
                               std::vector<std::string> devices, seq::SequenceProgram program)
    : config_(std::move(config)),
      thrusters_(std::move(thrusters)),
      devices_(std::move(devices)),
      program_(std::move(program)),
      channels_(build_channels(thrusters_)),
      nav_(config_.nav),
      phase_plane_(config_.phase_plane),
      arm_(devices_.size(), false),
      fire_(devices_.size(), false) {
    if (devices_.size() > kMaxDevices) throw ConfigInvalid("separation.device");
    if (!is_spd(config_.J_nominal)) throw ConfigInvalid("fsw.J_nominal");
    for (const auto& axis : channels_.channels)
        for (const auto& ch : axis) channel_mib_ = std::max(channel_mib_, ch.mib);
    estimate_.theta = theta_from_inertia(config_.J_nominal);
    estimate_.P = config_.rls.p0 * Mat6::Identity();
    estimate_.lambda = config_.rls.lambda;
    if (config_.mode_override) mode_ = *config_.mode_override;
}

double FlightSoftware::pressure_scale(double p) const {
    if (thrusters_.empty() || !(thrusters_.front().p_ref > 0.0)) return 1.0;
    const double s = p / thrusters_.front().p_ref;
    return s > 0.0 ? s : 1.0;
}

seq::Telemetry FlightSoftware::telemetry(const SensorFrame& f) const {
    const Vec3& w = status_.nav.w_hat;
    seq::Telemetry tel{
        {"t", f.t},
        {"state_time", interp_.started ? f.t - interp_.t_entry : 0.0},
        {"w_x", w.x()},
        {"w_y", w.y()},
        {"w_z", w.z()},
        {"w_norm", w.norm()},
        {"w_transverse", std::hypot(w.x(), w.y())},
        {"p_tank", f.p_tank},
        {"m_prop", f.m_prop_meas},
        {"depletion_rate", depletion_},
    };
    for (std::size_t i = 0; i < devices_.size(); ++i)
        tel.emplace(devices_[i] + "_phase", static_cast<double>(f.device_phase(static_cast<unsigned>(i))));
    return tel;
}

void FlightSoftware::apply_actions(const std::vector<seq::Action>& actions) {
    auto device_index = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(devices_.begin(), devices_.end(), name);
        if (it == devices_.end()) throw UnknownDevice(name);
        return static_cast<std::size_t>(it - devices_.begin());
    };
    for (const auto& a : actions) {
        if (const auto* r = std::get_if<seq::SetRateTarget>(&a)) {
            w_ref_ = r->rate;
        } else if (const auto* arm = std::get_if<seq::Arm>(&a)) {
            arm_[device_index(arm->device)] = true;
        } else if (const auto* fire = std::get_if<seq::Fire>(&a)) {
            fire_[device_index(fire->device)] = true;
        } else if (const auto* c = std::get_if<seq::SetController>(&a)) {
            if (!config_.mode_override) mode_ = c->mode;
        } else if (const auto* fl = std::get_if<seq::SetFlag>(&a)) {
            const auto it = std::find(program_.flags.begin(), program_.flags.end(), fl->name);
            const auto idx = static_cast<std::size_t>(it - program_.flags.begin());
            if (idx < 16) user_flags_ |= static_cast<std::uint16_t>(1u << idx);
        }
    }
}

Vec3 FlightSoftware::commanded_torque(const std::vector<double>& on_times, double scale) const {
    Vec3 tau = Vec3::Zero();
    for (std::size_t i = 0; i < thrusters_.size(); ++i) {
        const auto& th = thrusters_[i];
        tau += (on_times[i] / config_.dt) * th.F_ref * scale * th.r.cross(th.d_hat);
    }
    return tau;
}

std::array<AxisPulse, 3> FlightSoftware::control(const SensorFrame& f) {
    const NavOutput& nav = status_.nav;
    const double scale = pressure_scale(f.p_tank);
    status_.infeasible = false;

    if (mode_ == seq::ControllerMode::PhasePlane) {
        status_.J_hat = config_.J_nominal;
        status_.w_target = w_ref_;
        Vec3 att = Vec3::Zero();
        if (config_.attitude_hold) {
            if (!q_ref_set_) {
                q_ref_ = nav.q_hat;
                q_ref_set_ = true;
            }
            q_ref_ = (q_ref_ * rate_increment(w_ref_, config_.dt)).normalized();
            att = attitude_error(q_ref_, nav.q_hat);
        }
        return phase_plane_.update(att, nav.w_hat - w_ref_);
    }

    Mat3 J_hat = config_.J_nominal;
    if (mode_ == seq::ControllerMode::Adaptive) {
        const Mat3 J_est = inertia_from_theta(estimate_.theta);
        if (is_spd(J_est)) J_hat = J_est;
    }
    status_.J_hat = J_hat;

    // Spin about the principal axis of J_hat closest to the commanded rate.
    Vec3 target = Vec3::Zero();
    if (w_ref_.norm() > 0.0) {
        const PrincipalFrame pf = principal_axes(J_hat);
        const Vec3 proj = pf.R.transpose() * w_ref_;
        Eigen::Index k;
        proj.cwiseAbs().maxCoeff(&k);
        target = pf.R.col(k) * (proj[k] >= 0.0 ? w_ref_.norm() : -w_ref_.norm());
    }
    status_.w_target = target;

    const double authority = channels_.min_authority() * scale;
    const MpcPlan plan = mpc_plan(nav.w_hat, target, J_hat, authority, channel_mib_, config_.dt, config_.horizon,
                                  config_.mpc);
    status_.infeasible = plan.infeasible;
    return allocate_impulse(plan.first_impulse_body, channels_, scale, config_.dt);
}

ActuatorFrame FlightSoftware::step(const SensorFrame& f) {
    status_.nav = nav_.update(f);
    const NavOutput& nav = status_.nav;
    const double scale = pressure_scale(f.p_tank);

    if (have_prev_ && !nav.tick_gap) {
        const double raw = (m_prev_ - f.m_prop_meas) / config_.dt;
        depletion_ += (1.0 - std::exp(-config_.dt / config_.depletion_tau)) * (raw - depletion_);
    }

    // Identification on the interval that just ended.
    status_.covariance_reset = false;
    if (have_prev_ && !nav.tick_gap && torque_history_.size() > config_.delay_ticks) {
        const Vec3& applied = torque_history_[torque_history_.size() - 1 - config_.delay_ticks];
        tau_filtered_ += nav_.alpha() * (applied - tau_filtered_);
        const Vec3 w_mid = 0.5 * (nav.w_hat + nav.w_hat_prev);
        const RlsResult r = rls_update(estimate_, w_mid, nav.w_dot_hat, tau_filtered_, config_.rls);
        estimate_ = r.estimate;
        status_.covariance_reset = r.covariance_reset;
    }

    // Sequencer.
    seq::StepResult sr;
    const auto n_states = static_cast<double>(program_.states.size());
    if (interp_.started && f.bit(sensor_bits::kOperatorGoto) && f.op_goto >= 0.0 && f.op_goto < n_states) {
        sr = seq::jump_to(program_, interp_, static_cast<std::size_t>(f.op_goto), f.t);
    } else {
        sr = seq::step_sequencer(program_, interp_, telemetry(f), f.t, config_.dt);
    }
    apply_actions(sr.actions);
    if (f.bit(sensor_bits::kOperatorRate)) w_ref_ = f.op_rate;
    status_.entered = sr.entered;
    status_.actions = std::move(sr.actions);

    const auto pulses = control(f);

    ActuatorFrame out = zero_actuator(f.tick, thrusters_.size());
    for (int a = 0; a < 3; ++a) {
        if (pulses[a].sign == 0 || pulses[a].on_time <= 0.0) continue;
        const TorqueChannel& ch = channels_.channels[a][pulses[a].sign > 0 ? 1 : 0];
        for (const std::size_t i : ch.thrusters) out.on_times[i] = std::max(out.on_times[i], pulses[a].on_time);
    }
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        out.set_arm(static_cast<unsigned>(i), arm_[i]);
        out.set_fire(static_cast<unsigned>(i), fire_[i]);
    }
    out.discretes |= std::uint64_t{interp_.current & 0xFFu} << actuator_bits::kStateShift;
    out.discretes |= std::uint64_t{static_cast<unsigned>(mode_) & 3u} << actuator_bits::kModeShift;
    out.set_bit(actuator_bits::kInfeasible, status_.infeasible);
    out.set_bit(actuator_bits::kCovarianceReset, status_.covariance_reset);
    out.set_bit(actuator_bits::kTickGap, nav.tick_gap);
    out.discretes |= std::uint64_t{user_flags_} << actuator_bits::kFlagShift;

    torque_history_.push_back(commanded_torque(out.on_times, scale));
    while (torque_history_.size() > config_.delay_ticks + 1) torque_history_.pop_front();
    m_prev_ = f.m_prop_meas;
    have_prev_ = true;

    status_.state = interp_.current;
    status_.mode = mode_;
    status_.w_ref = w_ref_;
    status_.depletion_rate = depletion_;
    return out;
}

}  // namespace upstage::fsw
