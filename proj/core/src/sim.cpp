#include "upstage/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "upstage/error.hpp"

namespace upstage::sim {

void EventLog::add(double t, std::string kind, std::string detail) {
    events_.push_back({t, std::move(kind), std::move(detail)});
}

void EventLog::write_csv(std::ostream& os) const {
    os << "t,kind,detail\n";
    for (const auto& e : events_) {
        os << format_double(e.t) << ',' << e.kind << ',' << csv_quote(e.detail) << '\n';
    }
}

double Gaussian::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

double Gaussian::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    return r * std::cos(2.0 * kPi * u2);
}

namespace {

const char* kFlagNames[] = {"infeasible", "covariance_reset", "tick_gap", "mib_quantized", "link_timeout",
                            "fire_without_arm"};

// Spin principal axis of J closest to body z, signed along the momentum.
Vec3 spin_axis_body(const Mat3& J, const Vec3& w) {
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(J);
    Eigen::Index k;
    eig.eigenvectors().row(2).cwiseAbs().maxCoeff(&k);
    Vec3 e = eig.eigenvectors().col(k);
    if (e.dot(J * w) < 0.0) e = -e;
    return e;
}

double pulse_end(const actuation::ActivePulse& p, const actuation::Thruster& th) {
    double extra = 0.0;
    if (const auto* x = std::get_if<actuation::ExtraDelay>(&th.fault.kind)) extra = x->seconds;
    return p.t_start + th.t_delay + extra + p.t_on + th.t_ramp;
}

}  // namespace

PlantSide::PlantSide(const Scenario& scenario, std::uint64_t seed)
    : sc_(scenario),
      program_(scenario.parse_program()),
      bank_(scenario.thrusters),
      state_(plant::make_initial_state(scenario.plant)),
      chains_(scenario.devices.size()),
      noise_(seed),
      fault_announced_(scenario.thrusters.size(), false),
      trace_(trace_columns(scenario.device_ids())) {
    const double T = sc_.fsw.dt;
    substeps_ = static_cast<unsigned>(std::lround(T / sc_.sim.dt));
    h_ = T / substeps_;
    total_ticks_ = static_cast<std::uint64_t>(std::llround(sc_.sim.duration / T));
    for (int i = 0; i < 3; ++i) bias_[i] = sc_.sensor.gyro_bias * (2.0 * noise_.uniform() - 1.0);
    const Vec3 h0 = plant::inertial_momentum(state_);
    if (h0.norm() > 0.0) h0_hat_ = h0.normalized();
    applied_ = fsw::zero_actuator(0, bank_.size());
}

void PlantSide::queue_goto(std::size_t index) { pending_goto_ = index; }

void PlantSide::queue_rate(const Vec3& rate) { pending_rate_ = rate; }

bool PlantSide::inject_fault(const std::string& id, const actuation::FaultKind& kind) {
    for (std::size_t i = 0; i < bank_.size(); ++i) {
        if (bank_[i].id != id) continue;
        bank_[i].fault = {kind, state_.t};
        fault_announced_[i] = false;
        return true;
    }
    return false;
}

std::vector<std::string> PlantSide::active_faults() const {
    std::vector<std::string> out;
    for (const auto& th : bank_) {
        if (std::holds_alternative<actuation::NoFault>(th.fault.kind) || th.fault.t_onset > state_.t) continue;
        out.push_back(th.id + ":" + actuation::fault_name(th.fault.kind));
    }
    return out;
}

fsw::SensorFrame PlantSide::sense() {
    fsw::SensorFrame f;
    f.tick = tick_;
    f.t = static_cast<double>(tick_) * sc_.fsw.dt;
    Vec3 n;
    for (int i = 0; i < 3; ++i) n[i] = noise_.normal();
    f.w_meas = state_.w + bias_ + sc_.sensor.gyro_noise * n;
    f.q_meas = state_.q;
    f.p_tank = state_.tank.p;
    f.m_prop_meas = state_.m_prop;
    for (std::size_t i = 0; i < chains_.size(); ++i)
        f.set_device_phase(static_cast<unsigned>(i), static_cast<unsigned>(chains_[i].phase));
    f.set_bit(fsw::sensor_bits::kMibQuantized, mib_quantized_);
    f.set_bit(fsw::sensor_bits::kLinkTimeout, link_timeout_);
    f.set_bit(fsw::sensor_bits::kFireWithoutArm, fire_without_arm_);
    if (pending_goto_) {
        f.op_goto = static_cast<double>(*pending_goto_);
        f.set_bit(fsw::sensor_bits::kOperatorGoto);
        pending_goto_.reset();
    }
    if (pending_rate_) {
        f.op_rate = *pending_rate_;
        f.set_bit(fsw::sensor_bits::kOperatorRate);
        pending_rate_.reset();
    }
    return f;
}

void PlantSide::update_flags(std::uint32_t flags) {
    const std::uint32_t changed = flags ^ flags_;
    const double t = static_cast<double>(tick_) * sc_.fsw.dt;
    for (unsigned b = 0; b < 32; ++b) {
        if (!((changed >> b) & 1u)) continue;
        std::string name;
        if (b < 6) name = kFlagNames[b];
        else if (b >= flag_bits::kUserShift && b - flag_bits::kUserShift < program_.flags.size())
            name = program_.flags[b - flag_bits::kUserShift];
        else name = "bit" + std::to_string(b);
        events_.add(t, ((flags >> b) & 1u) ? "flag_on" : "flag_off", name);
    }
    flags_ = flags;
    flag_names_active_.clear();
    for (unsigned b = 0; b < 32; ++b) {
        if (!((flags >> b) & 1u)) continue;
        if (b < 6) flag_names_active_.emplace_back(kFlagNames[b]);
        else if (b >= flag_bits::kUserShift && b - flag_bits::kUserShift < program_.flags.size())
            flag_names_active_.push_back(program_.flags[b - flag_bits::kUserShift]);
    }
}

void PlantSide::check_fault_onsets(double, double t1) {
    for (std::size_t i = 0; i < bank_.size(); ++i) {
        const auto& f = bank_[i].fault;
        if (fault_announced_[i] || std::holds_alternative<actuation::NoFault>(f.kind)) continue;
        if (f.t_onset <= t1) {
            fault_announced_[i] = true;
            events_.add(std::max(f.t_onset, 0.0), "fault", bank_[i].id + " " + actuation::fault_name(f.kind));
        }
    }
}

void PlantSide::step_chains(double t) {
    for (std::size_t i = 0; i < chains_.size(); ++i) {
        const auto& dev = sc_.devices[i];
        const separation::ChainCommands cmd{applied_.arm(static_cast<unsigned>(i)),
                                            applied_.fire(static_cast<unsigned>(i))};
        const auto before = chains_[i].phase;
        const auto r = separation::chain_step(chains_[i], dev, cmd, t);
        chains_[i] = r.state;
        if (r.fire_without_arm && !fire_without_arm_) {
            fire_without_arm_ = true;
            events_.add(t, "flag_on", "fire_without_arm " + dev.payload_id);
        }
        if (r.state.phase != before && !r.released)
            events_.add(r.state.t_phase_entry, "chain", dev.payload_id + " " + separation::phase_name(r.state.phase));
        if (r.released) {
            plant::Payload removed;
            plant::detach_payload(state_, dev.payload_id, &removed);
            const Mat3 J_after = plant::effective_inertia(state_);
            const auto imp = separation::release_impulse(dev, state_.total_mass(), J_after);
            plant::ImpulsiveEvent e;
            e.dv = imp.dv_stage;
            e.dw = imp.dw;
            state_ = plant::apply_impulsive_event(state_, e);
            events_.add(t, "release",
                        dev.payload_id + " dv=" + format_double(imp.dv_stage.norm()) + " dw=" +
                            format_double(imp.dw.norm()));
        }
    }
}

void PlantSide::plant_step(double h) {
    const double t0 = state_.t;
    const double t1 = static_cast<double>(plant_ticks_ + 1) * h;
    check_fault_onsets(t0, t1);

    const auto out = actuation::bank_average(active_, bank_, state_.tank.p, t0, t1);
    plant::PlantInputs in;
    in.torque = out.torque;
    in.force = out.force;
    in.mdot = out.mdot;
    if (applied_.throttle > 0.0) {
        if (!ignition_t_) ignition_t_ = t0;
        const Vec3 F = actuation::main_engine_thrust(applied_.throttle, t0 - *ignition_t_, sc_.engine);
        in.force += F;
        in.torque += sc_.engine.offset.cross(F);
        in.mdot += F.norm() / (sc_.engine.isp * kG0);
    }
    last_torque_ = out.torque;
    last_mdot_ = out.mdot;
    last_firing_ = out.firing;

    state_ = plant::step_dynamics(state_, in, t1 - t0, sc_.plant.params);
    ++plant_ticks_;
    state_.t = t1;
    step_chains(t1);

    active_.erase(std::remove_if(active_.begin(), active_.end(),
                                 [&](const actuation::ActivePulse& p) { return pulse_end(p, bank_[p.thruster]) <= t1; }),
                  active_.end());

    if (plant_ticks_ % sc_.telemetry.decimation == 0) record_row();
}

void PlantSide::record_row() {
    const auto& s = state_;
    const Mat3 J = plant::effective_inertia(s);
    const Vec3 H = plant::inertial_momentum(s);
    const Vec3 e_body = spin_axis_body(J, s.w);
    const double att = angle_between(s.q * e_body, h0_hat_);
    std::vector<double> row = {
        s.t,
        static_cast<double>(applied_.tick),
        s.q.w(), s.q.x(), s.q.y(), s.q.z(),
        s.w.x(), s.w.y(), s.w.z(),
        s.w.norm(),
        std::hypot(s.w.x(), s.w.y()),
        H.x(), H.y(), H.z(),
        plant::nutation_angle(s),
        att,
        s.slosh.phi, s.slosh.phi_dot,
        s.m_prop,
        s.total_mass(),
        s.tank.p,
        s.tank.T,
        J(0, 0), J(1, 1), J(2, 2), J(0, 1), J(0, 2), J(1, 2),
        s.dv_total.x(), s.dv_total.y(), s.dv_total.z(),
        last_torque_.x(), last_torque_.y(), last_torque_.z(),
        last_mdot_,
        static_cast<double>(last_firing_),
        static_cast<double>(pulses_),
        static_cast<double>(applied_.state_index()),
        static_cast<double>(applied_.mode()),
        static_cast<double>(flags_),
    };
    for (const auto& c : chains_) row.push_back(static_cast<double>(c.phase));
    trace_.append(row);
    if (on_row) on_row(row);
}

void PlantSide::advance(const fsw::ActuatorFrame& a) {
    if (a.on_times.size() != bank_.size()) throw ProtocolViolation("actuator frame has " +
                                                                   std::to_string(a.on_times.size()) + " on-times");
    const double t_k = static_cast<double>(tick_) * sc_.fsw.dt;
    applied_ = a;

    // Sequencer state changes as seen through the applied frames.
    const unsigned st = a.state_index();
    if (!last_state_ || *last_state_ != st) {
        const std::string name = st < program_.states.size() ? program_.states[st].name : std::to_string(st);
        events_.add(t_k, "transition", name);
        last_state_ = st;
    }

    // Flags: actuator-side bits from the frame, plant-side bits raised since
    // the previous sensor frame.
    std::uint32_t flags = 0;
    if (a.bit(fsw::actuator_bits::kInfeasible)) flags |= 1u << flag_bits::kInfeasible;
    if (a.bit(fsw::actuator_bits::kCovarianceReset)) flags |= 1u << flag_bits::kCovarianceReset;
    if (a.bit(fsw::actuator_bits::kTickGap)) flags |= 1u << flag_bits::kTickGap;
    if (mib_quantized_) flags |= 1u << flag_bits::kMibQuantized;
    if (link_timeout_) flags |= 1u << flag_bits::kLinkTimeout;
    if (fire_without_arm_) flags |= 1u << flag_bits::kFireWithoutArm;
    flags |= static_cast<std::uint32_t>(a.flags()) << flag_bits::kUserShift;
    update_flags(flags);
    mib_quantized_ = false;
    link_timeout_ = false;
    fire_without_arm_ = false;

    for (std::size_t i = 0; i < bank_.size(); ++i) {
        const double cmd = a.on_times[i];
        if (!(cmd > 0.0)) continue;
        const auto q = actuation::quantize_on_time(std::min(cmd, sc_.fsw.dt), bank_[i].mib);
        if (q.raised) mib_quantized_ = true;
        active_.push_back({i, t_k, q.t_on, state_.tank.p});
        ++pulses_;
    }

    step_chains(t_k);
    for (unsigned j = 0; j < substeps_; ++j) plant_step(h_);
    ++tick_;
}

}  // namespace upstage::sim
