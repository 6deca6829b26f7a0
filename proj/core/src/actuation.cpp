#include "upstage/actuation.hpp"

#include <algorithm>
#include <cmath>

#include "upstage/error.hpp"

namespace upstage::actuation {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double unit_trapezoid_value(double t0, double ramp, double on, double t) {
    const double u = t - t0;
    if (u < 0.0 || on <= 0.0) return 0.0;
    if (ramp <= 0.0) return u < on ? 1.0 : 0.0;
    if (u < ramp) return u / ramp;
    if (u < on) return 1.0;
    if (u < on + ramp) return 1.0 - (u - on) / ramp;
    return 0.0;
}

// Antiderivative of the unit trapezoid, G(t0) = 0, G(inf) = on.
double unit_trapezoid_primitive(double t0, double ramp, double on, double t) {
    const double u = t - t0;
    if (u <= 0.0 || on <= 0.0) return 0.0;
    if (ramp <= 0.0) return std::min(u, on);
    if (u <= ramp) return u * u / (2.0 * ramp);
    if (u <= on) return 0.5 * ramp + (u - ramp);
    if (u <= on + ramp) {
        const double v = u - on;
        return 0.5 * ramp + (on - ramp) + (v - v * v / (2.0 * ramp));
    }
    return on;
}

double effective_delay(const Thruster& thr, double t_start) {
    double delay = thr.t_delay;
    if (const auto* x = thr.fault.active_as<ExtraDelay>(t_start)) delay += x->seconds;
    return delay;
}

double eta_at(const Thruster& thr, double t) {
    if (const auto* d = thr.fault.active_as<Degraded>(t)) return d->eta;
    return 1.0;
}

double pressure_scaled(const Thruster& thr, double p) { return thr.F_ref * p / thr.p_ref; }

}  // namespace

std::string fault_name(const FaultKind& kind) {
    return std::visit(overloaded{
                          [](const NoFault&) { return std::string("None"); },
                          [](const StuckClosed&) { return std::string("StuckClosed"); },
                          [](const StuckOpen&) { return std::string("StuckOpen"); },
                          [](const Leak&) { return std::string("Leak"); },
                          [](const Degraded&) { return std::string("Degraded"); },
                          [](const ExtraDelay&) { return std::string("ExtraDelay"); },
                      },
                      kind);
}

void validate_fault(const FaultSpec& f, const std::string& field) {
    if (!(f.t_onset >= 0.0)) throw ConfigInvalid(field + ".t_onset");
    if (const auto* l = std::get_if<Leak>(&f.kind)) {
        if (!(l->mdot >= 0.0)) throw ConfigInvalid(field + ".mdot");
        if (!(l->thrust_fraction >= 0.0 && l->thrust_fraction <= 1.0)) throw ConfigInvalid(field + ".thrust_fraction");
    }
    if (const auto* d = std::get_if<Degraded>(&f.kind)) {
        if (!(d->eta > 0.0 && d->eta <= 1.0)) throw ConfigInvalid(field + ".eta");
    }
    if (const auto* x = std::get_if<ExtraDelay>(&f.kind)) {
        if (!(x->seconds >= 0.0)) throw ConfigInvalid(field + ".delay");
    }
}

void validate_thruster(const Thruster& thr, const std::string& field) {
    if (thr.id.empty()) throw ConfigInvalid(field + ".id");
    if (!(std::abs(thr.d_hat.norm() - 1.0) < 1e-9)) throw ConfigInvalid(field + ".d");
    if (!(thr.F_ref > 0.0)) throw ConfigInvalid(field + ".F_ref");
    if (!(thr.p_ref > 0.0)) throw ConfigInvalid(field + ".p_ref");
    if (!(thr.t_ramp >= 0.0)) throw ConfigInvalid(field + ".t_ramp");
    if (!(thr.mib > 0.0 && thr.mib >= 2.0 * thr.t_ramp)) throw ConfigInvalid(field + ".mib");
    if (!(thr.t_delay >= 0.0)) throw ConfigInvalid(field + ".t_delay");
    if (!(thr.isp > 0.0)) throw ConfigInvalid(field + ".isp");
    validate_fault(thr.fault, field + ".fault");
}

Quantized quantize_on_time(double t_on, double mib) {
    if (t_on <= 0.0) return {0.0, false};
    if (t_on < mib) return {mib, true};
    return {t_on, false};
}

double plateau_thrust(const Thruster& thr, double p, double t) {
    if (thr.fault.active_as<StuckClosed>(t)) return 0.0;
    return pressure_scaled(thr, p) * eta_at(thr, t);
}

double unit_trapezoid_integral(double t0, double ramp, double on, double a, double b) {
    return unit_trapezoid_primitive(t0, ramp, on, b) - unit_trapezoid_primitive(t0, ramp, on, a);
}

double shape_pulse(const PulseCommand& cmd, const Thruster& thr, double p, double t) {
    if (cmd.t_on <= 0.0) return 0.0;
    if (thr.fault.active_as<StuckOpen>(t)) return pressure_scaled(thr, p);
    const double on = quantize_on_time(cmd.t_on, thr.mib).t_on;
    const double t0 = cmd.t_start + effective_delay(thr, cmd.t_start);
    return plateau_thrust(thr, p, t) * unit_trapezoid_value(t0, thr.t_ramp, on, t);
}

BankOutput bank_forces_torques(std::span<const PulseCommand> commands, std::span<const Thruster> bank, double p,
                               double t) {
    std::vector<double> thrust(bank.size(), 0.0);
    for (const auto& cmd : commands) {
        auto it = std::find_if(bank.begin(), bank.end(), [&](const Thruster& th) { return th.id == cmd.thruster_id; });
        if (it == bank.end()) throw UnknownThrusterId(cmd.thruster_id);
        const auto i = static_cast<std::size_t>(it - bank.begin());
        if (it->fault.active_as<StuckOpen>(t)) continue;  // accounted once below
        thrust[i] += shape_pulse(cmd, *it, p, t);
    }

    BankOutput out;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const Thruster& th = bank[i];
        double F = thrust[i];
        if (th.fault.active_as<StuckOpen>(t)) F = pressure_scaled(th, p);
        double F_leak = 0.0;
        if (const auto* leak = th.fault.active_as<Leak>(t)) {
            F_leak = leak->thrust_fraction * pressure_scaled(th, p);
            out.mdot += leak->mdot;
        }
        const double F_total = F + F_leak;
        if (F_total != 0.0) {
            out.force += F_total * th.d_hat;
            out.torque += th.r.cross(F_total * th.d_hat);
        }
        if (F > 0.0) ++out.firing;
        out.mdot += F / (th.isp * kG0);
    }
    return out;
}

BankOutput bank_average(std::span<const ActivePulse> pulses, std::span<const Thruster> bank, double p_now,
                        double t0, double t1, PressureSampling sampling) {
    BankOutput out;
    const double dt = t1 - t0;
    if (!(dt > 0.0)) return out;

    for (std::size_t i = 0; i < bank.size(); ++i) {
        const Thruster& th = bank[i];
        double a_bounds[3] = {t0, t1, t1};
        int n_bounds = 2;
        if (th.fault.active(t1) && th.fault.t_onset > t0 && th.fault.t_onset < t1) {
            a_bounds[1] = th.fault.t_onset;
            a_bounds[2] = t1;
            n_bounds = 3;
        }

        double impulse = 0.0;       // thrust impulse burning propellant at Isp
        double leak_impulse = 0.0;  // leak thrust impulse
        double leak_mass = 0.0;
        for (int s = 0; s + 1 < n_bounds; ++s) {
            const double a = a_bounds[s];
            const double b = a_bounds[s + 1];
            const double mid = 0.5 * (a + b);
            if (th.fault.active_as<StuckClosed>(mid)) continue;
            if (th.fault.active_as<StuckOpen>(mid)) {
                impulse += pressure_scaled(th, p_now) * (b - a);
                continue;
            }
            const double eta = eta_at(th, mid);
            for (const auto& pulse : pulses) {
                if (pulse.thruster != i || pulse.t_on <= 0.0) continue;
                const double p = sampling == PressureSampling::PerPulse ? pulse.p_latched : p_now;
                const double start = pulse.t_start + effective_delay(th, pulse.t_start);
                impulse += pressure_scaled(th, p) * eta * unit_trapezoid_integral(start, th.t_ramp, pulse.t_on, a, b);
            }
            if (const auto* leak = th.fault.active_as<Leak>(mid)) {
                leak_impulse += leak->thrust_fraction * pressure_scaled(th, p_now) * (b - a);
                leak_mass += leak->mdot * (b - a);
            }
        }

        const double F_avg = (impulse + leak_impulse) / dt;
        if (F_avg != 0.0) {
            out.force += F_avg * th.d_hat;
            out.torque += th.r.cross(F_avg * th.d_hat);
        }
        if (impulse > 0.0) ++out.firing;
        out.mdot += impulse / (th.isp * kG0) / dt + leak_mass / dt;
    }
    return out;
}

Vec3 main_engine_thrust(double throttle, double t_since_ignition, const EngineConfig& engine) {
    throttle = std::clamp(throttle, 0.0, 1.0);
    if (throttle == 0.0 || t_since_ignition < 0.0 || engine.F_max <= 0.0) return Vec3::Zero();
    const double ramp = engine.t_rampup > 0.0 ? std::min(1.0, t_since_ignition / engine.t_rampup) : 1.0;
    return throttle * engine.F_max * ramp * engine.axis.normalized();
}

}  // namespace upstage::actuation
