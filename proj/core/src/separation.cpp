#include "upstage/separation.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "upstage/error.hpp"

namespace upstage::separation {

namespace {
constexpr double kTimeEps = 1e-9;

// Orthonormal pair spanning the plane normal to the axis. For the default
// +z axis this is (x, y).
std::pair<Vec3, Vec3> lateral_basis(const Vec3& axis) {
    const Vec3 a = axis.normalized();
    const Vec3 seed = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = (seed - seed.dot(a) * a).normalized();
    const Vec3 e2 = a.cross(e1);
    return {e1, e2};
}
}  // namespace

double SeparationDevice::spring_fraction() const {
    if (const auto* p = std::get_if<PartialSpring>(&fault)) return p->fraction;
    return 1.0;
}

Vec3 SeparationDevice::offset_vector() const {
    const auto [e1, e2] = lateral_basis(axis);
    return lateral_offset.x() * e1 + lateral_offset.y() * e2;
}

void validate_device(const SeparationDevice& d, const std::string& field) {
    if (d.payload_id.empty()) throw ConfigInvalid(field + ".id");
    if (!(d.m_pl > 0.0)) throw ConfigInvalid(field + ".mass");
    if (!is_symmetric(d.J_pl, 1e-9)) throw ConfigInvalid(field + ".inertia");
    if (!(d.k_spring > 0.0)) throw ConfigInvalid(field + ".k_spring");
    if (!(d.stroke > 0.0)) throw ConfigInvalid(field + ".stroke");
    if (!(d.delay_arm >= 0.0 && d.delay_release >= 0.0)) throw ConfigInvalid(field + ".delays");
    if (!(d.axis.norm() > 0.0)) throw ConfigInvalid(field + ".axis");
    if (const auto* p = std::get_if<PartialSpring>(&d.fault)) {
        if (!(p->fraction > 0.0 && p->fraction <= 1.0)) throw ConfigInvalid(field + ".fault_param");
    }
    if (const auto* l = std::get_if<LateFire>(&d.fault)) {
        if (!(l->extra >= 0.0)) throw ConfigInvalid(field + ".fault_param");
    }
}

const char* phase_name(Phase phase) {
    switch (phase) {
        case Phase::Idle: return "IDLE";
        case Phase::Armed: return "ARMED";
        case Phase::Fired: return "FIRED";
        case Phase::Released: return "RELEASED";
    }
    return "?";
}

ChainStepResult chain_step(const ChainState& chain, const SeparationDevice& device, const ChainCommands& cmd,
                           double t) {
    ChainStepResult r{chain, false, false};
    ChainState& s = r.state;

    if (s.phase == Phase::Idle) {
        if (cmd.arm && !s.arm_due) s.arm_due = t + device.delay_arm;
        if (cmd.fire && !s.arm_due) r.fire_without_arm = true;
        if (s.arm_due && t + kTimeEps >= *s.arm_due) {
            s.phase = Phase::Armed;
            s.t_phase_entry = *s.arm_due;
        }
    }

    if (s.phase == Phase::Armed && cmd.fire && !std::holds_alternative<NoFire>(device.fault)) {
        double delay = device.delay_release;
        if (const auto* late = std::get_if<LateFire>(&device.fault)) delay += late->extra;
        s.phase = Phase::Fired;
        s.t_phase_entry = t;
        s.release_due = t + delay;
    }

    if (s.phase == Phase::Fired && t + kTimeEps >= *s.release_due) {
        s.phase = Phase::Released;
        s.t_phase_entry = *s.release_due;
        r.released = true;
    }
    return r;
}

ReleaseImpulse release_impulse(const SeparationDevice& d, double m_stage_after, const Mat3& J_after) {
    ReleaseImpulse out;
    const Vec3 axis = d.axis.normalized();
    out.energy = 0.5 * d.k_spring * d.stroke * d.stroke * d.spring_fraction();
    out.reduced_mass = d.m_pl * m_stage_after / (d.m_pl + m_stage_after);
    out.v_rel = std::sqrt(2.0 * out.energy / out.reduced_mass);
    out.dv_stage = -axis * (out.v_rel * d.m_pl / (d.m_pl + m_stage_after));
    const Vec3 p_imp = out.reduced_mass * out.v_rel * axis;
    out.dw = J_after.ldlt().solve(d.offset_vector().cross(p_imp));
    return out;
}

StrokeResult integrate_spring_stroke(const SeparationDevice& d, double m_stage, double dt) {
    // Relative coordinate s = extension of the spring; force k_eff (stroke - s)
    // acts on both bodies until s = stroke.
    const double k_eff = d.k_spring * d.spring_fraction();
    const double x0 = d.stroke;
    double s = 0.0;
    double v_pl = 0.0;
    double v_st = 0.0;
    double t = 0.0;

    auto accel = [&](double ext) {
        const double F = k_eff * (x0 - ext);
        return std::pair{F / d.m_pl, -F / m_stage};
    };

    // RK4 on (s, v_pl, v_st), truncating the last step at full extension.
    while (true) {
        const auto step = [&](double h) {
            auto f = [&](double ss, double vp, double vs) {
                const auto [ap, as] = accel(ss);
                return std::array<double, 3>{vp - vs, ap, as};
            };
            const auto k1 = f(s, v_pl, v_st);
            const auto k2 = f(s + 0.5 * h * k1[0], v_pl + 0.5 * h * k1[1], v_st + 0.5 * h * k1[2]);
            const auto k3 = f(s + 0.5 * h * k2[0], v_pl + 0.5 * h * k2[1], v_st + 0.5 * h * k2[2]);
            const auto k4 = f(s + h * k3[0], v_pl + h * k3[1], v_st + h * k3[2]);
            return std::array<double, 3>{s + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                                         v_pl + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
                                         v_st + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])};
        };
        auto next = step(dt);
        if (next[0] >= x0) {
            // bisect the final sub-step onto s = stroke
            double lo = 0.0;
            double hi = dt;
            for (int i = 0; i < 60; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (step(mid)[0] >= x0) hi = mid; else lo = mid;
            }
            next = step(hi);
            t += hi;
            s = next[0];
            v_pl = next[1];
            v_st = next[2];
            break;
        }
        s = next[0];
        v_pl = next[1];
        v_st = next[2];
        t += dt;
        if (t > 100.0) break;
    }
    return {v_pl - v_st, std::abs(v_st), t};
}

}  // namespace upstage::separation
