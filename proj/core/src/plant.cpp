#include "upstage/plant.hpp"

#include <algorithm>
#include <cmath>

#include "upstage/error.hpp"

namespace upstage::plant {

namespace {

// Integration vector: q (w, x, y, z), body rate, phi, phi_dot, m_prop, T.
using StateVec = Eigen::Matrix<double, 12, 1>;

void require(bool ok, const char* field) {
    if (!ok) throw ConfigInvalid(field);
}

Mat3 payload_inertia(const std::vector<Payload>& payloads) {
    Mat3 J = Mat3::Zero();
    for (const auto& p : payloads) J += p.inertia;
    return J;
}

Mat3 slosh_inertia(double m_s, const SloshState& s, double phi) {
    if (!s.enabled || m_s <= 0.0) return Mat3::Zero();
    const Vec3 r(s.R_t * std::cos(phi), s.R_t * std::sin(phi), s.z_b);
    return point_mass_inertia(m_s, r);
}

struct Derivative {
    const VehicleState& base;
    const PlantInputs& in;
    const PlantParams& params;
    Mat3 J_fixed;  // dry + payloads

    StateVec operator()(const StateVec& y) const {
        const Quat q(y[0], y[1], y[2], y[3]);
        const Vec3 w = y.segment<3>(4);
        const double phi = y[7];
        const double phi_dot = y[8];
        const double m_prop = std::max(0.0, y[9]);
        const double T = y[10];

        const bool pendulum = base.slosh.enabled && params.slosh_model == SloshModel::Pendulum;
        const bool has_prop = m_prop > 0.0;
        const double mdot_prop = has_prop ? -in.mdot : 0.0;

        Mat3 J = J_fixed;
        Mat3 J_dot = Mat3::Zero();
        double phi_ddot = 0.0;
        double phi_rate = 0.0;
        if (pendulum) {
            const double m_s = params.fill_coefficient * m_prop;
            const SloshState& s = base.slosh;
            const Vec3 r(s.R_t * std::cos(phi), s.R_t * std::sin(phi), s.z_b);
            const Vec3 r_dot(-s.R_t * std::sin(phi) * phi_dot, s.R_t * std::cos(phi) * phi_dot, 0.0);
            const Mat3 shape = r.squaredNorm() * Mat3::Identity() - r * r.transpose();
            J += m_s * shape;
            // |r| is constant on the cylinder, so only the dyad rotates.
            J_dot = params.fill_coefficient * mdot_prop * shape -
                    m_s * (r_dot * r.transpose() + r * r_dot.transpose());

            const double w_t = std::hypot(w.x(), w.y());
            const double omega_p = std::max(w_t, params.rate_floor);
            double restoring = 0.0;
            if (w_t >= params.rate_floor) {
                const double phi_eq = std::atan2(w.y(), w.x());
                restoring = omega_p * omega_p * std::sin(wrap_angle(phi_eq - phi));
            }
            phi_ddot = -2.0 * s.zeta * omega_p * phi_dot + restoring;
            phi_rate = phi_dot;
        }

        Vec3 torque = in.torque;
        if (base.slosh.enabled && params.slosh_model == SloshModel::ConstantTorque) torque += params.slosh_torque;

        const Vec3 H = J * w;
        const Vec3 w_dot = J.ldlt().solve(torque - w.cross(H) - J_dot * w);

        const Quat omega(0.0, w.x(), w.y(), w.z());
        const Quat qd = q * omega;

        const Quat qn = q.normalized();
        const Vec3 s_body = qn.conjugate() * base.tank.s_hat;
        const double T_dot = base.tank.k_sun * std::max(0.0, s_body.dot(base.tank.n_hat)) +
                             base.tank.k_cond * (base.tank.T_env - T);

        StateVec d;
        d << 0.5 * qd.w(), 0.5 * qd.x(), 0.5 * qd.y(), 0.5 * qd.z(), w_dot, phi_rate, phi_ddot, mdot_prop, T_dot, 0.0;
        return d;
    }
};

}  // namespace

double VehicleState::total_mass() const {
    double m = m_dry + m_prop;
    for (const auto& p : attached) m += p.mass;
    return m;
}

double tank_pressure(const TankState& tank, double T, double m_prop) {
    return tank.m_gas * tank.R_gas * T / tank.ullage_volume(m_prop);
}

Vec3 slosh_position(const SloshState& s) {
    return {s.R_t * std::cos(s.phi), s.R_t * std::sin(s.phi), s.z_b};
}

VehicleState make_initial_state(const PlantConfig& c) {
    require(c.m_dry > 0.0, "vehicle.m_dry");
    require(c.J_dry.allFinite() && is_spd(c.J_dry), "vehicle.J_dry");
    require(c.w0.allFinite(), "vehicle.spin_rate_deg");
    require(c.m_prop >= 0.0, "tank.m_prop");
    require(c.params.fill_coefficient >= 0.0 && c.params.fill_coefficient <= 1.0, "slosh.fill_coefficient");
    require(c.R_t > 0.0, "slosh.R_t");
    require(c.zeta >= 0.0, "slosh.zeta");
    require(c.T0 > 0.0, "tank.T");
    require(c.m_gas > 0.0, "tank.m_gas");
    require(c.R_gas > 0.0, "tank.R_gas");
    require(c.V_tank > 0.0, "tank.V_tank");
    require(c.rho_prop > 0.0, "tank.rho_prop");
    require(c.V_tank - c.m_prop / c.rho_prop > 0.0, "tank.V_tank");
    require(c.k_sun >= 0.0, "tank.k_sun");
    require(c.k_cond >= 0.0, "tank.k_cond");
    require(c.T_env > 0.0, "tank.T_env");
    require(c.s_hat.norm() > 0.0, "tank.sun_dir");
    require(c.n_hat.norm() > 0.0, "tank.normal");
    require(c.params.w_max > 0.0, "vehicle.w_max");
    require(c.params.dt_max > 0.0, "vehicle.dt_max");
    for (const auto& p : c.payloads) {
        require(p.mass > 0.0, "separation.mass");
        require(is_symmetric(p.inertia, 1e-9), "separation.inertia");
    }

    VehicleState s;
    s.t = 0.0;
    s.q = c.q0.normalized();
    s.w = c.w0;
    s.m_prop = c.m_prop;
    s.m_dry = c.m_dry;
    s.J_dry = c.J_dry;
    s.attached = c.payloads;

    s.slosh.R_t = c.R_t;
    s.slosh.z_b = c.z_b;
    s.slosh.zeta = c.zeta;
    s.slosh.phi = wrap_angle(c.phi0);
    s.slosh.enabled = c.params.slosh_model != SloshModel::None && c.m_prop > 0.0;
    s.slosh.m_s = s.slosh.enabled && c.params.slosh_model == SloshModel::Pendulum
                      ? c.params.fill_coefficient * c.m_prop
                      : 0.0;

    TankState& t = s.tank;
    t.T = c.T0;
    t.m_gas = c.m_gas;
    t.R_gas = c.R_gas;
    t.V_tank = c.V_tank;
    t.rho_prop = c.rho_prop;
    t.k_sun = c.k_sun;
    t.k_cond = c.k_cond;
    t.T_env = c.T_env;
    t.s_hat = c.s_hat.normalized();
    t.n_hat = c.n_hat.normalized();
    t.p = tank_pressure(t, t.T, s.m_prop);

    if (!is_spd(effective_inertia(s))) throw ConfigInvalid("vehicle.J_dry");
    return s;
}

Mat3 effective_inertia(const VehicleState& s) {
    Mat3 J = s.J_dry + payload_inertia(s.attached);
    if (s.slosh.enabled) J += slosh_inertia(s.slosh.m_s, s.slosh, s.slosh.phi);
    return J;
}

VehicleState step_dynamics(const VehicleState& state, const PlantInputs& inputs, double dt,
                           const PlantParams& params) {
    if (!(dt > 0.0) || dt > params.dt_max) throw ConfigInvalid("vehicle.dt");

    const Derivative f{state, inputs, params, state.J_dry + payload_inertia(state.attached)};

    StateVec y;
    y << state.q.w(), state.q.x(), state.q.y(), state.q.z(), state.w, state.slosh.phi, state.slosh.phi_dot,
        state.m_prop, state.tank.T, 0.0;

    const StateVec k1 = f(y);
    const StateVec k2 = f(y + 0.5 * dt * k1);
    const StateVec k3 = f(y + 0.5 * dt * k2);
    const StateVec k4 = f(y + dt * k3);
    const StateVec yn = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    VehicleState next = state;
    next.t = state.t + dt;
    next.q = Quat(yn[0], yn[1], yn[2], yn[3]).normalized();
    next.w = yn.segment<3>(4);

    const double m_prop = std::max(0.0, std::min(state.m_prop, yn[9]));
    next.m_consumed = state.m_consumed + (state.m_prop - m_prop);
    next.m_prop = m_prop;

    const double mass = state.total_mass();
    next.dv_total = state.dv_total + inputs.force * (dt / mass);

    if (next.slosh.enabled) {
        if (params.slosh_model == SloshModel::Pendulum) {
            next.slosh.phi = wrap_angle(yn[7]);
            next.slosh.phi_dot = yn[8];
            next.slosh.m_s = params.fill_coefficient * m_prop;
        }
        if (m_prop <= 0.0) {
            next.slosh.enabled = false;
            next.slosh.m_s = 0.0;
            next.slosh.phi_dot = 0.0;
        }
    }

    next.tank.T = yn[10];
    next.tank.p = tank_pressure(next.tank, next.tank.T, next.m_prop);

    if (!next.w.allFinite() || next.w.norm() > params.w_max) {
        throw NumericalDivergence("|w| exceeds " + std::to_string(params.w_max) + " rad/s at t=" +
                                  std::to_string(next.t));
    }
    return next;
}

VehicleState apply_impulsive_event(const VehicleState& state, const ImpulsiveEvent& e) {
    VehicleState next = state;
    next.m_dry = state.m_dry + e.dm;
    if (!(next.m_dry > 0.0) || !(next.total_mass() > 0.0)) throw MassUnderflow("dry mass would become " + std::to_string(next.m_dry) + " kg");
    next.J_dry = state.J_dry + e.dJ;
    if (!is_spd(next.J_dry) || !is_spd(effective_inertia(next))) throw InertiaNotSPD("inertia after event is not positive definite");
    next.w = state.w + e.dw;
    next.dv_total = state.dv_total + e.dv;
    return next;
}

bool detach_payload(VehicleState& state, const std::string& id, Payload* removed) {
    auto it = std::find_if(state.attached.begin(), state.attached.end(),
                           [&](const Payload& p) { return p.id == id; });
    if (it == state.attached.end()) return false;
    if (removed) *removed = *it;
    state.attached.erase(it);
    return true;
}

Vec3 inertial_momentum(const VehicleState& s) {
    return s.q * (effective_inertia(s) * s.w);
}

double nutation_angle(const VehicleState& s, const Vec3& spin_axis_body) {
    const Mat3 J = effective_inertia(s);
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(J);
    const Mat3 V = eig.eigenvectors();
    int best = 0;
    double best_dot = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = std::abs(V.col(i).dot(spin_axis_body));
        if (d > best_dot) {
            best_dot = d;
            best = i;
        }
    }
    const Vec3 H = J * s.w;
    if (H.norm() == 0.0) return 0.0;
    Vec3 axis = V.col(best);
    if (axis.dot(H) < 0.0) axis = -axis;
    return angle_between(axis, H);
}

}  // namespace upstage::plant
