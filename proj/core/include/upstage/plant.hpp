#pragma once

// Coupled rigid-body / slosh-bulge / tank-pressure dynamics of the stage.

#include <string>
#include <vector>

#include "upstage/math.hpp"

namespace upstage::plant {

enum class SloshModel {
    Pendulum,        // bulge azimuth pendulum folded into J(t)
    ConstantTorque,  // legacy practice: a constant body-fixed torque, J without slosh
    None,
};

struct SloshState {
    double phi = 0.0;      // bulge azimuth in body x-y plane, (-pi, pi]
    double phi_dot = 0.0;  // rad/s
    double m_s = 0.0;      // slosh mass, kg (fill coefficient x m_prop)
    double R_t = 1.0;      // tank wall radius, m
    double z_b = 0.0;      // bulge axial offset, m
    double zeta = 0.1;     // damping ratio
    bool enabled = false;
};

struct TankState {
    double T = 290.0;  // pressurant temperature, K
    double p = 0.0;    // pressure, Pa (cached from the ideal-gas law)
    double m_gas = 0.0;
    double R_gas = 2077.0;
    double V_tank = 1.0;
    double rho_prop = 1000.0;
    double k_sun = 0.0;   // K/s at normal sun incidence
    double k_cond = 0.0;  // 1/s
    double T_env = 290.0;
    Vec3 s_hat = Vec3::UnitX();  // sun direction, inertial
    Vec3 n_hat = Vec3::UnitX();  // tank normal, body

    double ullage_volume(double m_prop) const { return V_tank - m_prop / rho_prop; }
};

/// Payload still attached to the stage, with its inertia contribution
/// expressed about the stage axes.
struct Payload {
    std::string id;
    double mass = 0.0;
    Mat3 inertia = Mat3::Zero();
};

struct VehicleState {
    double t = 0.0;
    Quat q = Quat::Identity();  // body -> inertial
    Vec3 w = Vec3::Zero();      // body rate, rad/s
    double m_prop = 0.0;
    double m_dry = 0.0;
    Mat3 J_dry = Mat3::Identity();
    SloshState slosh;
    TankState tank;
    std::vector<Payload> attached;
    Vec3 dv_total = Vec3::Zero();  // accumulated body-frame delta-v from impulses and forces
    double m_consumed = 0.0;       // propellant consumed so far, kg

    double total_mass() const;
};

struct PlantParams {
    SloshModel slosh_model = SloshModel::Pendulum;
    double fill_coefficient = 0.4;
    Vec3 slosh_torque = Vec3::Zero();  // used by SloshModel::ConstantTorque
    double rate_floor = 1e-6;          // transverse-rate floor, rad/s
    double w_max = 10.0;               // divergence bound on |w|, rad/s
    double dt_max = 0.1;
};

/// Everything the file-level [vehicle], [slosh] and [tank] sections carry,
/// already converted to SI (angles in radians).
struct PlantConfig {
    PlantParams params;
    double m_dry = 0.0;
    Mat3 J_dry = Mat3::Identity();
    Quat q0 = Quat::Identity();
    Vec3 w0 = Vec3::Zero();
    double m_prop = 0.0;
    // slosh
    double R_t = 1.0;
    double z_b = 0.0;
    double zeta = 0.1;
    double phi0 = 0.0;
    // tank
    double T0 = 290.0;
    double m_gas = 0.0;
    double R_gas = 2077.0;
    double V_tank = 1.0;
    double rho_prop = 1000.0;
    double k_sun = 0.0;
    double k_cond = 0.0;
    double T_env = 290.0;
    Vec3 s_hat = Vec3::UnitX();
    Vec3 n_hat = Vec3::UnitX();
    std::vector<Payload> payloads;
};

/// External inputs held constant over one step.
struct PlantInputs {
    Vec3 torque = Vec3::Zero();  // body, N m
    Vec3 force = Vec3::Zero();   // body, N (only accumulated into dv_total)
    double mdot = 0.0;           // propellant outflow, kg/s (>= 0)
};

struct ImpulsiveEvent {
    Vec3 dv = Vec3::Zero();
    Vec3 dw = Vec3::Zero();
    double dm = 0.0;  // change of dry mass, kg
    Mat3 dJ = Mat3::Zero();
};

/// Validates the configuration and builds the initial state. Throws
/// ConfigInvalid naming the offending field.
VehicleState make_initial_state(const PlantConfig& config);

/// J_dry + slosh point mass + attached payload contributions.
Mat3 effective_inertia(const VehicleState& state);

/// Slosh bulge position in the body frame.
Vec3 slosh_position(const SloshState& slosh);

/// Ideal-gas pressure for the given temperature and propellant load.
double tank_pressure(const TankState& tank, double T, double m_prop);

/// One classical RK4 step. Throws NumericalDivergence when |w| exceeds
/// params.w_max after the step.
VehicleState step_dynamics(const VehicleState& state, const PlantInputs& inputs, double dt,
                           const PlantParams& params);

/// Discrete update of rates and mass properties. Throws MassUnderflow or
/// InertiaNotSPD.
VehicleState apply_impulsive_event(const VehicleState& state, const ImpulsiveEvent& event);

/// Removes a payload from the attached set. Returns false if it was not attached.
bool detach_payload(VehicleState& state, const std::string& id, Payload* removed = nullptr);

/// Inertial angular momentum R(q) J w.
Vec3 inertial_momentum(const VehicleState& state);

/// Half-cone angle between the angular momentum and the principal axis
/// closest to the nominal spin axis (body), radians.
double nutation_angle(const VehicleState& state, const Vec3& spin_axis_body = Vec3::UnitZ());

}  // namespace upstage::plant
