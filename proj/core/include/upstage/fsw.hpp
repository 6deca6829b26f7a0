#pragma once

// Flight-software algorithms: rate navigation, phase-plane baseline,
// recursive inertia identification, principal-axis transform and the
// pulse-count minimizing rate MPC.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "upstage/frames.hpp"
#include "upstage/math.hpp"

namespace upstage::fsw {

// ---------------------------------------------------------------- navigation

struct NavConfig {
    double dt = 0.1;   // FSW period, s
    double tau = 0.5;  // low-pass time constant, s
};

struct NavOutput {
    Vec3 w_hat = Vec3::Zero();
    Vec3 w_hat_prev = Vec3::Zero();
    Vec3 w_dot_hat = Vec3::Zero();
    Quat q_hat = Quat::Identity();
    bool tick_gap = false;
};

/// First-order low-pass on gyro rates; the rate derivative is the backward
/// difference of the filtered rate. Initialized from the first frame.
class Navigator {
public:
    explicit Navigator(NavConfig config = {});

    NavOutput update(const SensorFrame& frame);
    double alpha() const { return alpha_; }
    const NavOutput& last() const { return out_; }

private:
    NavConfig config_;
    double alpha_;
    bool initialized_ = false;
    std::uint64_t last_tick_ = 0;
    NavOutput out_;
};

// --------------------------------------------------------------- phase plane

struct PhasePlaneConfig {
    double k_d = 1.0;            // rate weight in the switching function
    double outer = 5e-4;         // outer deadband
    double inner = 2e-4;         // inner deadband
    double k_t = 30.0;           // on-time per unit switching function, s
    double mib = 0.03;           // s
    double period = 0.1;         // FSW period, s
};

struct AxisPulse {
    int sign = 0;         // torque direction, -1/0/+1
    double on_time = 0.0;

    bool operator==(const AxisPulse&) const = default;
};

/// Per-axis Schmitt trigger on s = att_err + k_d * rate_err, firing against
/// sign(s) with on-time clamp(|s| k_t, MIB, period).
class PhasePlane {
public:
    explicit PhasePlane(PhasePlaneConfig config = {}) : config_(config) {}

    std::array<AxisPulse, 3> update(const Vec3& att_err, const Vec3& rate_err);
    void reset() { firing_ = {false, false, false}; }
    const PhasePlaneConfig& config() const { return config_; }

private:
    PhasePlaneConfig config_;
    std::array<bool, 3> firing_{false, false, false};
};

// -------------------------------------------------------------------- sysid

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Regressor = Eigen::Matrix<double, 3, 6>;

/// theta = (Jxx, Jyy, Jzz, Jxy, Jxz, Jyz)
struct InertiaEstimate {
    Vec6 theta = Vec6::Zero();
    Mat6 P = Mat6::Identity();
    double lambda = 1.0;
};

struct RlsConfig {
    double lambda = 1.0;
    double p0 = 1e4;             // initial covariance, P0 = p0 I
    double cond_limit = 1e12;
};

Vec6 theta_from_inertia(const Mat3& J);
Mat3 inertia_from_theta(const Vec6& theta);

/// L(v) with J v = L(v) theta.
Regressor inertia_action(const Vec3& v);

/// Euler-equation regressor: J w_dot + w x (J w) = Phi(w, w_dot) theta.
Regressor euler_regressor(const Vec3& w, const Vec3& w_dot);

struct RlsResult {
    InertiaEstimate estimate;
    bool covariance_reset = false;
};

/// One recursive least-squares step with forgetting. When cond(P) exceeds
/// the limit, P is reset to p0 I and the reset is flagged.
RlsResult rls_update(const InertiaEstimate& est, const Vec3& w, const Vec3& w_dot, const Vec3& tau,
                     const RlsConfig& config = {});

// ---------------------------------------------------------- principal axes

struct PrincipalFrame {
    Mat3 R = Mat3::Identity();   // columns: principal axes in body coordinates
    Vec3 moments = Vec3::Zero(); // ascending
};

/// Symmetric eigendecomposition, ascending moments, det(R) = +1.
PrincipalFrame principal_axes(const Mat3& J);

// ---------------------------------------------------------------------- mpc

struct MpcWeights {
    double w_count = 1.0;   // per pulse
    double w_term = 1e8;    // per (rad/s)^2 terminal rate error
    double terminal_box = 2e-4;  // rad/s
};

/// Single principal axis, rate-level double integrator.
struct MpcAxisProblem {
    double rate = 0.0;
    double rate_ref = 0.0;
    double inertia = 1.0;    // kg m^2
    double authority = 1.0;  // torque, N m
    double mib = 0.03;
    double period = 0.1;
    int horizon = 6;
    MpcWeights weights;
};

struct MpcAxisPlan {
    std::vector<double> on_times;  // per step, 0 or in [MIB, period]
    int sign = 0;
    unsigned pattern = 0;          // bit k set: pulse at step k
    int pulses = 0;
    double cost = 0.0;
    bool infeasible = false;
};

inline constexpr int kMaxHorizon = 8;

/// Cost of firing `pulses` times with the continuous on-times solved in
/// closed form: total on-time U = clamp(need, n MIB, n T).
double mpc_pattern_cost(const MpcAxisProblem& problem, int pulses, double* total_on_time = nullptr);

/// Exact branch-and-bound over the on/off pattern. Ties go to fewer
/// pulses, then earlier pulses.
MpcAxisPlan mpc_plan_axis(const MpcAxisProblem& problem);

struct TorqueChannel {
    std::vector<std::size_t> thrusters;
    double authority = 0.0;  // N m at reference pressure
    double mib = 0.0;
};

/// Torque channels per body axis and direction: channels[axis][0] negative,
/// channels[axis][1] positive.
struct ChannelMap {
    std::array<std::array<TorqueChannel, 2>, 3> channels;
    double min_authority() const;
};

struct ThrusterGeometry {
    Vec3 r = Vec3::Zero();
    Vec3 d_hat = Vec3::UnitZ();
    double F_ref = 1.0;
    double p_ref = 1.0;
    double mib = 0.03;
};

/// Groups thrusters by the body axis their torque dominates.
ChannelMap build_channels(const std::vector<ThrusterGeometry>& thrusters);

struct MpcPlan {
    PrincipalFrame frame;
    std::array<MpcAxisPlan, 3> axes;
    Vec3 first_impulse_body = Vec3::Zero();  // N m s to deliver in the coming period
    bool infeasible = false;
};

/// Plans each principal axis of J_hat independently toward w_ref.
MpcPlan mpc_plan(const Vec3& w_hat, const Vec3& w_ref, const Mat3& J_hat, double authority, double mib,
                 double period, int horizon, const MpcWeights& weights);

/// Maps a body impulse onto channel on-times honouring the MIB contract:
/// results are 0 or in [MIB, period].
std::array<AxisPulse, 3> allocate_impulse(const Vec3& impulse_body, const ChannelMap& channels, double pressure_scale,
                                          double period);

}  // namespace upstage::fsw
