#include "upstage/fsw.hpp"

#include <algorithm>
#include <cmath>

namespace upstage::fsw {

// ---------------------------------------------------------------- navigation

Navigator::Navigator(NavConfig config) : config_(config), alpha_(1.0 - std::exp(-config.dt / config.tau)) {}

NavOutput Navigator::update(const SensorFrame& f) {
    if (!initialized_) {
        initialized_ = true;
        last_tick_ = f.tick;
        out_.w_hat = f.w_meas;
        out_.w_hat_prev = f.w_meas;
        out_.w_dot_hat.setZero();
        out_.q_hat = f.q_meas.normalized();
        out_.tick_gap = false;
        return out_;
    }
    if (f.tick != last_tick_ + 1) {
        last_tick_ = f.tick;
        out_.tick_gap = true;
        return out_;
    }
    last_tick_ = f.tick;
    out_.tick_gap = false;
    out_.w_hat_prev = out_.w_hat;
    out_.w_hat = out_.w_hat + alpha_ * (f.w_meas - out_.w_hat);
    out_.w_dot_hat = (out_.w_hat - out_.w_hat_prev) / config_.dt;
    out_.q_hat = f.q_meas.normalized();
    return out_;
}

// --------------------------------------------------------------- phase plane

std::array<AxisPulse, 3> PhasePlane::update(const Vec3& att_err, const Vec3& rate_err) {
    std::array<AxisPulse, 3> out{};
    for (int a = 0; a < 3; ++a) {
        const double s = att_err[a] + config_.k_d * rate_err[a];
        const double mag = std::abs(s);
        if (mag > config_.outer)
            firing_[a] = true;
        else if (mag < config_.inner)
            firing_[a] = false;
        if (firing_[a] && s != 0.0) {
            out[a].sign = s > 0.0 ? -1 : 1;
            out[a].on_time = std::clamp(mag * config_.k_t, config_.mib, config_.period);
        }
    }
    return out;
}

// -------------------------------------------------------------------- sysid

Vec6 theta_from_inertia(const Mat3& J) {
    Vec6 t;
    t << J(0, 0), J(1, 1), J(2, 2), J(0, 1), J(0, 2), J(1, 2);
    return t;
}

Mat3 inertia_from_theta(const Vec6& t) {
    Mat3 J;
    J << t[0], t[3], t[4],
         t[3], t[1], t[5],
         t[4], t[5], t[2];
    return J;
}

Regressor inertia_action(const Vec3& v) {
    Regressor L;
    L << v.x(), 0.0, 0.0, v.y(), v.z(), 0.0,
         0.0, v.y(), 0.0, v.x(), 0.0, v.z(),
         0.0, 0.0, v.z(), 0.0, v.x(), v.y();
    return L;
}

Regressor euler_regressor(const Vec3& w, const Vec3& w_dot) {
    Mat3 skew;
    skew << 0.0, -w.z(), w.y(),
            w.z(), 0.0, -w.x(),
            -w.y(), w.x(), 0.0;
    return inertia_action(w_dot) + skew * inertia_action(w);
}

RlsResult rls_update(const InertiaEstimate& est, const Vec3& w, const Vec3& w_dot, const Vec3& tau,
                     const RlsConfig& config) {
    RlsResult r{est, false};
    const Regressor Phi = euler_regressor(w, w_dot);
    if (Phi.isZero(0.0)) return r;

    const double lambda = est.lambda;
    const Mat6& P = est.P;
    const Eigen::Matrix<double, 6, 3> PPhiT = P * Phi.transpose();
    const Mat3 S = lambda * Mat3::Identity() + Phi * PPhiT;
    const Eigen::Matrix<double, 6, 3> K = PPhiT * S.inverse();

    r.estimate.theta = est.theta + K * (tau - Phi * est.theta);
    // Joseph form with measurement weight lambda, then forgetting.
    const Mat6 IKH = Mat6::Identity() - K * Phi;
    Mat6 Pn = (IKH * P * IKH.transpose() + lambda * K * K.transpose()) / lambda;
    Pn = 0.5 * (Pn + Pn.transpose());

    const Eigen::SelfAdjointEigenSolver<Mat6> eig(Pn, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()[0];
    const double hi = eig.eigenvalues()[5];
    if (!(lo > 0.0) || hi / lo > config.cond_limit) {
        Pn = config.p0 * Mat6::Identity();
        r.covariance_reset = true;
    }
    r.estimate.P = Pn;
    return r;
}

// ---------------------------------------------------------- principal axes

PrincipalFrame principal_axes(const Mat3& J) {
    const Mat3 Js = 0.5 * (J + J.transpose());
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(Js);
    PrincipalFrame f;
    f.R = eig.eigenvectors();
    f.moments = eig.eigenvalues();
    if (f.R.determinant() < 0.0) f.R.col(2) = -f.R.col(2);
    // keep each axis pointing into the positive half of its closest body axis
    for (int i = 0; i < 2; ++i) {
        Eigen::Index k;
        f.R.col(i).cwiseAbs().maxCoeff(&k);
        if (f.R(k, i) < 0.0) {
            f.R.col(i) = -f.R.col(i);
            f.R.col(2) = -f.R.col(2);
        }
    }
    return f;
}

// ---------------------------------------------------------------------- mpc

namespace {

double rate_gain(const MpcAxisProblem& p) { return p.authority / p.inertia; }

// Terminal cost for a total on-time U drawn from [lo, hi] as close to the
// requirement as possible.
double terminal_cost(const MpcAxisProblem& p, double lo, double hi, double* total) {
    const double err = std::abs(p.rate_ref - p.rate);
    const double k = rate_gain(p);
    const double need = err / k;
    const double U = std::clamp(need, lo, hi);
    if (total) *total = U;
    const double residual = err - k * U;
    return p.weights.w_term * residual * residual;
}

// true if pattern a has earlier pulses than b (first differing step fires in a)
bool earlier(unsigned a, unsigned b, int horizon) {
    for (int k = 0; k < horizon; ++k) {
        const bool ba = (a >> k) & 1u;
        const bool bb = (b >> k) & 1u;
        if (ba != bb) return ba;
    }
    return false;
}

struct Incumbent {
    double cost = 0.0;
    int pulses = 0;
    unsigned pattern = 0;
    bool set = false;
};

bool better(double cost, int pulses, unsigned pattern, const Incumbent& inc, int horizon) {
    if (!inc.set) return true;
    if (cost != inc.cost) return cost < inc.cost;
    if (pulses != inc.pulses) return pulses < inc.pulses;
    return earlier(pattern, inc.pattern, horizon);
}

void branch(const MpcAxisProblem& p, int step, int pulses, unsigned pattern, Incumbent& inc) {
    const int remaining = p.horizon - step;
    const double bound = p.weights.w_count * pulses +
                         terminal_cost(p, pulses * p.mib, (pulses + remaining) * p.period, nullptr);
    if (inc.set && bound > inc.cost) return;
    if (remaining == 0) {
        const double c = mpc_pattern_cost(p, pulses);
        if (better(c, pulses, pattern, inc, p.horizon)) inc = {c, pulses, pattern, true};
        return;
    }
    branch(p, step + 1, pulses + 1, pattern | (1u << step), inc);
    branch(p, step + 1, pulses, pattern, inc);
}

}  // namespace

double mpc_pattern_cost(const MpcAxisProblem& p, int pulses, double* total_on_time) {
    return p.weights.w_count * pulses + terminal_cost(p, pulses * p.mib, pulses * p.period, total_on_time);
}

MpcAxisPlan mpc_plan_axis(const MpcAxisProblem& p) {
    MpcAxisPlan plan;
    const int N = std::clamp(p.horizon, 0, kMaxHorizon);
    MpcAxisProblem q = p;
    q.horizon = N;
    plan.on_times.assign(static_cast<std::size_t>(N), 0.0);

    const double err = p.rate_ref - p.rate;
    plan.sign = err > 0.0 ? 1 : (err < 0.0 ? -1 : 0);

    Incumbent inc;
    branch(q, 0, 0, 0u, inc);
    plan.cost = inc.cost;
    plan.pattern = inc.pattern;
    plan.pulses = inc.pulses;

    double U = 0.0;
    mpc_pattern_cost(q, inc.pulses, &U);
    for (int k = 0; k < N; ++k) {
        if ((inc.pattern >> k) & 1u) plan.on_times[k] = std::clamp(U / inc.pulses, p.mib, p.period);
    }
    if (plan.pulses == 0) plan.sign = 0;

    const double best_residual = std::abs(err) - rate_gain(q) * N * q.period;
    plan.infeasible = best_residual > p.weights.terminal_box;
    return plan;
}

double ChannelMap::min_authority() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& axis : channels)
        for (const auto& ch : axis)
            if (!ch.thrusters.empty()) m = std::min(m, ch.authority);
    return std::isfinite(m) ? m : 0.0;
}

ChannelMap build_channels(const std::vector<ThrusterGeometry>& thrusters) {
    ChannelMap map;
    for (std::size_t i = 0; i < thrusters.size(); ++i) {
        const Vec3 tq = thrusters[i].r.cross(thrusters[i].d_hat) * thrusters[i].F_ref;
        if (tq.norm() == 0.0) continue;
        Eigen::Index a;
        tq.cwiseAbs().maxCoeff(&a);
        if (std::abs(tq[a]) < 0.5 * tq.norm()) continue;
        TorqueChannel& ch = map.channels[a][tq[a] > 0.0 ? 1 : 0];
        ch.thrusters.push_back(i);
        ch.authority += std::abs(tq[a]);
        ch.mib = std::max(ch.mib, thrusters[i].mib);
    }
    return map;
}

MpcPlan mpc_plan(const Vec3& w_hat, const Vec3& w_ref, const Mat3& J_hat, double authority, double mib,
                 double period, int horizon, const MpcWeights& weights) {
    MpcPlan plan;
    plan.frame = principal_axes(J_hat);
    const Vec3 w_p = plan.frame.R.transpose() * w_hat;
    const Vec3 ref_p = plan.frame.R.transpose() * w_ref;
    Vec3 impulse_p = Vec3::Zero();
    for (int i = 0; i < 3; ++i) {
        MpcAxisProblem prob;
        prob.rate = w_p[i];
        prob.rate_ref = ref_p[i];
        prob.inertia = plan.frame.moments[i];
        prob.authority = authority;
        prob.mib = mib;
        prob.period = period;
        prob.horizon = horizon;
        prob.weights = weights;
        plan.axes[i] = mpc_plan_axis(prob);
        plan.infeasible = plan.infeasible || plan.axes[i].infeasible;
        if (!plan.axes[i].on_times.empty())
            impulse_p[i] = plan.axes[i].sign * authority * plan.axes[i].on_times[0];
    }
    plan.first_impulse_body = plan.frame.R * impulse_p;
    return plan;
}

std::array<AxisPulse, 3> allocate_impulse(const Vec3& h, const ChannelMap& map, double pressure_scale, double period) {
    std::array<AxisPulse, 3> out{};
    for (int a = 0; a < 3; ++a) {
        if (h[a] == 0.0) continue;
        const int dir = h[a] > 0.0 ? 1 : 0;
        const TorqueChannel& ch = map.channels[a][dir];
        if (ch.thrusters.empty() || ch.authority <= 0.0) continue;
        double u = std::abs(h[a]) / (ch.authority * pressure_scale);
        if (u < ch.mib) u = (u >= 0.5 * ch.mib) ? ch.mib : 0.0;
        u = std::min(u, period);
        if (u > 0.0) out[a] = {dir == 1 ? 1 : -1, u};
    }
    return out;
}

}  // namespace upstage::fsw
