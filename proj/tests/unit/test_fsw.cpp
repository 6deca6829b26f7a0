#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gen.hpp"
#include "upstage/flight_software.hpp"
#include "upstage/fsw.hpp"
#include "upstage/runner.hpp"

using namespace upstage;
using namespace upstage::fsw;
using upstage::testing::for_all;
using upstage::testing::Gen;

namespace {

SensorFrame frame(std::uint64_t tick, const Vec3& w) {
    SensorFrame f;
    f.tick = tick;
    f.t = 0.1 * static_cast<double>(tick);
    f.w_meas = w;
    return f;
}

struct Sample {
    Vec3 w, w_dot, tau;
};

// Consistent Euler-equation data: tau = J w_dot + w x (J w).
std::vector<Sample> synthetic(const Mat3& J, int n, std::uint64_t seed) {
    Gen g(seed);
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s{g.vec3(-0.1, 0.1), g.vec3(-0.05, 0.05), Vec3::Zero()};
        s.tau = J * s.w_dot + s.w.cross(J * s.w);
        out.push_back(s);
    }
    return out;
}

InertiaEstimate prior(double p0) {
    InertiaEstimate e;
    e.theta = theta_from_inertia(Vec3(900.0, 900.0, 900.0).asDiagonal());
    e.P = p0 * Mat6::Identity();
    return e;
}

// Exhaustive enumeration oracle: every on/off pattern, on-time total
// chosen on [n MIB, n T] to minimise the terminal residual.
double enumerate_cost(const MpcAxisProblem& p) {
    const double err = std::abs(p.rate_ref - p.rate);
    const double kgain = p.authority / p.inertia;
    double best = std::numeric_limits<double>::infinity();
    for (unsigned pat = 0; pat < (1u << p.horizon); ++pat) {
        const int n = std::popcount(pat);
        double U = err / kgain;
        if (U < n * p.mib) U = n * p.mib;
        if (U > n * p.period) U = n * p.period;
        const double r = err - kgain * U;
        best = std::min(best, p.weights.w_count * n + p.weights.w_term * r * r);
    }
    return best;
}

MpcAxisProblem random_problem(Gen& g) {
    MpcAxisProblem p;
    p.inertia = g.uniform(200.0, 3000.0);
    p.authority = g.uniform(5.0, 80.0);
    p.mib = g.uniform(0.01, 0.05);
    p.period = 0.1;
    p.horizon = static_cast<int>(g.integer(1, 6));
    p.rate = g.uniform(-0.02, 0.02);
    p.rate_ref = g.coin() ? 0.0 : g.uniform(-0.02, 0.02);
    p.weights.w_count = g.uniform(0.1, 5.0);
    p.weights.w_term = std::pow(10.0, g.uniform(4.0, 9.0));
    return p;
}

}  // namespace

// ---------------------------------------------------------------- navigation

TEST(Navigator, StepResponseWithinOnePercentAfterFiveTau) {
    Navigator nav({0.1, 0.5});
    const Vec3 w(0.01, -0.02, 0.05);
    nav.update(frame(0, Vec3::Zero()));
    NavOutput o;
    for (int k = 1; k <= 25; ++k) o = nav.update(frame(k, w));
    EXPECT_LT((o.w_hat - w).cwiseAbs().maxCoeff(), 0.01 * w.cwiseAbs().maxCoeff());
}

TEST(Navigator, ZeroInputStaysZero) {
    Navigator nav;
    for (int k = 0; k < 50; ++k) {
        const NavOutput o = nav.update(frame(k, Vec3::Zero()));
        EXPECT_TRUE(o.w_hat.isZero(0.0));
        EXPECT_TRUE(o.w_dot_hat.isZero(0.0));
    }
}

TEST(Navigator, SpikeMovesEstimateByAtMostAlpha) {
    const double dt = 0.1, tau = 0.5, h = 3.0;
    Navigator nav({dt, tau});
    nav.update(frame(0, Vec3::Zero()));
    nav.update(frame(1, Vec3::Zero()));
    const NavOutput o = nav.update(frame(2, Vec3(h, 0.0, 0.0)));
    EXPECT_LE(std::abs(o.w_hat.x()), (1.0 - std::exp(-dt / tau)) * h + 1e-15);
    EXPECT_NEAR(o.w_hat.x(), (1.0 - std::exp(-dt / tau)) * h, 1e-15);
}

TEST(Navigator, TickGapHoldsAndFlags) {
    Navigator nav;
    nav.update(frame(0, Vec3(0.1, 0, 0)));
    const NavOutput before = nav.update(frame(1, Vec3(0.2, 0, 0)));
    const NavOutput gap = nav.update(frame(3, Vec3(5.0, 0, 0)));
    EXPECT_TRUE(gap.tick_gap);
    EXPECT_EQ(gap.w_hat, before.w_hat);
    EXPECT_FALSE(nav.update(frame(4, Vec3(0.2, 0, 0))).tick_gap);
}

// --------------------------------------------------------------- phase plane

TEST(PhasePlane, InsideInnerBandNoPulse) {
    PhasePlane pp;
    const auto out = pp.update(Vec3(1e-4, -1e-4, 0.0), Vec3::Zero());
    for (const auto& a : out) EXPECT_EQ(a, AxisPulse{});
}

TEST(PhasePlane, JustAboveOuterGivesMib) {
    PhasePlaneConfig c;
    PhasePlane pp(c);
    const auto out = pp.update(Vec3(c.outer * 1.0001, 0.0, 0.0), Vec3::Zero());
    EXPECT_EQ(out[0].sign, -1);
    EXPECT_EQ(out[0].on_time, c.mib);
}

TEST(PhasePlane, HysteresisTrace) {
    // outer 5e-4, inner 2e-4, k_d 1, k_t 30, MIB 0.03, period 0.1
    PhasePlane pp;
    const double s[5] = {3e-4, 6e-4, 3e-4, 1e-4, 3e-4};
    const AxisPulse expect[5] = {{0, 0.0}, {-1, 0.03}, {-1, 0.03}, {0, 0.0}, {0, 0.0}};
    for (int k = 0; k < 5; ++k) {
        const auto out = pp.update(Vec3(s[k], 0.0, 0.0), Vec3::Zero());
        EXPECT_EQ(out[0], expect[k]) << "sample " << k;
    }
}

TEST(PhasePlane, OnTimeSaturatesAtPeriodAndUsesRate) {
    PhasePlane pp;
    const auto out = pp.update(Vec3::Zero(), Vec3(0.0, -0.01, 0.0));
    EXPECT_EQ(out[1].sign, 1);
    EXPECT_EQ(out[1].on_time, 0.1);
}

// -------------------------------------------------------------------- sysid

TEST(Rls, NoiseFreeRecoveryWithinMicro) {
    const Mat3 J = Vec3(1000.0, 1000.0, 800.0).asDiagonal();
    InertiaEstimate e = prior(1e10);
    RlsConfig c;
    c.p0 = 1e10;
    c.cond_limit = 1e30;
    for (const auto& s : synthetic(J, 200, 21)) e = rls_update(e, s.w, s.w_dot, s.tau, c).estimate;
    EXPECT_LT((e.theta - theta_from_inertia(J)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Rls, ZeroExcitationLeavesThetaUnchanged) {
    const InertiaEstimate e = prior(1e4);
    const RlsResult r = rls_update(e, Vec3::Zero(), Vec3::Zero(), Vec3::Zero());
    EXPECT_EQ(r.estimate.theta, e.theta);
    EXPECT_EQ(r.estimate.P, e.P);
    EXPECT_FALSE(r.covariance_reset);
}

TEST(Rls, RecoversSloshProductOfInertia) {
    Mat3 J;
    J << 1000, 0, -50, 0, 1000, 0, -50, 0, 800;
    InertiaEstimate e = prior(1e4);
    for (const auto& s : synthetic(J, 200, 22)) e = rls_update(e, s.w, s.w_dot, s.tau).estimate;
    EXPECT_NEAR(e.theta[4], -50.0, 0.5);
}

TEST(Rls, ResidualNonIncreasingOnReplay) {
    Mat3 J;
    J << 1100, 3, -40, 3, 1150, 2, -40, 2, 1500;
    const auto data = synthetic(J, 30, 23);
    auto residual = [&](const Vec6& th) {
        double r = 0.0;
        for (const auto& s : data) r += (euler_regressor(s.w, s.w_dot) * th - s.tau).squaredNorm();
        return std::sqrt(r);
    };
    InertiaEstimate e = prior(1e4);
    double last = residual(e.theta);
    for (int pass = 0; pass < 3; ++pass)
        for (const auto& s : data) {
            e = rls_update(e, s.w, s.w_dot, s.tau).estimate;
            const double r = residual(e.theta);
            EXPECT_LE(r, last * (1.0 + 1e-9) + 1e-9);
            last = r;
        }
}

TEST(Rls, CovarianceBlowupResets) {
    InertiaEstimate e = prior(1e4);
    RlsConfig c;
    c.cond_limit = 10.0;
    const RlsResult r = rls_update(e, Vec3::Zero(), Vec3(1.0, 0, 0), Vec3(1000, 0, 0), c);
    EXPECT_TRUE(r.covariance_reset);
    EXPECT_EQ(r.estimate.P, c.p0 * Mat6::Identity());
}

TEST(RlsProperty, CovarianceStaysSpd) {
    for_all(20, 31, [](Gen& g, int) {
        InertiaEstimate e = prior(1e4);
        e.lambda = g.uniform(0.98, 1.0);
        const Mat3 J = g.inertia(500.0, 2000.0);
        for (const auto& s : synthetic(J, 100, g.bits())) {
            e = rls_update(e, s.w, s.w_dot, s.tau).estimate;
            ASSERT_TRUE(e.P.isApprox(e.P.transpose(), 1e-12));
            ASSERT_EQ(Eigen::LLT<Mat6>(e.P).info(), Eigen::Success);
            ASSERT_TRUE(inertia_from_theta(e.theta).isApprox(inertia_from_theta(e.theta).transpose()));
        }
    });
}

TEST(Regressor, MatchesEulerEquation) {
    for_all(50, 32, [](Gen& g, int) {
        const Mat3 J = g.inertia(100.0, 1000.0);
        const Vec3 w = g.vec3(-1, 1), wd = g.vec3(-1, 1);
        const Vec3 direct = J * wd + w.cross(J * w);
        EXPECT_LT((euler_regressor(w, wd) * theta_from_inertia(J) - direct).norm(), 1e-9 * (1.0 + direct.norm()));
    });
}

// ---------------------------------------------------------- principal axes

TEST(PrincipalAxes, SortedDiagonalIsIdentity) {
    const PrincipalFrame f = principal_axes(Vec3(100.0, 200.0, 300.0).asDiagonal());
    EXPECT_TRUE(f.R.isApprox(Mat3::Identity(), 1e-12));
    EXPECT_EQ(f.moments, Vec3(100.0, 200.0, 300.0));
}

TEST(PrincipalAxes, ClosedFormEigenvalues) {
    Mat3 J;
    J << 100, 0, -50, 0, 225, 0, -50, 0, 200;
    const PrincipalFrame f = principal_axes(J);
    EXPECT_NEAR(f.moments[0], 150.0 - 50.0 * std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(f.moments[1], 150.0 + 50.0 * std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(f.moments[2], 225.0, 1e-9);
    EXPECT_NEAR(f.moments[0], 79.29, 5e-3);
    EXPECT_NEAR(f.moments[1], 220.71, 5e-3);
}

TEST(PrincipalAxesProperty, ProperOrthogonalAndDiagonalizing) {
    for_all(200, 33, [](Gen& g, int) {
        const Mat3 J = g.inertia(10.0, 5000.0);
        const PrincipalFrame f = principal_axes(J);
        EXPECT_LT((f.R * f.R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(f.R.determinant(), 1.0, 1e-12);
        Mat3 D = f.R.transpose() * J * f.R;
        EXPECT_LT((D - Mat3(f.moments.asDiagonal())).cwiseAbs().maxCoeff(), 1e-9 * J.trace());
        EXPECT_LE(f.moments[0], f.moments[1]);
        EXPECT_LE(f.moments[1], f.moments[2]);
    });
}

TEST(PrincipalAxesProperty, ScaleInvariantProjectors) {
    for_all(200, 34, [](Gen& g, int) {
        const Mat3 J = g.inertia(10.0, 5000.0);
        const double c = std::pow(10.0, g.uniform(-3.0, 3.0));
        const PrincipalFrame a = principal_axes(J), b = principal_axes(c * J);
        for (int i = 0; i < 3; ++i) {
            const Mat3 Pa = a.R.col(i) * a.R.col(i).transpose();
            const Mat3 Pb = b.R.col(i) * b.R.col(i).transpose();
            EXPECT_LT((Pa - Pb).cwiseAbs().maxCoeff(), 1e-9);
        }
    });
}

// ---------------------------------------------------------------------- mpc

TEST(Mpc, AtReferenceNoPulses) {
    MpcAxisProblem p;
    p.rate = p.rate_ref = 0.05;
    const MpcAxisPlan plan = mpc_plan_axis(p);
    EXPECT_EQ(plan.pulses, 0);
    EXPECT_EQ(plan.pattern, 0u);
    for (double u : plan.on_times) EXPECT_EQ(u, 0.0);
}

TEST(Mpc, SinglePulseCancelsSmallError) {
    MpcAxisProblem p;
    p.inertia = 1000.0;
    p.authority = 40.0;
    p.rate = 0.0;
    p.rate_ref = 1.5e-3;
    const MpcAxisPlan plan = mpc_plan_axis(p);
    EXPECT_EQ(plan.pulses, 1);
    EXPECT_EQ(plan.pattern, 1u);
    EXPECT_EQ(plan.sign, 1);
    EXPECT_NEAR(plan.on_times[0], 0.0375, 1e-15);
    EXPECT_NEAR(40.0 * plan.on_times[0], 1000.0 * 1.5e-3, 1e-12);
    EXPECT_EQ(plan.cost, enumerate_cost(p));
}

TEST(Mpc, LargeErrorTwoSaturatedPulses) {
    MpcAxisProblem p;
    p.inertia = 1000.0;
    p.authority = 40.0;
    p.rate = 8e-3;
    p.rate_ref = 0.0;
    const MpcAxisPlan plan = mpc_plan_axis(p);
    EXPECT_EQ(plan.pulses, 2);
    EXPECT_EQ(plan.pattern, 3u);
    EXPECT_EQ(plan.sign, -1);
    EXPECT_DOUBLE_EQ(plan.on_times[0], 0.1);
    EXPECT_DOUBLE_EQ(plan.on_times[1], 0.1);
    EXPECT_FALSE(plan.infeasible);
}

TEST(Mpc, InfeasibleTargetFlagged) {
    MpcAxisProblem p;
    p.inertia = 1000.0;
    p.authority = 40.0;
    p.horizon = 2;
    p.rate = 0.1;
    const MpcAxisPlan plan = mpc_plan_axis(p);
    EXPECT_TRUE(plan.infeasible);
    EXPECT_EQ(plan.pulses, 2);
}

TEST(Mpc, ClosedFormMatchesDenseOnTimeSearch) {
    for_all(50, 35, [](Gen& g, int) {
        MpcAxisProblem p = random_problem(g);
        const int n = static_cast<int>(g.integer(1, 4));
        const double kgain = p.authority / p.inertia, err = std::abs(p.rate_ref - p.rate);
        double dense = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 20000; ++i) {
            const double U = n * (p.mib + (p.period - p.mib) * i / 20000.0);
            const double r = err - kgain * U;
            dense = std::min(dense, p.weights.w_count * n + p.weights.w_term * r * r);
        }
        const double closed = mpc_pattern_cost(p, n);
        EXPECT_LE(closed, dense * (1.0 + 1e-12));
        EXPECT_NEAR(closed, dense, 1e-3 * dense + 1e-9);
    });
}

TEST(MpcProperty, BranchAndBoundEqualsEnumeration) {
    for_all(1000, 36, [](Gen& g, int) {
        const MpcAxisProblem p = random_problem(g);
        const MpcAxisPlan plan = mpc_plan_axis(p);
        ASSERT_EQ(plan.cost, enumerate_cost(p));
    });
}

TEST(MpcProperty, PlansHonourMib) {
    for_all(500, 37, [](Gen& g, int) {
        const MpcAxisProblem p = random_problem(g);
        const MpcAxisPlan plan = mpc_plan_axis(p);
        int n = 0;
        for (double u : plan.on_times) {
            EXPECT_TRUE(u == 0.0 || (u >= p.mib && u <= p.period)) << u;
            n += u > 0.0;
        }
        EXPECT_EQ(n, plan.pulses);
        // earliest-first tie break: the active set is a prefix
        EXPECT_EQ(plan.pattern, (1u << plan.pulses) - 1u);
    });
}

TEST(MpcProperty, AllocationHonoursMib) {
    std::vector<ThrusterGeometry> geo;
    for (int a = 0; a < 3; ++a)
        for (int s : {-1, 1}) {
            ThrusterGeometry t;
            t.r = Vec3::Unit((a + 1) % 3);
            t.d_hat = s * Vec3::Unit((a + 2) % 3);
            t.F_ref = 5.0;
            geo.push_back(t);
        }
    const ChannelMap map = build_channels(geo);
    for_all(500, 38, [&](Gen& g, int) {
        const Vec3 h = g.vec3(-2.0, 2.0) * (g.coin() ? 1.0 : 0.01);
        for (const auto& p : allocate_impulse(h, map, g.uniform(0.5, 1.5), 0.1))
            EXPECT_TRUE(p.on_time == 0.0 || (p.on_time >= 0.03 && p.on_time <= 0.1)) << p.on_time;
    });
}

// ----------------------------------------------------------- executive

namespace {

std::vector<SensorFrame> random_frames(Gen& g, int n) {
    std::vector<SensorFrame> out;
    Vec3 w(0.0, 0.0, 0.05);
    double m = 300.0;
    for (int k = 0; k < n; ++k) {
        w += g.vec3(-1e-3, 1e-3);
        m -= g.uniform(0.0, 0.01);
        SensorFrame f = frame(k, w);
        f.q_meas = g.quat();
        f.p_tank = g.uniform(1.5e6, 2.5e6);
        f.m_prop_meas = m;
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST(FlightSoftware, ReplayIsBitExact) {
    const Scenario sc = upstage::testing::demo_source().build();
    Gen g(40);
    const auto frames = random_frames(g, 400);
    FlightSoftware a = make_flight_software(sc), b = make_flight_software(sc);
    for (const auto& f : frames) ASSERT_EQ(a.step(f), b.step(f));
}

TEST(FlightSoftwareProperty, EveryFrameHonoursMib) {
    const Scenario base = upstage::testing::demo_source().build();
    for (auto mode : {seq::ControllerMode::PhasePlane, seq::ControllerMode::Mpc, seq::ControllerMode::Adaptive}) {
        for_all(5, 41 + static_cast<unsigned>(mode), [&](Gen& g, int) {
            Scenario sc = base;
            sc.fsw.mode_override = mode;
            FlightSoftware fsw = make_flight_software(sc);
            for (const auto& f : random_frames(g, 200)) {
                const ActuatorFrame a = fsw.step(f);
                ASSERT_EQ(a.tick, f.tick);
                for (std::size_t i = 0; i < a.on_times.size(); ++i) {
                    const double u = a.on_times[i];
                    ASSERT_TRUE(u == 0.0 || (u >= sc.thrusters[i].mib - 1e-15 && u <= sc.fsw.dt + 1e-15)) << u;
                }
            }
        });
    }
}
