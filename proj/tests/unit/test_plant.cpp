#include <cmath>

#include <gtest/gtest.h>

#include "gen.hpp"
#include "upstage/error.hpp"
#include "upstage/plant.hpp"

using namespace upstage;
using namespace upstage::plant;
using upstage::testing::for_all;
using upstage::testing::Gen;

namespace {

PlantConfig barbecue() {
    PlantConfig c;
    c.m_dry = 900.0;
    c.J_dry = Vec3(1100.0, 1150.0, 1500.0).asDiagonal();
    c.w0 = Vec3(0.0, 0.0, 3.0 * kDeg);
    c.m_prop = 300.0;
    c.params.fill_coefficient = 0.2;
    c.R_t = 0.8;
    c.z_b = -0.3;
    c.zeta = 0.1;
    c.m_gas = 2.0;
    c.V_tank = 0.5;
    return c;
}

// Independent torque-free Euler integrator for the fine-step oracle.
Vec3 reference_rate(const Mat3& J, Vec3 w, double dt, int steps) {
    const Mat3 Ji = J.inverse();
    auto f = [&](const Vec3& x) -> Vec3 { return Ji * (-x.cross(J * x)); };
    for (int i = 0; i < steps; ++i) {
        const Vec3 k1 = f(w), k2 = f(w + 0.5 * dt * k1), k3 = f(w + 0.5 * dt * k2), k4 = f(w + dt * k3);
        w += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return w;
}

}  // namespace

TEST(PlantInit, BarbecueSpinAboutZ) {
    const VehicleState s = make_initial_state(barbecue());
    EXPECT_NEAR(s.w.z(), 0.05236, 1e-5);
    EXPECT_EQ(s.w.x(), 0.0);
    EXPECT_EQ(s.w.y(), 0.0);
    EXPECT_TRUE(s.q.coeffs().isApprox(Quat::Identity().coeffs()));
}

TEST(PlantInit, EmptyTankDisablesSlosh) {
    PlantConfig c = barbecue();
    c.m_prop = 0.0;
    c.payloads.push_back({"P", 100.0, Vec3(10.0, 10.0, 5.0).asDiagonal()});
    const VehicleState s = make_initial_state(c);
    EXPECT_FALSE(s.slosh.enabled);
    EXPECT_EQ(effective_inertia(s), c.J_dry + c.payloads[0].inertia);
}

TEST(PlantInit, IdealGasPressure) {
    PlantConfig c = barbecue();
    c.V_tank = 1.6;
    c.m_prop = 80.0;
    c.rho_prop = 800.0;
    c.m_gas = 5.0;
    c.R_gas = 2077.0;
    c.T0 = 290.0;
    const VehicleState s = make_initial_state(c);
    EXPECT_NEAR(s.tank.p, 5.0 * 2077.0 * 290.0 / 1.5, 1e-6);
    EXPECT_NEAR(s.tank.p, 2.0078e6, 100.0);
}

TEST(PlantInit, RejectsInvalidFields) {
    PlantConfig c = barbecue();
    c.m_gas = -1.0;
    try {
        make_initial_state(c);
        FAIL();
    } catch (const ConfigInvalid& e) {
        EXPECT_STREQ(e.what(), "ConfigInvalid: tank.m_gas");
    }
    c = barbecue();
    c.m_prop = 1000.0;  // more liquid than the tank holds
    EXPECT_THROW(make_initial_state(c), ConfigInvalid);
    c = barbecue();
    c.J_dry(0, 0) = -1.0;
    EXPECT_THROW(make_initial_state(c), ConfigInvalid);
}

TEST(PlantInertia, SloshDisabledIsDry) {
    PlantConfig c = barbecue();
    c.params.slosh_model = SloshModel::None;
    const VehicleState s = make_initial_state(c);
    EXPECT_EQ(effective_inertia(s), c.J_dry);
}

TEST(PlantInertia, PointMassOracle) {
    VehicleState s;
    s.J_dry = Mat3::Zero();
    s.slosh = {0.0, 0.0, 100.0, 1.0, 0.5, 0.1, true};
    Mat3 expected;
    expected << 25, 0, -50, 0, 125, 0, -50, 0, 100;
    EXPECT_LT((effective_inertia(s) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PlantInertia, OppositeAzimuthFlipsProducts) {
    for_all(50, 1, [](Gen& g, int) {
        VehicleState a;
        a.J_dry = Mat3::Zero();
        a.slosh = {g.uniform(-3.0, 3.0), 0.0, g.uniform(1.0, 100.0), g.uniform(0.2, 2.0), g.uniform(-1.0, 1.0), 0.1, true};
        VehicleState b = a;
        b.slosh.phi = a.slosh.phi + std::numbers::pi;
        const Mat3 Ja = effective_inertia(a), Jb = effective_inertia(b);
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(Ja(i, i), Jb(i, i), 1e-9);
        EXPECT_NEAR(Ja(0, 2), -Jb(0, 2), 1e-9);
        EXPECT_NEAR(Ja(1, 2), -Jb(1, 2), 1e-9);
        EXPECT_NEAR(Ja(0, 1), Jb(0, 1), 1e-9);
    });
}

TEST(PlantStep, AtRestOnlyTemperatureMoves) {
    PlantConfig c = barbecue();
    c.w0.setZero();
    c.k_cond = 0.01;
    c.T_env = 300.0;
    const VehicleState s0 = make_initial_state(c);
    const VehicleState s1 = step_dynamics(s0, {}, 0.1, c.params);
    EXPECT_EQ(s1.w, s0.w);
    EXPECT_TRUE(s1.q.coeffs().isApprox(s0.q.coeffs(), 0.0));
    EXPECT_EQ(s1.slosh.phi, s0.slosh.phi);
    EXPECT_EQ(s1.m_prop, s0.m_prop);
    EXPECT_GT(s1.tank.T, s0.tank.T);
}

TEST(PlantStep, PrincipalSpinIsConstant) {
    PlantConfig c = barbecue();
    c.params.slosh_model = SloshModel::None;
    VehicleState s = make_initial_state(c);
    const Vec3 w0 = s.w;
    for (int i = 0; i < 1000; ++i) {
        s = step_dynamics(s, {}, 0.1, c.params);
        ASSERT_LT((s.w - w0).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(PlantStep, MatchesFineStepReference) {
    PlantConfig c = barbecue();
    c.params.slosh_model = SloshModel::None;
    c.J_dry = Vec3(1000.0, 1000.0, 800.0).asDiagonal();
    c.w0 = Vec3(0.01, 0.0, 0.05);
    VehicleState s = make_initial_state(c);
    for (int i = 0; i < 1000; ++i) s = step_dynamics(s, {}, 0.1, c.params);
    const Vec3 ref = reference_rate(c.J_dry, c.w0, 0.001, 100000);
    EXPECT_LT((s.w - ref).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PlantStep, Deterministic) {
    const PlantConfig c = barbecue();
    VehicleState a = make_initial_state(c), b = a;
    a.w.x() = b.w.x() = 0.003;
    for (int i = 0; i < 200; ++i) {
        a = step_dynamics(a, {Vec3(0.1, 0, 0), Vec3::Zero(), 0.01}, 0.1, c.params);
        b = step_dynamics(b, {Vec3(0.1, 0, 0), Vec3::Zero(), 0.01}, 0.1, c.params);
    }
    EXPECT_EQ(a.w, b.w);
    EXPECT_EQ(a.q.coeffs(), b.q.coeffs());
    EXPECT_EQ(a.slosh.phi, b.slosh.phi);
}

TEST(PlantStep, DivergenceThrows) {
    PlantConfig c = barbecue();
    c.params.w_max = 0.06;
    const VehicleState s = make_initial_state(c);
    EXPECT_THROW(step_dynamics(s, {Vec3(0, 0, 5000.0), Vec3::Zero(), 0.0}, 0.1, c.params), NumericalDivergence);
}

TEST(PlantProperty, MomentumConservedWithSlosh) {
    for_all(8, 2, [](Gen& g, int) {
        PlantConfig c = barbecue();
        c.J_dry = g.inertia(900.0, 1600.0);
        c.w0 = Vec3(g.uniform(-0.01, 0.01), g.uniform(-0.01, 0.01), g.uniform(0.03, 0.09));
        c.z_b = g.uniform(-0.5, 0.5);
        c.phi0 = g.uniform(-3.0, 3.0);
        VehicleState s = make_initial_state(c);
        const Vec3 H0 = inertial_momentum(s);
        for (int i = 0; i < 10000; ++i) s = step_dynamics(s, {}, 0.1, c.params);
        EXPECT_LT((inertial_momentum(s) - H0).norm() / H0.norm(), 1e-9);
    });
}

TEST(PlantProperty, QuaternionStaysUnit) {
    for_all(10, 3, [](Gen& g, int) {
        PlantConfig c = barbecue();
        c.q0 = g.quat();
        c.w0 = g.vec3(-0.1, 0.1);
        VehicleState s = make_initial_state(c);
        for (int i = 0; i < 3000; ++i) {
            s = step_dynamics(s, {g.vec3(-0.5, 0.5), Vec3::Zero(), 0.0}, 0.1, c.params);
            ASSERT_NEAR(s.q.norm(), 1.0, 1e-9);
        }
    });
}

TEST(PlantProperty, SloshRestPointStationary) {
    for_all(20, 4, [](Gen& g, int) {
        PlantConfig c = barbecue();
        c.w0 = Vec3(0.0, 0.0, g.uniform(-0.1, 0.1));
        c.phi0 = g.uniform(-3.0, 3.0);
        c.z_b = 0.0;  // bulge in the spin plane keeps z principal, so w_t stays 0
        VehicleState s = make_initial_state(c);
        const double phi0 = s.slosh.phi;
        for (int i = 0; i < 100; ++i) s = step_dynamics(s, {}, 0.1, c.params);
        EXPECT_EQ(s.slosh.phi, phi0);
        EXPECT_EQ(s.slosh.phi_dot, 0.0);
    });
}

TEST(PlantProperty, EffectiveInertiaSpd) {
    for_all(30, 5, [](Gen& g, int) {
        PlantConfig c = barbecue();
        c.J_dry = g.inertia(500.0, 2000.0);
        c.w0 = g.vec3(-0.05, 0.05);
        c.params.fill_coefficient = g.uniform(0.0, 1.0);
        c.z_b = g.uniform(-1.0, 1.0);
        VehicleState s = make_initial_state(c);
        for (int i = 0; i < 300; ++i) {
            s = step_dynamics(s, {g.vec3(-1, 1), Vec3::Zero(), g.uniform(0.0, 0.2)}, 0.1, c.params);
            ASSERT_EQ(Eigen::LLT<Mat3>(effective_inertia(s)).info(), Eigen::Success);
        }
    });
}

TEST(PlantProperty, PropellantAccounting) {
    for_all(10, 6, [](Gen& g, int) {
        PlantConfig c = barbecue();
        VehicleState s = make_initial_state(c);
        double integral = 0.0;
        for (int i = 0; i < 500; ++i) {
            const double mdot = g.coin() ? g.uniform(0.0, 1.5) : 0.0;
            const double before = s.m_prop;
            s = step_dynamics(s, {Vec3::Zero(), Vec3::Zero(), mdot}, 0.1, c.params);
            integral += std::min(before, mdot * 0.1);
            ASSERT_GE(s.m_prop, 0.0);
        }
        EXPECT_NEAR(s.m_consumed, integral, 1e-9);
        EXPECT_NEAR(s.m_prop + s.m_consumed, c.m_prop, 1e-9);
    });
}

TEST(PlantImpulse, IdentityAndAdditive) {
    const VehicleState s = make_initial_state(barbecue());
    const VehicleState same = apply_impulsive_event(s, {});
    EXPECT_EQ(same.w, s.w);
    EXPECT_EQ(same.m_dry, s.m_dry);
    EXPECT_EQ(same.J_dry, s.J_dry);

    VehicleState b = s;
    b.w = Vec3(0.0, 0.0, 0.05);
    const VehicleState out = apply_impulsive_event(b, {Vec3::Zero(), Vec3(0.0, 0.001, 0.0), 0.0, Mat3::Zero()});
    EXPECT_EQ(out.w, Vec3(0.0, 0.001, 0.05));
}

TEST(PlantImpulse, Underflow) {
    const VehicleState s = make_initial_state(barbecue());
    EXPECT_THROW(apply_impulsive_event(s, {Vec3::Zero(), Vec3::Zero(), -1000.0, Mat3::Zero()}), MassUnderflow);
    EXPECT_THROW(apply_impulsive_event(s, {Vec3::Zero(), Vec3::Zero(), 0.0, -2000.0 * Mat3::Identity()}), InertiaNotSPD);
}

TEST(PlantNutation, ZeroForPrincipalSpinAndGrowsWithTilt) {
    PlantConfig c = barbecue();
    c.params.slosh_model = SloshModel::None;
    VehicleState s = make_initial_state(c);
    EXPECT_NEAR(nutation_angle(s), 0.0, 1e-15);
    s.w = Vec3(0.001, 0.0, 0.05);
    const double expected = std::atan2(1100.0 * 0.001, 1500.0 * 0.05);
    EXPECT_NEAR(nutation_angle(s), expected, 1e-12);
}
