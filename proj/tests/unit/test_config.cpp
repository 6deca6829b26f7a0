#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "upstage/config.hpp"
#include "upstage/error.hpp"

using namespace upstage;
using upstage::testing::demo_source;
using upstage::testing::demo_with;
using upstage::testing::minimal_scenario;

namespace {

Scenario from_text(const std::string& text) { return ScenarioSource(text, upstage::testing::scenario_dir()).build(); }

std::string what_of(const std::string& text) {
    try {
        from_text(text);
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, DemoLoads) {
    const Scenario sc = demo_source().build();
    EXPECT_EQ(sc.thrusters.size(), 12u);
    EXPECT_EQ(sc.device_ids(), (std::vector<std::string>{"PL1", "STRUCT", "PL2"}));
    EXPECT_EQ(sc.monitors.size(), 6u);
    EXPECT_NEAR(sc.plant.w0.z(), 3.0 * kDeg, 1e-15);
    EXPECT_DOUBLE_EQ(sc.fsw.dt, 0.1);
    EXPECT_FALSE(sc.sequence_text.empty());
    EXPECT_EQ(sc.parse_program().states.size(), 7u);
}

TEST(Config, MinimalScenarioDefaults) {
    const Scenario sc = from_text(minimal_scenario());
    EXPECT_EQ(sc.thrusters.size(), 2u);
    EXPECT_TRUE(sc.devices.empty());
    EXPECT_DOUBLE_EQ(sc.sim.duration, 10.0);
    EXPECT_EQ(sc.sim.seed, 1u);
}

TEST(Config, AnglesConvertedAtBoundary) {
    const Scenario sc = demo_source().build();
    for (const auto& m : sc.monitors)
        if (m.id == "M_NUT") {
            EXPECT_NEAR(std::get<vnv::ThresholdMonitor>(m.kind).limit, 2.0 * kDeg, 1e-15);
        }
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_NE(what_of(minimal_scenario() + "\n[pil]\nbogus = 1\n").find("ConfigInvalid"), std::string::npos);
    EXPECT_NE(what_of(minimal_scenario() + "\n[bogus]\nx = 1\n").find("ConfigInvalid"), std::string::npos);
}

TEST(Config, NegativeGasMassNamesKey) {
    ScenarioSource s = demo_source();
    s.set("tank.m_gas", -1.0);
    try {
        s.build();
        FAIL();
    } catch (const ConfigInvalid& e) {
        EXPECT_EQ(std::string(e.what()).rfind("ConfigInvalid: tank.m_gas", 0), 0u);
    }
}

TEST(Config, OverridesApplyAndDoNotLeak) {
    ScenarioSource s = demo_source();
    ScenarioSource t = s;
    t.set("slosh.fill_coefficient", 0.35);
    t.set_assignment("thruster[2].F_ref=7.5");
    t.set_assignment("pil.transport=socket");
    const Scenario a = t.build();
    EXPECT_DOUBLE_EQ(a.plant.params.fill_coefficient, 0.35);
    EXPECT_DOUBLE_EQ(a.thrusters[2].F_ref, 7.5);
    EXPECT_EQ(a.pil.transport, Transport::Socket);
    const Scenario b = s.build();
    EXPECT_DOUBLE_EQ(b.plant.params.fill_coefficient, 0.2);
    EXPECT_DOUBLE_EQ(b.thrusters[2].F_ref, 5.0);
}

TEST(Config, OverrideErrors) {
    ScenarioSource s = demo_source();
    s.set_assignment("thruster[99].F_ref=1");
    EXPECT_THROW(s.build(), ConfigInvalid);
    ScenarioSource t = demo_source();
    EXPECT_THROW(t.set_assignment("no_equals_sign"), ConfigInvalid);
}

TEST(Config, Rejections) {
    EXPECT_THROW(from_text(minimal_scenario() + "\n[pil]\ntransport = \"carrier_pigeon\"\n"), ConfigInvalid);
    EXPECT_THROW(from_text(minimal_scenario() + "\n[fsw]\nrate_hz = -1\n"), ConfigInvalid);
    EXPECT_THROW(demo_with("[[fault]]\nthruster = \"NOPE\"\nkind = \"StuckOpen\"\nt_onset = 1.0\n").build(),
                 UnknownThrusterId);
    EXPECT_THROW(demo_with("[[fault]]\nthruster = \"XP1\"\nkind = \"Degraded\"\neta = 2.0\nt_onset = 1.0\n").build(),
                 ConfigInvalid);
    EXPECT_THROW(from_text("[sim\n"), ConfigInvalid);
}

TEST(Config, FaultTableParsed) {
    const Scenario sc = demo_with(
                            "[[fault]]\nthruster = \"XP1\"\nkind = \"Leak\"\nmdot = 0.5\nthrust_fraction = 0.05\n"
                            "t_onset = 100.0\n")
                            .build();
    ASSERT_EQ(sc.faults.size(), 1u);
    EXPECT_EQ(sc.faults[0].thruster, "XP1");
    EXPECT_DOUBLE_EQ(sc.faults[0].thruster_fault.t_onset, 100.0);
    const auto* leak = std::get_if<actuation::Leak>(&sc.faults[0].thruster_fault.kind);
    ASSERT_NE(leak, nullptr);
    EXPECT_DOUBLE_EQ(leak->mdot, 0.5);
}

TEST(Config, CampaignFiles) {
    const CampaignFile mc = load_campaign_file(upstage::testing::scenario_dir() / "demo_mc.toml");
    EXPECT_EQ(mc.campaign.kind, "mc");
    EXPECT_EQ(mc.campaign.n, 32);
    ASSERT_TRUE(mc.scenario);
    EXPECT_EQ(mc.scenario->filename(), "demo.toml");
    const CampaignFile ce = load_campaign_file(upstage::testing::scenario_dir() / "toy_ce.toml");
    EXPECT_EQ(ce.campaign.kind, "ce");
    EXPECT_EQ(ce.campaign.params.size(), 3u);
}
