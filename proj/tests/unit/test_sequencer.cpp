#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gen.hpp"
#include "upstage/config.hpp"
#include "upstage/error.hpp"
#include "upstage/sequencer.hpp"

using namespace upstage;
using namespace upstage::seq;
using upstage::testing::for_all;
using upstage::testing::Gen;

namespace {

const std::vector<std::string> kDevices = {"PL1", "STRUCT", "PL2"};

ParseContext context() { return {telemetry_dictionary(kDevices), kDevices}; }

SequenceProgram demo() {
    return parse_sequence(read_text_file(upstage::testing::scenario_dir() / "demo.seq"), context());
}

Telemetry quiet() {
    Telemetry t;
    for (const auto& [name, dim] : telemetry_dictionary(kDevices)) t[name] = 0.0;
    return t;
}

std::string state_name(const SequenceProgram& p, const InterpState& s) { return p.states[s.current].name; }

const char* kTwoState = R"(
sequence T {
  initial state A {
    entry: set_flag(a);
    goto B when p_tank > 5 bar for 2 s;
  }
  state B {
    entry: set_flag(b);
  }
}
)";

}  // namespace

TEST(Parse, DemoShape) {
    const SequenceProgram p = demo();
    EXPECT_EQ(p.name, "DEMO");
    ASSERT_EQ(p.states.size(), 7u);
    EXPECT_EQ(p.globals.size(), 1u);
    EXPECT_EQ(p.states[p.initial].name, "SPIN_UP");
    const char* chain[] = {"SPIN_UP", "COAST", "RELEASE_PL1", "RELEASE_STRUCT", "RELEASE_PL2", "SAFE"};
    for (int i = 0; i + 1 < 6; ++i) {
        const auto& s = p.states[*p.find_state(chain[i])];
        ASSERT_EQ(s.transitions.size(), 1u);
        EXPECT_EQ(p.states[s.transitions[0].target].name, chain[i + 1]);
    }
    EXPECT_EQ(p.states[p.globals[0].target].name, "EMERGENCY_RELEASE");
    EXPECT_EQ(p.globals[0].when.signal, "depletion_rate");
    EXPECT_DOUBLE_EQ(p.globals[0].when.threshold, 0.05);
    EXPECT_DOUBLE_EQ(p.globals[0].when.persistence, 2.0);
}

TEST(Parse, EmptyInputIsSyntaxErrorAtOrigin) {
    try {
        parse_sequence("", context());
        FAIL();
    } catch (const SyntaxError& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_EQ(e.column(), 1u);
    }
}

TEST(Parse, UnknownTargetReportsLine) {
    const char* text = "sequence S {\n  initial state A {\n    goto NOWHERE after 1 s;\n  }\n}\n";
    try {
        parse_sequence(text, context());
        FAIL();
    } catch (const UnknownState& e) {
        EXPECT_NE(std::string(e.what()).find("NOWHERE"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find(" at 3:"), std::string::npos);
    }
}

TEST(Parse, Rejections) {
    EXPECT_THROW(parse_sequence("sequence S { initial state A { } state A { } }", context()), DuplicateState);
    EXPECT_THROW(parse_sequence("sequence S { initial state A { goto A when bogus > 1; } }", context()), UnknownSignal);
    EXPECT_THROW(parse_sequence("sequence S { initial state A { entry: fire(PL9); } }", context()), UnknownDevice);
    EXPECT_THROW(parse_sequence("sequence S { initial state A { goto A when p_tank > 1 kg; } }", context()), SyntaxError);
    EXPECT_THROW(parse_sequence("sequence S { state A { } }", context()), SyntaxError);
    EXPECT_THROW(parse_sequence("sequence S { initial state A { } initial state B { } }", context()), SyntaxError);
    EXPECT_THROW(parse_sequence("sequence S { initial state A { entry: set_controller(pid); } }", context()), SyntaxError);
}

TEST(Parse, UnitsConvertToSi) {
    const auto p = parse_sequence(kTwoState, context());
    EXPECT_DOUBLE_EQ(p.states[0].transitions[0].when->threshold, 5e5);
    const auto q = parse_sequence("sequence S { initial state A { entry: set_rate_target(0, 0, 3); } }", context());
    EXPECT_NEAR(std::get<SetRateTarget>(q.states[0].entry[0]).rate.z(), 3.0 * kDeg, 1e-15);
}

TEST(Parse, RoundTripThroughText) {
    const SequenceProgram p = demo();
    const SequenceProgram q = parse_sequence(to_text(p), context());
    EXPECT_EQ(p, q);
    EXPECT_EQ(to_text(p), to_text(q));
}

TEST(Condition, ZeroPersistenceFiresImmediately) {
    Condition c{"p_tank", Comparator::Greater, 1.0, 0.0};
    EXPECT_TRUE(check_condition(c, {{"p_tank", 2.0}}, {}, 0.1).fired);
}

TEST(Condition, EqualityIsNotGreater) {
    Condition c{"p_tank", Comparator::Greater, 1.0, 0.0};
    EXPECT_FALSE(check_condition(c, {{"p_tank", 1.0}}, {}, 0.1).fired);
    c.cmp = Comparator::GreaterEqual;
    EXPECT_TRUE(check_condition(c, {{"p_tank", 1.0}}, {}, 0.1).fired);
}

TEST(Condition, AlternatingNeverFires) {
    const Condition c{"p_tank", Comparator::Greater, 1.0, 0.2};
    HoldState h;
    for (int k = 0; k < 100; ++k) {
        const auto r = check_condition(c, {{"p_tank", k % 2 == 0 ? 2.0 : 0.0}}, h, 0.1);
        EXPECT_FALSE(r.fired);
        h = r.hold;
    }
}

TEST(Condition, MissingSignalThrows) {
    EXPECT_THROW(check_condition({"nope", Comparator::Less, 0.0, 0.0}, {}, {}, 0.1), MissingSignal);
}

TEST(Interpreter, FirstTickEntersInitialOnce) {
    const auto p = parse_sequence(kTwoState, context());
    InterpState s;
    Telemetry tel = quiet();
    auto r = step_sequencer(p, s, tel, 0.0, 0.1);
    ASSERT_EQ(r.actions.size(), 1u);
    EXPECT_EQ(std::get<SetFlag>(r.actions[0]).name, "a");
    for (int k = 1; k < 50; ++k) EXPECT_TRUE(step_sequencer(p, s, tel, 0.1 * k, 0.1).actions.empty());
}

TEST(Interpreter, PersistenceResetsOnFalse) {
    const auto p = parse_sequence(kTwoState, context());
    InterpState s;
    Telemetry tel = quiet();
    step_sequencer(p, s, tel, 0.0, 0.1);
    int k = 1;
    tel["p_tank"] = 6e5;
    for (; k <= 15; ++k) EXPECT_FALSE(step_sequencer(p, s, tel, 0.1 * k, 0.1).entered);
    tel["p_tank"] = 0.0;
    EXPECT_FALSE(step_sequencer(p, s, tel, 0.1 * k++, 0.1).entered);
    tel["p_tank"] = 6e5;
    for (int j = 0; j < 19; ++j) EXPECT_FALSE(step_sequencer(p, s, tel, 0.1 * k++, 0.1).entered);
    const auto r = step_sequencer(p, s, tel, 0.1 * k, 0.1);
    ASSERT_TRUE(r.entered);
    EXPECT_EQ(state_name(p, s), "B");
    ASSERT_EQ(r.actions.size(), 1u);
    EXPECT_EQ(std::get<SetFlag>(r.actions[0]).name, "b");
}

TEST(Interpreter, DepletionDuringCoastTriggersEmergency) {
    const SequenceProgram p = demo();
    InterpState s;
    Telemetry tel = quiet();
    double t = 0.0;
    step_sequencer(p, s, tel, t, 0.1);
    for (int k = 0; k < 300 && state_name(p, s) != "COAST"; ++k) step_sequencer(p, s, tel, t += 0.1, 0.1);
    ASSERT_EQ(state_name(p, s), "COAST");
    tel["depletion_rate"] = 0.2;
    StepResult r;
    int ticks = 0;
    while (!(r = step_sequencer(p, s, tel, t += 0.1, 0.1)).entered && ticks < 100) ++ticks;
    EXPECT_EQ(state_name(p, s), "EMERGENCY_RELEASE");
    EXPECT_EQ(ticks, 19);
    int fires = 0;
    for (const auto& a : r.actions) fires += std::holds_alternative<Fire>(a);
    EXPECT_EQ(fires, 3);
}

TEST(Interpreter, GlobalPreemptsLocalOnSameTick) {
    const char* text = R"(
sequence G {
  initial state A {
    goto B when p_tank > 1 Pa;
  }
  state B { }
  state C { }
  on p_tank > 1 Pa goto C;
}
)";
    const auto p = parse_sequence(text, context());
    InterpState s;
    Telemetry tel = quiet();
    step_sequencer(p, s, tel, 0.0, 0.1);
    tel["p_tank"] = 2.0;
    step_sequencer(p, s, tel, 0.1, 0.1);
    EXPECT_EQ(state_name(p, s), "C");
}

TEST(Interpreter, NominalDemoOrder) {
    const SequenceProgram p = demo();
    InterpState s;
    Telemetry tel = quiet();
    std::vector<std::string> visited;
    std::vector<std::string> fired;
    for (int k = 0; k < 8000; ++k) {
        const double t = 0.1 * k;
        // devices separate 0.5 s after their fire command
        for (const auto& a : step_sequencer(p, s, tel, t, 0.1).actions)
            if (const auto* f = std::get_if<Fire>(&a)) fired.push_back(f->device);
        if (visited.empty() || visited.back() != state_name(p, s)) visited.push_back(state_name(p, s));
        for (const auto& d : fired) tel[d + "_phase"] = 3.0;
    }
    const std::vector<std::string> expect = {"SPIN_UP", "COAST", "RELEASE_PL1", "RELEASE_STRUCT", "RELEASE_PL2", "SAFE"};
    EXPECT_EQ(visited, expect);
    EXPECT_EQ(fired, (std::vector<std::string>{"PL1", "STRUCT", "PL2"}));
}

TEST(InterpreterProperty, DeterministicAndSingleTransitionPerTick) {
    const SequenceProgram p = demo();
    for_all(20, 50, [&](Gen& g, int) {
        std::vector<Telemetry> tape;
        Telemetry tel = quiet();
        for (int k = 0; k < 2000; ++k) {
            if (g.coin(0.05)) tel["depletion_rate"] = g.coin() ? 0.1 : 0.0;
            if (g.coin(0.01)) tel[kDevices[g.integer(0, 2)] + "_phase"] = g.integer(0, 3);
            tape.push_back(tel);
        }
        InterpState a, b;
        for (int k = 0; k < 2000; ++k) {
            const auto before = a.current;
            const auto ra = step_sequencer(p, a, tape[k], 0.1 * k, 0.1);
            const auto rb = step_sequencer(p, b, tape[k], 0.1 * k, 0.1);
            ASSERT_EQ(a, b);
            ASSERT_EQ(ra.actions, rb.actions);
            if (!ra.entered) {
                ASSERT_EQ(a.current, before);
            }
        }
    });
}
