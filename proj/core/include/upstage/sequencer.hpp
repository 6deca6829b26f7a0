#pragma once

// Mission and vehicle management: a line-oriented state-machine language,
// parsed once, interpreted deterministically at the flight-software rate.
//
//   sequence NAME {
//     [initial] state NAME {
//       entry: ACTION(args); ACTION(args);
//       goto TARGET when SIGNAL CMP VALUE [UNIT] [for DURATION];
//       goto TARGET after DURATION;
//     }
//     on SIGNAL CMP VALUE [UNIT] [for DURATION] goto TARGET;
//   }
//
// '#' starts a comment. Values are converted to SI at parse time.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "upstage/math.hpp"

namespace upstage::seq {

enum class Comparator { Less, Greater, LessEqual, GreaterEqual };

const char* comparator_text(Comparator c);
bool compare(Comparator c, double value, double threshold);

/// Physical dimension of a telemetry signal, used to check unit suffixes.
enum class Dimension { Dimensionless, Time, Angle, AngularRate, Mass, MassRate, Pressure, Temperature };

/// Published signal dictionary: name -> dimension.
using SignalDictionary = std::map<std::string, Dimension, std::less<>>;

struct Condition {
    std::string signal;
    Comparator cmp = Comparator::Greater;
    double threshold = 0.0;  // SI
    double persistence = 0.0;  // s

    bool operator==(const Condition&) const = default;
};

enum class ControllerMode : unsigned { PhasePlane = 0, Mpc = 1, Adaptive = 2 };

const char* mode_name(ControllerMode m);
std::optional<ControllerMode> parse_mode(std::string_view name);

struct SetRateTarget {
    Vec3 rate = Vec3::Zero();  // rad/s
    bool operator==(const SetRateTarget& o) const { return rate == o.rate; }
};
struct Arm {
    std::string device;
    bool operator==(const Arm&) const = default;
};
struct Fire {
    std::string device;
    bool operator==(const Fire&) const = default;
};
struct SetController {
    ControllerMode mode = ControllerMode::PhasePlane;
    bool operator==(const SetController&) const = default;
};
struct SetFlag {
    std::string name;
    bool operator==(const SetFlag&) const = default;
};
using Action = std::variant<SetRateTarget, Arm, Fire, SetController, SetFlag>;

struct Transition {
    std::size_t target = 0;
    std::optional<Condition> when;  // guarded transition
    double after = 0.0;             // timed transition when !when

    bool operator==(const Transition&) const = default;
};

struct State {
    std::string name;
    std::vector<Action> entry;
    std::vector<Transition> transitions;

    bool operator==(const State&) const = default;
};

struct GlobalHandler {
    Condition when;
    std::size_t target = 0;

    bool operator==(const GlobalHandler&) const = default;
};

struct SequenceProgram {
    std::string name;
    std::vector<State> states;
    std::vector<GlobalHandler> globals;
    std::size_t initial = 0;
    std::vector<std::string> flags;  // set_flag names, in first-use order

    std::optional<std::size_t> find_state(std::string_view name) const;
    bool operator==(const SequenceProgram&) const = default;
};

struct ParseContext {
    SignalDictionary signals;
    std::vector<std::string> devices;
};

/// Telemetry dictionary published to sequences (base signals plus one
/// "<device>_phase" entry per separation device).
SignalDictionary telemetry_dictionary(const std::vector<std::string>& devices);

/// Parses a program. Throws SyntaxError, UnknownState, UnknownSignal,
/// UnknownDevice or DuplicateState; messages carry line:col.
SequenceProgram parse_sequence(std::string_view text, const ParseContext& context);

/// Canonical text form; values printed in SI with round-trip precision.
std::string to_text(const SequenceProgram& program);

/// Signal values for one tick (SI units).
using Telemetry = std::map<std::string, double, std::less<>>;

struct HoldState {
    double held = 0.0;
    bool operator==(const HoldState&) const = default;
};

struct ConditionResult {
    bool fired = false;
    HoldState hold;
};

/// Hold timer accumulates dt while the comparator holds and resets on
/// false; fires once held >= persistence. Throws MissingSignal.
ConditionResult check_condition(const Condition& cond, const Telemetry& telemetry, const HoldState& hold, double dt);

struct InterpState {
    bool started = false;
    std::size_t current = 0;
    double t_entry = 0.0;
    std::vector<HoldState> local_holds;   // per transition of the current state
    std::vector<HoldState> global_holds;  // per global handler
    std::vector<bool> global_spent;       // handlers are one-shot

    bool operator==(const InterpState&) const = default;
};

struct StepResult {
    std::vector<Action> actions;
    std::optional<std::size_t> entered;  // state entered on this tick
};

/// One interpreter tick. Globals are evaluated first (priority as written),
/// then the current state's transitions; at most one transition per tick.
StepResult step_sequencer(const SequenceProgram& program, InterpState& state, const Telemetry& telemetry, double t,
                          double dt);

/// Forced jump (operator override). Emits the target's entry actions.
StepResult jump_to(const SequenceProgram& program, InterpState& state, std::size_t target, double t);

}  // namespace upstage::seq
