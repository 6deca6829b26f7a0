#include "upstage/sequencer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "upstage/error.hpp"

namespace upstage::seq {

namespace {

constexpr double kTimeEps = 1e-9;

enum class Tok { Ident, Number, Punct, Cmp, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    double number = 0.0;
    std::size_t line = 1;
    std::size_t col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t;
            t.line = line_;
            t.col = col_;
            if (pos_ >= src_.size()) {
                t.kind = Tok::End;
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t start = pos_;
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                              src_[pos_] == '_' || src_[pos_] == '.'))
                    advance();
                t.kind = Tok::Ident;
                t.text = std::string(src_.substr(start, pos_ - start));
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                       ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                        (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.'))) {
                std::size_t start = pos_;
                advance();
                while (pos_ < src_.size()) {
                    const char d = src_[pos_];
                    if (std::isdigit(static_cast<unsigned char>(d)) || d == '.') {
                        advance();
                    } else if ((d == 'e' || d == 'E') && pos_ + 1 < src_.size() &&
                               (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '-' ||
                                src_[pos_ + 1] == '+')) {
                        advance();
                        advance();
                    } else {
                        break;
                    }
                }
                t.kind = Tok::Number;
                t.text = std::string(src_.substr(start, pos_ - start));
                const char* b = t.text.data();
                if (*b == '+') ++b;
                const auto res = std::from_chars(b, t.text.data() + t.text.size(), t.number);
                if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size())
                    throw SyntaxError(t.line, t.col, "number");
            } else if (c == '<' || c == '>') {
                advance();
                t.kind = Tok::Cmp;
                t.text = std::string(1, c);
                if (pos_ < src_.size() && src_[pos_] == '=') {
                    advance();
                    t.text += '=';
                }
            } else if (std::string_view("{}();:,/").find(c) != std::string_view::npos) {
                advance();
                t.kind = Tok::Punct;
                t.text = std::string(1, c);
            } else {
                throw SyntaxError(t.line, t.col, "token");
            }
            out.push_back(std::move(t));
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }
    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

struct UnitInfo {
    Dimension dim;
    double scale;
};

const std::map<std::string, UnitInfo, std::less<>>& unit_table() {
    static const std::map<std::string, UnitInfo, std::less<>> table = {
        {"s", {Dimension::Time, 1.0}},          {"ms", {Dimension::Time, 1e-3}},
        {"min", {Dimension::Time, 60.0}},       {"h", {Dimension::Time, 3600.0}},
        {"deg", {Dimension::Angle, kDeg}},      {"rad", {Dimension::Angle, 1.0}},
        {"deg/s", {Dimension::AngularRate, kDeg}}, {"rad/s", {Dimension::AngularRate, 1.0}},
        {"kg", {Dimension::Mass, 1.0}},         {"g", {Dimension::Mass, 1e-3}},
        {"kg/s", {Dimension::MassRate, 1.0}},   {"g/s", {Dimension::MassRate, 1e-3}},
        {"Pa", {Dimension::Pressure, 1.0}},     {"kPa", {Dimension::Pressure, 1e3}},
        {"MPa", {Dimension::Pressure, 1e6}},    {"bar", {Dimension::Pressure, 1e5}},
        {"K", {Dimension::Temperature, 1.0}},
    };
    return table;
}

bool is_keyword(std::string_view s) {
    return s == "sequence" || s == "state" || s == "initial" || s == "entry" || s == "goto" || s == "when" ||
           s == "after" || s == "for" || s == "on";
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string at(const Token& t) { return " at " + std::to_string(t.line) + ":" + std::to_string(t.col); }

class Parser {
public:
    Parser(std::vector<Token> toks, const ParseContext& ctx) : toks_(std::move(toks)), ctx_(ctx) {}

    SequenceProgram parse() {
        expect_ident("sequence");
        prog_.name = ident("sequence name").text;
        expect_punct("{");
        bool have_initial = false;
        while (!is_punct("}")) {
            if (peek().kind == Tok::End) fail("'}'");
            if (is_ident("on")) {
                parse_global();
            } else if (is_ident("state") || is_ident("initial")) {
                bool initial = false;
                if (is_ident("initial")) {
                    if (have_initial) fail("at most one initial state");
                    next();
                    initial = have_initial = true;
                }
                parse_state(initial);
            } else {
                fail("'state', 'initial' or 'on'");
            }
        }
        expect_punct("}");
        if (peek().kind != Tok::End) fail("end of input");
        if (prog_.states.empty()) throw SyntaxError(toks_.back().line, toks_.back().col, "at least one state");
        if (!have_initial) throw SyntaxError(toks_.back().line, toks_.back().col, "an initial state");
        resolve();
        return std::move(prog_);
    }

private:
    struct Pending {
        std::size_t* slot;
        std::string name;
        Token where;
    };

    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(peek().line, peek().col, expected);
    }
    bool is_ident(std::string_view s) const { return peek().kind == Tok::Ident && peek().text == s; }
    bool is_punct(std::string_view s) const { return peek().kind == Tok::Punct && peek().text == s; }
    void expect_ident(std::string_view s) {
        if (!is_ident(s)) fail("'" + std::string(s) + "'");
        next();
    }
    void expect_punct(std::string_view s) {
        if (!is_punct(s)) fail("'" + std::string(s) + "'");
        next();
    }
    const Token& ident(const std::string& what) {
        if (peek().kind != Tok::Ident || is_keyword(peek().text)) fail(what);
        return next();
    }
    double number(const std::string& what) {
        if (peek().kind != Tok::Number) fail(what);
        return next().number;
    }

    // Optional unit after a value; returns the scale, checks the dimension.
    double unit(Dimension dim, bool allow_default_time = false) {
        if (peek().kind != Tok::Ident || is_keyword(peek().text)) return 1.0;
        const Token u = peek();
        std::string name = u.text;
        next();
        if (is_punct("/")) {
            next();
            if (peek().kind != Tok::Ident) fail("unit denominator");
            name += "/" + next().text;
        }
        const auto it = unit_table().find(name);
        if (it == unit_table().end()) throw SyntaxError(u.line, u.col, "known unit");
        if (dim != Dimension::Dimensionless && it->second.dim != dim) throw SyntaxError(u.line, u.col, "unit compatible with signal");
        (void)allow_default_time;
        return it->second.scale;
    }

    double duration() {
        const double v = number("duration");
        return v * unit(Dimension::Time);
    }

    Comparator comparator() {
        if (peek().kind != Tok::Cmp) fail("comparator");
        const std::string c = next().text;
        if (c == "<") return Comparator::Less;
        if (c == ">") return Comparator::Greater;
        if (c == "<=") return Comparator::LessEqual;
        return Comparator::GreaterEqual;
    }

    Condition condition() {
        Condition c;
        const Token sig = ident("signal name");
        const auto it = ctx_.signals.find(sig.text);
        if (it == ctx_.signals.end()) throw UnknownSignal(sig.text + at(sig));
        c.signal = sig.text;
        c.cmp = comparator();
        const double v = number("threshold value");
        c.threshold = v * unit(it->second);
        if (is_ident("for")) {
            next();
            c.persistence = duration();
        }
        return c;
    }

    std::string device(const Token& where) {
        const Token d = ident("device name");
        if (std::find(ctx_.devices.begin(), ctx_.devices.end(), d.text) == ctx_.devices.end())
            throw UnknownDevice(d.text + at(d));
        (void)where;
        return d.text;
    }

    Action action() {
        const Token name = ident("action");
        expect_punct("(");
        Action a;
        if (name.text == "set_rate_target") {
            Vec3 r;
            for (int i = 0; i < 3; ++i) {
                if (i > 0) expect_punct(",");
                const double v = number("rate component");
                // bare numbers default to deg/s here
                const double scale = (peek().kind == Tok::Ident) ? unit(Dimension::AngularRate) : kDeg;
                r[i] = v * scale;
            }
            a = SetRateTarget{r};
        } else if (name.text == "arm") {
            a = Arm{device(name)};
        } else if (name.text == "fire") {
            a = Fire{device(name)};
        } else if (name.text == "set_controller") {
            const Token m = ident("controller mode");
            const auto mode = parse_mode(m.text);
            if (!mode) throw SyntaxError(m.line, m.col, "phase_plane, mpc or adaptive");
            a = SetController{*mode};
        } else if (name.text == "set_flag") {
            const Token f = ident("flag name");
            if (std::find(prog_.flags.begin(), prog_.flags.end(), f.text) == prog_.flags.end()) {
                if (prog_.flags.size() >= 16) throw SyntaxError(f.line, f.col, "at most 16 distinct flags");
                prog_.flags.push_back(f.text);
            }
            a = SetFlag{f.text};
        } else {
            throw SyntaxError(name.line, name.col, "set_rate_target, arm, fire, set_controller or set_flag");
        }
        expect_punct(")");
        return a;
    }

    void parse_state(bool initial) {
        expect_ident("state");
        const Token name = ident("state name");
        for (const auto& s : prog_.states)
            if (s.name == name.text) throw DuplicateState(name.text + at(name));
        if (initial) prog_.initial = prog_.states.size();
        prog_.states.push_back(State{name.text, {}, {}});
        const std::size_t index = prog_.states.size() - 1;
        expect_punct("{");
        while (!is_punct("}")) {
            if (is_ident("entry")) {
                next();
                expect_punct(":");
                do {
                    Action a = action();
                    prog_.states[index].entry.push_back(std::move(a));
                    expect_punct(";");
                } while (peek().kind == Tok::Ident && !is_keyword(peek().text) && peek(1).kind == Tok::Punct &&
                         peek(1).text == "(");
            } else if (is_ident("goto")) {
                next();
                const Token target = ident("target state");
                Transition tr;
                if (is_ident("when")) {
                    next();
                    tr.when = condition();
                } else if (is_ident("after")) {
                    next();
                    tr.after = duration();
                } else {
                    fail("'when' or 'after'");
                }
                expect_punct(";");
                prog_.states[index].transitions.push_back(std::move(tr));
                pending_.push_back({nullptr, target.text, target});
                pending_index_.push_back({index, prog_.states[index].transitions.size() - 1, false});
            } else {
                fail("'entry', 'goto' or '}'");
            }
        }
        expect_punct("}");
    }

    void parse_global() {
        expect_ident("on");
        GlobalHandler g;
        g.when = condition();
        expect_ident("goto");
        const Token target = ident("target state");
        expect_punct(";");
        prog_.globals.push_back(std::move(g));
        pending_.push_back({nullptr, target.text, target});
        pending_index_.push_back({prog_.globals.size() - 1, 0, true});
    }

    void resolve() {
        for (std::size_t i = 0; i < pending_.size(); ++i) {
            const auto found = prog_.find_state(pending_[i].name);
            if (!found) throw UnknownState(pending_[i].name + at(pending_[i].where));
            const auto& ix = pending_index_[i];
            if (ix.global)
                prog_.globals[ix.a].target = *found;
            else
                prog_.states[ix.a].transitions[ix.b].target = *found;
        }
    }

    struct Index {
        std::size_t a;
        std::size_t b;
        bool global;
    };

    std::vector<Token> toks_;
    const ParseContext& ctx_;
    std::size_t pos_ = 0;
    SequenceProgram prog_;
    std::vector<Pending> pending_;
    std::vector<Index> pending_index_;
};

void enter_state(const SequenceProgram& p, InterpState& st, std::size_t target, double t, StepResult& out) {
    st.current = target;
    st.t_entry = t;
    st.local_holds.assign(p.states[target].transitions.size(), HoldState{});
    out.entered = target;
    out.actions.insert(out.actions.end(), p.states[target].entry.begin(), p.states[target].entry.end());
}

}  // namespace

const char* comparator_text(Comparator c) {
    switch (c) {
        case Comparator::Less: return "<";
        case Comparator::Greater: return ">";
        case Comparator::LessEqual: return "<=";
        case Comparator::GreaterEqual: return ">=";
    }
    return "?";
}

bool compare(Comparator c, double v, double th) {
    switch (c) {
        case Comparator::Less: return v < th;
        case Comparator::Greater: return v > th;
        case Comparator::LessEqual: return v <= th;
        case Comparator::GreaterEqual: return v >= th;
    }
    return false;
}

const char* mode_name(ControllerMode m) {
    switch (m) {
        case ControllerMode::PhasePlane: return "phase_plane";
        case ControllerMode::Mpc: return "mpc";
        case ControllerMode::Adaptive: return "adaptive";
    }
    return "?";
}

std::optional<ControllerMode> parse_mode(std::string_view name) {
    if (name == "phase_plane") return ControllerMode::PhasePlane;
    if (name == "mpc") return ControllerMode::Mpc;
    if (name == "adaptive") return ControllerMode::Adaptive;
    return std::nullopt;
}

std::optional<std::size_t> SequenceProgram::find_state(std::string_view n) const {
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i].name == n) return i;
    return std::nullopt;
}

SignalDictionary telemetry_dictionary(const std::vector<std::string>& devices) {
    SignalDictionary d = {
        {"t", Dimension::Time},
        {"state_time", Dimension::Time},
        {"w_x", Dimension::AngularRate},
        {"w_y", Dimension::AngularRate},
        {"w_z", Dimension::AngularRate},
        {"w_norm", Dimension::AngularRate},
        {"w_transverse", Dimension::AngularRate},
        {"p_tank", Dimension::Pressure},
        {"m_prop", Dimension::Mass},
        {"depletion_rate", Dimension::MassRate},
    };
    for (const auto& dev : devices) d.emplace(dev + "_phase", Dimension::Dimensionless);
    return d;
}

SequenceProgram parse_sequence(std::string_view text, const ParseContext& context) {
    Lexer lexer(text);
    Parser parser(lexer.run(), context);
    return parser.parse();
}

std::string to_text(const SequenceProgram& p) {
    std::ostringstream os;
    auto cond_text = [](const Condition& c) {
        std::string s = c.signal + " " + comparator_text(c.cmp) + " " + fmt_double(c.threshold);
        if (c.persistence > 0.0) s += " for " + fmt_double(c.persistence) + " s";
        return s;
    };
    os << "sequence " << p.name << " {\n";
    for (std::size_t i = 0; i < p.states.size(); ++i) {
        const State& s = p.states[i];
        os << "  " << (i == p.initial ? "initial " : "") << "state " << s.name << " {\n";
        if (!s.entry.empty()) {
            os << "    entry:";
            for (const auto& a : s.entry) {
                os << ' ';
                std::visit(
                    [&](const auto& act) {
                        using T = std::decay_t<decltype(act)>;
                        if constexpr (std::is_same_v<T, SetRateTarget>) {
                            os << "set_rate_target(" << fmt_double(act.rate.x()) << " rad/s, "
                               << fmt_double(act.rate.y()) << " rad/s, " << fmt_double(act.rate.z()) << " rad/s)";
                        } else if constexpr (std::is_same_v<T, Arm>) {
                            os << "arm(" << act.device << ")";
                        } else if constexpr (std::is_same_v<T, Fire>) {
                            os << "fire(" << act.device << ")";
                        } else if constexpr (std::is_same_v<T, SetController>) {
                            os << "set_controller(" << mode_name(act.mode) << ")";
                        } else {
                            os << "set_flag(" << act.name << ")";
                        }
                    },
                    a);
                os << ';';
            }
            os << '\n';
        }
        for (const auto& tr : s.transitions) {
            os << "    goto " << p.states[tr.target].name;
            if (tr.when)
                os << " when " << cond_text(*tr.when);
            else
                os << " after " << fmt_double(tr.after) << " s";
            os << ";\n";
        }
        os << "  }\n";
    }
    for (const auto& g : p.globals) os << "  on " << cond_text(g.when) << " goto " << p.states[g.target].name << ";\n";
    os << "}\n";
    return os.str();
}

ConditionResult check_condition(const Condition& cond, const Telemetry& telemetry, const HoldState& hold, double dt) {
    const auto it = telemetry.find(cond.signal);
    if (it == telemetry.end()) throw MissingSignal(cond.signal);
    ConditionResult r;
    if (compare(cond.cmp, it->second, cond.threshold)) {
        r.hold.held = hold.held + dt;
        r.fired = r.hold.held + kTimeEps * std::max(1.0, cond.persistence) >= cond.persistence;
    } else {
        r.hold.held = 0.0;
    }
    return r;
}

StepResult step_sequencer(const SequenceProgram& p, InterpState& st, const Telemetry& tel, double t, double dt) {
    StepResult out;
    if (!st.started) {
        st.started = true;
        st.global_holds.assign(p.globals.size(), HoldState{});
        st.global_spent.assign(p.globals.size(), false);
        enter_state(p, st, p.initial, t, out);
        return out;
    }

    std::optional<std::size_t> target;
    for (std::size_t i = 0; i < p.globals.size(); ++i) {
        const auto r = check_condition(p.globals[i].when, tel, st.global_holds[i], dt);
        st.global_holds[i] = r.hold;
        if (r.fired && !target && !st.global_spent[i] && st.current != p.globals[i].target) {
            target = p.globals[i].target;
            st.global_spent[i] = true;
        }
    }

    const State& cur = p.states[st.current];
    for (std::size_t j = 0; j < cur.transitions.size(); ++j) {
        const Transition& tr = cur.transitions[j];
        bool fired = false;
        if (tr.when) {
            const auto r = check_condition(*tr.when, tel, st.local_holds[j], dt);
            st.local_holds[j] = r.hold;
            fired = r.fired;
        } else {
            fired = t - st.t_entry + kTimeEps * std::max(1.0, tr.after) >= tr.after;
        }
        if (fired && !target) target = tr.target;
    }

    if (target) enter_state(p, st, *target, t, out);
    return out;
}

StepResult jump_to(const SequenceProgram& p, InterpState& st, std::size_t target, double t) {
    StepResult out;
    if (!st.started) {
        st.started = true;
        st.global_holds.assign(p.globals.size(), HoldState{});
        st.global_spent.assign(p.globals.size(), false);
    }
    enter_state(p, st, target, t, out);
    return out;
}

}  // namespace upstage::seq
